//! Dense vector arithmetic, positive diagonal matrices and projection onto
//! axis-aligned boxes.
//!
//! Every [`Vector`] holds only finite values. Operations that could produce a
//! NaN or an infinity return [`Error::NonFinite`] instead of storing it.

use std::fmt;
use std::ops::Index;

use crate::error::{check_dims, Error, Result};

/// A non-empty vector of finite `f64` values.
#[derive(Clone, PartialEq)]
pub struct Vector {
    data: Vec<f64>,
}

impl Vector {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Domain("vector dimension must be positive".into()));
        }
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("element {i} is {}", data[i])));
        }
        Ok(Self { data })
    }

    pub fn from_slice(data: &[f64]) -> Result<Self> {
        Self::new(data.to_vec())
    }

    /// # Panics
    /// If `dim == 0` or `value` is not finite.
    pub fn filled(dim: usize, value: f64) -> Self {
        assert!(dim > 0, "vector dimension must be positive");
        assert!(value.is_finite(), "fill value must be finite");
        Self {
            data: vec![value; dim],
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::filled(dim, 0.0)
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.data
    }

    /// Applies `f` to every element; fails if any result is non-finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.data.iter().map(|&x| f(x)).collect())
    }

    pub fn scale(&self, c: f64) -> Result<Self> {
        self.map(|x| c * x)
    }

    pub fn l2_norm(&self) -> f64 {
        l2_norm(self)
    }

    pub fn linf_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, x| acc.max(x.abs()))
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn dot(&self, other: &Vector) -> Result<f64> {
        check_dims(self.dim(), other.dim())?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn add(&self, other: &Vector) -> Result<Vector> {
        elementwise(ElementwiseOp::Add, self, other)
    }

    pub fn sub(&self, other: &Vector) -> Result<Vector> {
        elementwise(ElementwiseOp::Sub, self, other)
    }

    pub fn mul(&self, other: &Vector) -> Result<Vector> {
        elementwise(ElementwiseOp::Mul, self, other)
    }
}

impl Index<usize> for Vector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl fmt::Debug for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.data).finish()
    }
}

impl TryFrom<Vec<f64>> for Vector {
    type Error = Error;

    fn try_from(data: Vec<f64>) -> Result<Self> {
        Self::new(data)
    }
}

impl<'a> IntoIterator for &'a Vector {
    type Item = &'a f64;
    type IntoIter = std::slice::Iter<'a, f64>;

    fn into_iter(self) -> Self::IntoIter {
        self.data.iter()
    }
}

/// Diagonal matrix with strictly positive entries.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagMatrix {
    diagonal: Vector,
}

impl DiagMatrix {
    pub fn new(diagonal: Vector) -> Result<Self> {
        if let Some(i) = diagonal.iter().position(|&x| x <= 0.0) {
            return Err(Error::Domain(format!(
                "diagonal entry {i} is {} but must be positive",
                diagonal[i]
            )));
        }
        Ok(Self { diagonal })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            diagonal: Vector::filled(dim, 1.0),
        }
    }

    pub fn diagonal(&self) -> &Vector {
        &self.diagonal
    }

    pub fn dim(&self) -> usize {
        self.diagonal.dim()
    }
}

/// Axis-aligned box `{w : lo ≤ w ≤ hi}`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeasibleBox {
    lo: Vector,
    hi: Vector,
}

impl FeasibleBox {
    pub fn new(lo: Vector, hi: Vector) -> Result<Self> {
        check_dims(lo.dim(), hi.dim())?;
        if let Some(i) = (0..lo.dim()).find(|&i| lo[i] > hi[i]) {
            return Err(Error::Domain(format!(
                "box bound {i}: lo {} exceeds hi {}",
                lo[i], hi[i]
            )));
        }
        Ok(Self { lo, hi })
    }

    /// The cube `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Domain("box dimension must be positive".into()));
        }
        Self::new(Vector::new(vec![lo; dim])?, Vector::new(vec![hi; dim])?)
    }

    pub fn lo(&self) -> &Vector {
        &self.lo
    }

    pub fn hi(&self) -> &Vector {
        &self.hi
    }

    pub fn dim(&self) -> usize {
        self.lo.dim()
    }

    /// `D∞ = max_i (hi_i − lo_i)`.
    pub fn diameter_inf(&self) -> f64 {
        self.lo
            .iter()
            .zip(self.hi.iter())
            .fold(0.0, |acc, (l, h)| acc.max(h - l))
    }

    pub fn contains(&self, w: &Vector) -> bool {
        w.dim() == self.dim() && (0..w.dim()).all(|i| self.lo[i] <= w[i] && w[i] <= self.hi[i])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
    Div,
    Max,
    Min,
}

pub fn elementwise(op: ElementwiseOp, a: &Vector, b: &Vector) -> Result<Vector> {
    check_dims(a.dim(), b.dim())?;
    if op == ElementwiseOp::Div {
        if let Some(i) = b.iter().position(|&x| x == 0.0) {
            return Err(Error::Domain(format!("division by zero at element {i}")));
        }
    }
    let f = match op {
        ElementwiseOp::Add => |x: f64, y: f64| x + y,
        ElementwiseOp::Sub => |x, y| x - y,
        ElementwiseOp::Mul => |x, y| x * y,
        ElementwiseOp::Div => |x, y| x / y,
        ElementwiseOp::Max => f64::max,
        ElementwiseOp::Min => f64::min,
    };
    Vector::new(a.iter().zip(b.iter()).map(|(&x, &y)| f(x, y)).collect())
}

pub fn l2_norm(a: &Vector) -> f64 {
    // scaled accumulation so that large finite entries do not overflow
    let scale = a.linf_norm();
    if scale == 0.0 {
        return 0.0;
    }
    let ss: f64 = a.iter().map(|x| (x / scale) * (x / scale)).sum();
    scale * ss.sqrt()
}

/// Clamps each coordinate of `y` into the box.
///
/// For a box and any positive diagonal metric `M` this is exactly
/// `argmin_{w ∈ F} ‖M^{1/2}(w − y)‖`: the objective separates per coordinate.
pub fn project_box(y: &Vector, feasible: &FeasibleBox) -> Result<Vector> {
    check_dims(feasible.dim(), y.dim())?;
    Ok(Vector {
        data: y
            .iter()
            .enumerate()
            .map(|(i, &x)| x.clamp(feasible.lo[i], feasible.hi[i]))
            .collect(),
    })
}

/// `√(Σ m_ii · w_i²)`.
pub fn weighted_norm(w: &Vector, m: &DiagMatrix) -> Result<f64> {
    check_dims(m.dim(), w.dim())?;
    let s: f64 = w
        .iter()
        .zip(m.diagonal().iter())
        .map(|(x, d)| d * x * x)
        .sum();
    if !s.is_finite() {
        return Err(Error::NonFinite("weighted norm overflowed".into()));
    }
    Ok(s.sqrt())
}
