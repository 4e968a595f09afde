//! Online test problems: the periodic adversarial sequence, convex quadratics
//! (deterministic and noisy), a coin-flip linear problem and the 2-D Shubert
//! landscape.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dims, Error, Result};
use crate::numerics::{project_box, FeasibleBox, Vector};

use super::fixed_point::minimize_1d;
use super::{OnlineProblem, Round};

/// Per-round RNG: one ChaCha stream per step, so draws never depend on call order.
pub(crate) fn round_rng(seed: u64, t: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t);
    rng
}

fn scalar(w: &Vector) -> Result<f64> {
    check_dims(1, w.dim())?;
    Ok(w[0])
}

/// Scale factors `α_t` of the adversarial sequence.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AlphaSchedule {
    Constant(f64),
    /// `α_t = end + (start − end)/t`.
    Decay {
        start: f64,
        end: f64,
    },
}

impl AlphaSchedule {
    pub fn at(&self, t: u64) -> f64 {
        match *self {
            AlphaSchedule::Constant(a) => a,
            AlphaSchedule::Decay { start, end } => end + (start - end) / t as f64,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = |a: f64| a > 0.0 && a <= 1.0;
        let valid = match *self {
            AlphaSchedule::Constant(a) => ok(a),
            AlphaSchedule::Decay { start, end } => ok(start) && ok(end),
        };
        if valid {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "alpha schedule must stay in (0, 1]: {self:?}"
            )))
        }
    }
}

/// `f_t(w̃) = −1` at `w̃ = −1`; otherwise `w̃` when `t mod C = 1`, `−w̃` when
/// `t mod C = 2` and `0` for the remaining steps of each period.
#[derive(Clone, Debug)]
pub struct AdversarialSequence {
    period: u64,
    alpha: AlphaSchedule,
    feasible: FeasibleBox,
    initial: f64,
    condition: Option<bool>,
}

impl AdversarialSequence {
    pub fn new(period: u64, alpha: AlphaSchedule) -> Result<Self> {
        if period < 3 {
            return Err(Error::Config(format!(
                "period must be at least 3, got {period}"
            )));
        }
        alpha.validate()?;
        Ok(Self {
            period,
            alpha,
            feasible: FeasibleBox::cube(1, -1.0, 1.0)?,
            initial: 0.5,
            condition: None,
        })
    }

    /// Records `condition_holds` for `beta2` over `1..=horizon`.
    pub fn with_condition(mut self, beta2: f64, horizon: u64) -> Result<Self> {
        self.condition = Some(condition_holds(self.period, beta2, &self.alpha, horizon)?);
        Ok(self)
    }

    pub fn with_initial(mut self, w1: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&w1) {
            return Err(Error::Domain(format!("initial point {w1} outside [-1, 1]")));
        }
        self.initial = w1;
        Ok(self)
    }

    pub fn period(&self) -> u64 {
        self.period
    }

    pub fn alpha(&self) -> AlphaSchedule {
        self.alpha
    }

    pub fn condition(&self) -> Option<bool> {
        self.condition
    }
}

pub fn adversarial_loss(t: u64, w: f64, seq: &AdversarialSequence) -> Result<f64> {
    if !(-1.0..=1.0).contains(&w) {
        return Err(Error::Domain(format!("{w} outside [-1, 1]")));
    }
    if w == -1.0 {
        return Ok(-1.0);
    }
    Ok(match t % seq.period {
        1 => w,
        2 => -w,
        _ => 0.0,
    })
}

/// Derivative of `f_t` with respect to `w̃`. At `w̃ = −1` the linear branches
/// keep their interior slope.
fn adversarial_slope(t: u64, w: f64, seq: &AdversarialSequence) -> Result<f64> {
    adversarial_loss(t, w, seq)?;
    Ok(match t % seq.period {
        1 => 1.0,
        2 => -1.0,
        _ => 0.0,
    })
}

/// Gradient reaching the proxy through the STE: `±α_t` on the two active
/// steps of each period, `0` otherwise.
pub fn adversarial_grad(t: u64, w: f64, seq: &AdversarialSequence) -> Result<f64> {
    Ok(seq.alpha.at(t) * adversarial_slope(t, w, seq)?)
}

/// Whether `β₂^{C−2} ≤ 2(α_{t+1} − α_t β₂)/(1 − β₂)` for every `t ≤ horizon`.
pub fn condition_holds(
    period: u64,
    beta2: f64,
    alpha: &AlphaSchedule,
    horizon: u64,
) -> Result<bool> {
    if period < 3 {
        return Err(Error::Config(format!(
            "period must be at least 3, got {period}"
        )));
    }
    if !(0.0..1.0).contains(&beta2) {
        return Err(Error::Config(format!(
            "beta2 must lie in [0, 1), got {beta2}"
        )));
    }
    let lhs = beta2.powf((period - 2) as f64);
    let last = match alpha {
        AlphaSchedule::Constant(_) => 1,
        AlphaSchedule::Decay { .. } => horizon.max(1),
    };
    Ok((1..=last).all(|t| {
        let rhs = 2.0 * (alpha.at(t + 1) - alpha.at(t) * beta2) / (1.0 - beta2);
        lhs <= rhs
    }))
}

impl OnlineProblem for AdversarialSequence {
    fn name(&self) -> &'static str {
        "adversarial"
    }

    fn dim(&self) -> usize {
        1
    }

    fn feasible(&self) -> &FeasibleBox {
        &self.feasible
    }

    fn initial_point(&self, _seed: u64) -> Vector {
        Vector::filled(1, self.initial)
    }

    fn loss(&self, round: Round, w: &Vector) -> Result<f64> {
        adversarial_loss(round.t, scalar(w)?, self)
    }

    fn grad(&self, round: Round, w: &Vector) -> Result<Vector> {
        Ok(Vector::filled(
            1,
            adversarial_slope(round.t, scalar(w)?, self)?,
        ))
    }

    fn best_fixed_point(&self, _horizon: u64, _seed: u64) -> Result<Vector> {
        Ok(Vector::filled(1, -1.0))
    }

    fn quant_scale(&self, t: u64) -> Option<f64> {
        Some(self.alpha.at(t))
    }
}

/// `f(w) = Σ cᵢ (wᵢ − oᵢ)² / 2` on a box.
#[derive(Clone, Debug)]
pub struct QuadraticProblem {
    curvature: Vector,
    optimum: Vector,
    feasible: FeasibleBox,
    initial: Vector,
}

impl QuadraticProblem {
    pub fn new(curvature: Vector, optimum: Vector, feasible: FeasibleBox) -> Result<Self> {
        check_dims(curvature.dim(), optimum.dim())?;
        check_dims(curvature.dim(), feasible.dim())?;
        if curvature.iter().any(|&c| c <= 0.0) {
            return Err(Error::Config("curvature must be positive".into()));
        }
        let initial = feasible.hi().clone();
        Ok(Self {
            curvature,
            optimum,
            feasible,
            initial,
        })
    }

    /// Random instance: curvature in `[0.5, 2]`, optimum and start uniform in the box.
    pub fn random(dim: usize, feasible: FeasibleBox, seed: u64) -> Result<Self> {
        check_dims(dim, feasible.dim())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |lo: &Vector, hi: &Vector| -> Result<Vector> {
            Vector::new((0..dim).map(|i| rng.random_range(lo[i]..=hi[i])).collect())
        };
        let optimum = uniform(feasible.lo(), feasible.hi())?;
        let initial = uniform(feasible.lo(), feasible.hi())?;
        let curvature = uniform(&Vector::filled(dim, 0.5), &Vector::filled(dim, 2.0))?;
        Self::new(curvature, optimum, feasible)?.with_initial(initial)
    }

    pub fn with_initial(mut self, w: Vector) -> Result<Self> {
        check_dims(self.curvature.dim(), w.dim())?;
        self.initial = w;
        Ok(self)
    }

    pub fn curvature(&self) -> &Vector {
        &self.curvature
    }

    pub fn optimum(&self) -> &Vector {
        &self.optimum
    }

    pub fn value(&self, w: &Vector) -> Result<f64> {
        check_dims(self.curvature.dim(), w.dim())?;
        Ok(self
            .curvature
            .iter()
            .zip(w.iter().zip(self.optimum.iter()))
            .map(|(c, (x, o))| 0.5 * c * (x - o) * (x - o))
            .sum())
    }

    pub fn gradient(&self, w: &Vector) -> Result<Vector> {
        check_dims(self.curvature.dim(), w.dim())?;
        Vector::new(
            self.curvature
                .iter()
                .zip(w.iter().zip(self.optimum.iter()))
                .map(|(c, (x, o))| c * (x - o))
                .collect(),
        )
    }
}

pub fn quadratic_problem(
    dim: usize,
    curvature: Vector,
    optimum: Vector,
    feasible: FeasibleBox,
) -> Result<QuadraticProblem> {
    check_dims(dim, curvature.dim())?;
    QuadraticProblem::new(curvature, optimum, feasible)
}

impl OnlineProblem for QuadraticProblem {
    fn name(&self) -> &'static str {
        "quadratic"
    }

    fn dim(&self) -> usize {
        self.curvature.dim()
    }

    fn feasible(&self) -> &FeasibleBox {
        &self.feasible
    }

    fn initial_point(&self, _seed: u64) -> Vector {
        self.initial.clone()
    }

    fn loss(&self, _round: Round, w: &Vector) -> Result<f64> {
        self.value(w)
    }

    fn grad(&self, _round: Round, w: &Vector) -> Result<Vector> {
        self.gradient(w)
    }

    fn best_fixed_point(&self, _horizon: u64, _seed: u64) -> Result<Vector> {
        // separable objective: the coordinate-wise clamp is the exact minimizer
        project_box(&self.optimum, &self.feasible)
    }
}

/// A quadratic whose gradients carry skewed, mean-zero noise.
///
/// Each coordinate receives `sᵢ ξ` with `ξ = σK` with probability `1/(K+1)`
/// and `−σ` otherwise, `sᵢ` being the sign of the optimum. Rare large draws
/// are what a clip threshold truncates. The loss itself is noise-free.
#[derive(Clone, Debug)]
pub struct StochasticQuadratic {
    base: QuadraticProblem,
    signs: Vector,
    sigma: f64,
    skew: f64,
}

impl StochasticQuadratic {
    pub fn new(base: QuadraticProblem, sigma: f64, skew: f64) -> Result<Self> {
        if !(sigma >= 0.0 && skew >= 1.0) {
            return Err(Error::Config(format!(
                "need sigma >= 0 and skew >= 1, got {sigma}, {skew}"
            )));
        }
        let signs = base.optimum.map(crate::binarize::sign)?;
        Ok(Self {
            base,
            signs,
            sigma,
            skew,
        })
    }

    /// The instance family used by the clipping experiment: optimum `a·s` with
    /// one magnitude `a ∈ U(0.2, 0.5)` (so a single scale α can represent it),
    /// start `o + s·U(0.3, 0.5)`, curvature `U(0.5, 2)`.
    pub fn clipping_instance(dim: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = rng.random_range(0.2..0.5);
        let mut optimum = Vec::with_capacity(dim);
        let mut initial = Vec::with_capacity(dim);
        let mut curvature = Vec::with_capacity(dim);
        for _ in 0..dim {
            let s = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let o = s * a;
            optimum.push(o);
            initial.push(o + s * rng.random_range(0.3..0.5));
            curvature.push(rng.random_range(0.5..2.0));
        }
        let base = QuadraticProblem::new(
            Vector::new(curvature)?,
            Vector::new(optimum)?,
            FeasibleBox::cube(dim, -1.0, 1.0)?,
        )?
        .with_initial(Vector::new(initial)?)?;
        Self::new(base, 0.3, 9.0)
    }

    pub fn base(&self) -> &QuadraticProblem {
        &self.base
    }
}

impl OnlineProblem for StochasticQuadratic {
    fn name(&self) -> &'static str {
        "stochastic_quadratic"
    }

    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn feasible(&self) -> &FeasibleBox {
        &self.base.feasible
    }

    fn initial_point(&self, seed: u64) -> Vector {
        self.base.initial_point(seed)
    }

    fn loss(&self, round: Round, w: &Vector) -> Result<f64> {
        self.base.loss(round, w)
    }

    fn grad(&self, round: Round, w: &Vector) -> Result<Vector> {
        let mut rng = round_rng(round.seed, round.t);
        let p_large = 1.0 / (self.skew + 1.0);
        let g = self.base.gradient(w)?;
        Vector::new(
            g.iter()
                .zip(self.signs.iter())
                .map(|(gi, s)| {
                    let xi = if rng.random_bool(p_large) {
                        self.sigma * self.skew
                    } else {
                        -self.sigma
                    };
                    gi + s * xi
                })
                .collect(),
        )
    }

    fn best_fixed_point(&self, horizon: u64, seed: u64) -> Result<Vector> {
        self.base.best_fixed_point(horizon, seed)
    }
}

/// `f_t(w̃) = s_t w̃` on `[−1, 1]` with `s_t = +1` with probability `p`, else `−1`.
#[derive(Clone, Debug)]
pub struct CoinFlipProblem {
    p: f64,
    feasible: FeasibleBox,
}

impl CoinFlipProblem {
    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!(
                "probability must lie in [0, 1], got {p}"
            )));
        }
        Ok(Self {
            p,
            feasible: FeasibleBox::cube(1, -1.0, 1.0)?,
        })
    }

    /// The smallest `p` above `(1 + β₂)/2`, nudged by `margin`.
    pub fn above_threshold(beta2: f64, margin: f64) -> Result<Self> {
        Self::new(((1.0 + beta2) / 2.0 + margin).min(1.0))
    }

    fn coin(&self, round: Round) -> f64 {
        if round_rng(round.seed, round.t).random_bool(self.p) {
            1.0
        } else {
            -1.0
        }
    }
}

impl OnlineProblem for CoinFlipProblem {
    fn name(&self) -> &'static str {
        "coin_flip"
    }

    fn dim(&self) -> usize {
        1
    }

    fn feasible(&self) -> &FeasibleBox {
        &self.feasible
    }

    fn initial_point(&self, _seed: u64) -> Vector {
        Vector::filled(1, 0.5)
    }

    fn loss(&self, round: Round, w: &Vector) -> Result<f64> {
        Ok(self.coin(round) * scalar(w)?)
    }

    fn grad(&self, round: Round, w: &Vector) -> Result<Vector> {
        scalar(w)?;
        Ok(Vector::filled(1, self.coin(round)))
    }

    fn best_fixed_point(&self, horizon: u64, seed: u64) -> Result<Vector> {
        let total: f64 = (1..=horizon).map(|t| self.coin(Round { t, seed })).sum();
        Ok(Vector::filled(1, if total > 0.0 { -1.0 } else { 1.0 }))
    }
}

fn shubert_factor(x: f64) -> (f64, f64) {
    let mut h = 0.0;
    let mut dh = 0.0;
    for i in 1..=5 {
        let i = i as f64;
        let arg = (i + 1.0) * x + i;
        h += i * arg.cos();
        dh -= i * (i + 1.0) * arg.sin();
    }
    (h, dh)
}

/// `Σᵢ i cos((i+1)x + i) · Σᵢ i cos((i+1)y + i)`, `i = 1..5`.
pub fn shubert_loss(x: &Vector) -> Result<f64> {
    check_dims(2, x.dim())?;
    Ok(shubert_factor(x[0]).0 * shubert_factor(x[1]).0)
}

pub fn shubert_grad(x: &Vector) -> Result<Vector> {
    check_dims(2, x.dim())?;
    let (hx, dx) = shubert_factor(x[0]);
    let (hy, dy) = shubert_factor(x[1]);
    Vector::new(vec![dx * hy, hx * dy])
}

#[derive(Clone, Debug)]
pub struct ShubertProblem {
    feasible: FeasibleBox,
}

impl Default for ShubertProblem {
    fn default() -> Self {
        Self {
            feasible: FeasibleBox::cube(2, -5.12, 5.12).expect("valid box"),
        }
    }
}

impl ShubertProblem {
    pub fn new(feasible: FeasibleBox) -> Result<Self> {
        check_dims(2, feasible.dim())?;
        Ok(Self { feasible })
    }
}

impl OnlineProblem for ShubertProblem {
    fn name(&self) -> &'static str {
        "shubert"
    }

    fn dim(&self) -> usize {
        2
    }

    fn feasible(&self) -> &FeasibleBox {
        &self.feasible
    }

    /// Uniform in the box, drawn from `seed`.
    fn initial_point(&self, seed: u64) -> Vector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = (self.feasible.lo(), self.feasible.hi());
        Vector::new((0..2).map(|i| rng.random_range(lo[i]..=hi[i])).collect())
            .expect("box coordinates are finite")
    }

    fn loss(&self, _round: Round, w: &Vector) -> Result<f64> {
        shubert_loss(w)
    }

    fn grad(&self, _round: Round, w: &Vector) -> Result<Vector> {
        shubert_grad(w)
    }

    /// The objective is a product `h(x)h(y)`, so its minimum pairs extremes of `h`.
    fn best_fixed_point(&self, _horizon: u64, _seed: u64) -> Result<Vector> {
        let (lo, hi) = (self.feasible.lo(), self.feasible.hi());
        let h = |x: f64| shubert_factor(x).0;
        let extremes = |i: usize| -> Vec<f64> {
            vec![
                minimize_1d(h, lo[i], hi[i]),
                minimize_1d(|x| -h(x), lo[i], hi[i]),
            ]
        };
        let (xs, ys) = (extremes(0), extremes(1));
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for &x in &xs {
            for &y in &ys {
                let f = h(x) * h(y);
                if f < best.0 {
                    best = (f, x, y);
                }
            }
        }
        Vector::new(vec![best.1, best.2])
    }
}
