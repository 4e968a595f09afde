//! Sign binarization, latent-weight bookkeeping and the straight-through
//! estimator.
//!
//! A full-precision weight vector `w` is quantized to `w̃ = α ⊙ sign(w)`;
//! `sign(0)` is `+1`. Gradients taken at `w̃` flow back to `w` through the STE,
//! optionally masked where the proxy magnitude exceeds a clip threshold.

use std::fmt::Write as _;

use crate::error::{check_dims, Error, Result};
use crate::numerics::{l2_norm, Vector};

/// `+1` for non-negative inputs, `-1` otherwise.
pub fn sign(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

pub fn sign_binarize(w: &Vector) -> Vector {
    w.map(sign).expect("signs are finite")
}

/// How the scale factor α is derived from the full-precision weights.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum ScaleMode {
    /// `α = Σ|w_i| / d`.
    #[default]
    MeanAbs,
    /// A constant `α = c`.
    Fixed(f64),
}

pub fn compute_scale(w: &Vector, mode: ScaleMode) -> Result<f64> {
    match mode {
        ScaleMode::MeanAbs => {
            let total: f64 = w.iter().map(|x| x.abs()).sum();
            if total == 0.0 {
                return Err(Error::Domain(
                    "mean_abs scale is undefined for an all-zero vector".into(),
                ));
            }
            Ok(total / w.dim() as f64)
        }
        ScaleMode::Fixed(c) if c > 0.0 && c.is_finite() => Ok(c),
        ScaleMode::Fixed(c) => Err(Error::Domain(format!(
            "fixed scale must be positive, got {c}"
        ))),
    }
}

/// The quantized image of a weight vector: `latent = alpha ⊙ binary`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentWeights {
    latent: Vector,
    alpha: f64,
    binary: Vector,
}

impl LatentWeights {
    pub fn latent(&self) -> &Vector {
        &self.latent
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn binary(&self) -> &Vector {
        &self.binary
    }

    /// Quantization dimension `d_w̃`.
    pub fn dim(&self) -> usize {
        self.latent.dim()
    }
}

pub fn quantize(w: &Vector, alpha: f64) -> Result<LatentWeights> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Domain(format!(
            "scale must be positive, got {alpha}"
        )));
    }
    let binary = sign_binarize(w);
    let latent = binary.scale(alpha)?;
    Ok(LatentWeights {
        latent,
        alpha,
        binary,
    })
}

/// Straight-through gradient from `w̃` back to the proxy weights.
///
/// Without a clip the upstream gradient passes unchanged. With `clip = c` the
/// hard-tanh mask zeroes coordinates where `|proxy_i| > c`.
pub fn ste_backward(upstream: &Vector, proxy: &Vector, clip: Option<f64>) -> Result<Vector> {
    check_dims(upstream.dim(), proxy.dim())?;
    match clip {
        None => Ok(upstream.clone()),
        Some(c) if c > 0.0 => Vector::new(
            upstream
                .iter()
                .zip(proxy.iter())
                .map(|(&g, &p)| if p.abs() <= c { g } else { 0.0 })
                .collect(),
        ),
        Some(c) => Err(Error::Domain(format!("STE clip must be positive, got {c}"))),
    }
}

/// `‖w − latent‖₂`.
pub fn quantization_error(w: &Vector, latent: &Vector) -> Result<f64> {
    Ok(l2_norm(&w.sub(latent)?))
}

/// Per-step history of the quantization-error diagnostic.
///
/// With `Υ_t = √v_t/η_t − √v_{t−1}/η_{t−1}` for the full-precision moments and
/// `Υ̃_t` the same quantity for the binary model, `Γ_t = ‖Υ̃_t − Υ_t‖`. The
/// flag records whether `Υ̃_t` is entrywise non-negative.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct QuantErrorTrace {
    upsilon_history: Vec<Vector>,
    gamma_history: Vec<f64>,
    pd_flags: Vec<bool>,
}

pub const QUANT_TRACE_CSV_HEADER: &str = "step,gamma,upsilon_min,upsilon_max,pd_flag";

impl QuantErrorTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn upsilon_history(&self) -> &[Vector] {
        &self.upsilon_history
    }

    pub fn gamma_history(&self) -> &[f64] {
        &self.gamma_history
    }

    pub fn pd_flags(&self) -> &[bool] {
        &self.pd_flags
    }

    pub fn len(&self) -> usize {
        self.gamma_history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma_history.is_empty()
    }

    /// Appends one step and returns its `Γ_t`.
    #[allow(clippy::too_many_arguments)]
    pub fn record_upsilon(
        &mut self,
        v_t: &Vector,
        v_prev: &Vector,
        eta_t: f64,
        eta_prev: f64,
        v_t_binary: &Vector,
        v_prev_binary: &Vector,
    ) -> Result<f64> {
        let d = v_t.dim();
        for other in [v_prev, v_t_binary, v_prev_binary] {
            check_dims(d, other.dim())?;
        }
        for eta in [eta_t, eta_prev] {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(Error::Domain(format!(
                    "step size must be positive, got {eta}"
                )));
            }
        }
        for v in [v_t, v_prev, v_t_binary, v_prev_binary] {
            if v.iter().any(|&x| x < 0.0) {
                return Err(Error::Domain("second moments must be non-negative".into()));
            }
        }
        let upsilon = |cur: &Vector, prev: &Vector| -> Result<Vector> {
            Vector::new(
                cur.iter()
                    .zip(prev.iter())
                    .map(|(c, p)| c.sqrt() / eta_t - p.sqrt() / eta_prev)
                    .collect(),
            )
        };
        let full = upsilon(v_t, v_prev)?;
        let binary = upsilon(v_t_binary, v_prev_binary)?;
        let gamma = l2_norm(&binary.sub(&full)?);
        self.pd_flags.push(binary.iter().all(|&x| x >= 0.0));
        self.upsilon_history.push(full);
        self.gamma_history.push(gamma);
        Ok(gamma)
    }

    /// Rows `step,gamma,upsilon_min,upsilon_max,pd_flag`, steps numbered from 1.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(QUANT_TRACE_CSV_HEADER);
        out.push('\n');
        for (i, ((u, g), pd)) in self
            .upsilon_history
            .iter()
            .zip(&self.gamma_history)
            .zip(&self.pd_flags)
            .enumerate()
        {
            let lo = u.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let _ = writeln!(out, "{},{},{},{},{}", i + 1, g, lo, hi, u8::from(*pd));
        }
        out
    }
}
