//! Data-dependent regret bound for BAMSProd.
//!
//! ```text
//! R_T ≤ D²√T/(η(1−β₁)) Σᵢ √v̂_{T,i}
//!     + D²/(2(1−β₁)) Σₜ Σᵢ β₁ₜ √v̂_{T,i} / ηₜ
//!     + η√(1+log T)/((1−β₁)²(1−β₁/√β₂)√(1−β₂)) Σᵢ ‖g_{1:T,i}‖₂
//!     + L∞ D∞ Σₜ √‖wₜ − α*‖_{√Ṽ_{t−1}}
//! ```

use crate::error::{Error, Result};
use crate::numerics::Vector;

/// Run statistics the bound is evaluated from.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundStatistics {
    /// `v̂_T`.
    pub v_hat_final: Vector,
    /// `‖g_{1:T,i}‖₂` for each coordinate.
    pub grad_history_norms: Vec<f64>,
    pub d_inf: f64,
    pub l_inf: f64,
    pub eta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub horizon: u64,
    /// `Σₜ β₁ₜ / ηₜ`.
    pub beta1_over_eta_sum: f64,
    /// `Σₜ √‖wₜ − α*‖_{√Ṽ_{t−1}}`.
    pub deviation_root_sum: f64,
    /// `Σₜ ‖wₜ − α*‖_{√Ṽ_{t−1}}`, the squared-norm-under-root reading.
    pub deviation_sum: f64,
}

/// The four summands, kept apart for logging.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundTerms {
    pub moment: f64,
    pub momentum: f64,
    pub gradient: f64,
    pub quantization: f64,
    /// Alternative last term using `√(‖·‖²)`; reported, not summed.
    pub quantization_squared_form: f64,
}

impl BoundTerms {
    pub fn total(&self) -> f64 {
        self.moment + self.momentum + self.gradient + self.quantization
    }
}

pub fn regret_bound(s: &BoundStatistics) -> Result<BoundTerms> {
    let (b1, b2) = (s.beta1, s.beta2);
    if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) {
        return Err(Error::Domain(format!(
            "betas must lie in [0, 1), got {b1}, {b2}"
        )));
    }
    let ratio = if b1 == 0.0 { 0.0 } else { b1 / b2.sqrt() };
    if ratio >= 1.0 {
        return Err(Error::Domain(format!(
            "bound requires beta1/sqrt(beta2) < 1, got {ratio}"
        )));
    }
    if s.horizon == 0 || !(s.eta > 0.0) {
        return Err(Error::Domain("horizon and eta must be positive".into()));
    }
    if s.grad_history_norms.len() != s.v_hat_final.dim() {
        return Err(Error::DimensionMismatch {
            expected: s.v_hat_final.dim(),
            found: s.grad_history_norms.len(),
        });
    }
    let scalars = [
        s.d_inf,
        s.l_inf,
        s.beta1_over_eta_sum,
        s.deviation_root_sum,
        s.deviation_sum,
    ];
    if scalars.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::Domain(
            "bound statistics must be finite and non-negative".into(),
        ));
    }
    if s.v_hat_final.iter().any(|&x| x < 0.0) {
        return Err(Error::Domain("v_hat must be non-negative".into()));
    }

    let t = s.horizon as f64;
    let d2 = s.d_inf * s.d_inf;
    let root_v_hat: f64 = s.v_hat_final.iter().map(|x| x.sqrt()).sum();
    let grad_norms: f64 = s.grad_history_norms.iter().sum();

    let moment = d2 * t.sqrt() / (s.eta * (1.0 - b1)) * root_v_hat;
    let momentum = d2 / (2.0 * (1.0 - b1)) * root_v_hat * s.beta1_over_eta_sum;
    let gradient = s.eta * (1.0 + t.ln()).sqrt()
        / ((1.0 - b1).powi(2) * (1.0 - ratio) * (1.0 - b2).sqrt())
        * grad_norms;
    let quantization = s.l_inf * s.d_inf * s.deviation_root_sum;
    let quantization_squared_form = s.l_inf * s.d_inf * s.deviation_sum;
    let terms = BoundTerms {
        moment,
        momentum,
        gradient,
        quantization,
        quantization_squared_form,
    };
    if !terms.total().is_finite() {
        return Err(Error::NonFinite("regret bound overflowed".into()));
    }
    Ok(terms)
}
