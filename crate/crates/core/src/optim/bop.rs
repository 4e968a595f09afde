//! Bop: a latent-free optimizer that flips binary weights once an
//! exponential moving average of their gradients crosses a threshold.

use crate::error::{check_dims, Error, Result};
use crate::numerics::Vector;

use super::{OptimizerState, StepStats};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BopParams {
    /// Flip threshold τ.
    pub threshold: f64,
    /// Adaptivity rate γ_b ∈ (0, 1].
    pub adaptivity: f64,
}

impl Default for BopParams {
    fn default() -> Self {
        Self {
            threshold: 1e-6,
            adaptivity: 1e-3,
        }
    }
}

impl BopParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(Error::Config(format!(
                "Bop threshold must be positive, got {}",
                self.threshold
            )));
        }
        if !(self.adaptivity > 0.0 && self.adaptivity <= 1.0) {
            return Err(Error::Config(format!(
                "Bop adaptivity must lie in (0, 1], got {}",
                self.adaptivity
            )));
        }
        Ok(())
    }
}

/// `m ← (1−γ) m + γ g`; coordinate `i` flips when `|m_i| > τ` and `m_i` has
/// the same sign as `w_i`.
pub fn bop_step(
    state: &OptimizerState,
    w_binary: &Vector,
    g: &Vector,
    params: BopParams,
) -> Result<(OptimizerState, Vector, StepStats)> {
    params.validate()?;
    check_dims(w_binary.dim(), g.dim())?;
    check_dims(state.dim(), g.dim())?;
    if let Some(i) = w_binary.iter().position(|&x| x != 1.0 && x != -1.0) {
        return Err(Error::Domain(format!(
            "Bop weights must be ±1, element {i} is {}",
            w_binary[i]
        )));
    }
    let gamma = params.adaptivity;
    let m = Vector::new(
        state
            .m
            .iter()
            .zip(g.iter())
            .map(|(mi, gi)| (1.0 - gamma) * mi + gamma * gi)
            .collect(),
    )?;
    let mut flips = 0;
    let w_next = Vector::new(
        w_binary
            .iter()
            .zip(m.iter())
            .map(|(&wi, &mi)| {
                if mi.abs() > params.threshold && mi.signum() == wi {
                    flips += 1;
                    -wi
                } else {
                    wi
                }
            })
            .collect(),
    )?;
    let t = state.t + 1;
    let next = OptimizerState {
        m,
        t,
        ..state.clone()
    };
    let stats = StepStats {
        t,
        eta_t: 0.0,
        beta1_t: 1.0 - gamma,
        lr_min: 0.0,
        lr_max: 0.0,
        flips,
    };
    Ok((next, w_next, stats))
}
