//! Time-varying hyper-parameters: the β₁ decay, the step size `η_t` and the
//! interval `[c_l(t), c_u(t)]` into which BAMSProd projects the second moment.

use crate::error::{Error, Result};

use super::OptimizerConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Beta1Schedule {
    #[default]
    Constant,
    /// `β₁ (β₁/√β₂)^{t−1}`.
    Geometric,
    /// `β₁ / t`.
    Harmonic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum EtaSchedule {
    /// `η / √t`.
    #[default]
    InvSqrtT,
    Constant,
}

pub fn beta1_at(t: u64, cfg: &OptimizerConfig) -> f64 {
    debug_assert!(t >= 1);
    let b1 = cfg.beta1;
    match cfg.beta1_schedule {
        Beta1Schedule::Constant => b1,
        Beta1Schedule::Geometric => {
            if b1 == 0.0 {
                return 0.0;
            }
            let ratio = b1 / cfg.beta2.sqrt();
            b1 * ratio.powf((t - 1) as f64)
        }
        Beta1Schedule::Harmonic => b1 / t as f64,
    }
}

pub fn eta_at(t: u64, cfg: &OptimizerConfig) -> f64 {
    debug_assert!(t >= 1);
    match cfg.eta_schedule {
        EtaSchedule::InvSqrtT => cfg.eta / (t as f64).sqrt(),
        EtaSchedule::Constant => cfg.eta,
    }
}

/// Shape parameters of the hyperbolic bound family.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundParams {
    c_inf: f64,
    gamma: f64,
}

impl BoundParams {
    pub fn new(c_inf: f64, gamma: f64) -> Result<Self> {
        if !(c_inf > 0.0 && c_inf.is_finite()) {
            return Err(Error::Config(format!(
                "c_inf must be positive, got {c_inf}"
            )));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Config(format!(
                "bound gamma must be positive, got {gamma}"
            )));
        }
        Ok(Self { c_inf, gamma })
    }

    pub fn c_inf(&self) -> f64 {
        self.c_inf
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

/// The projection interval for the second moment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BoundSchedule {
    /// `c_l = c∞(1 − 1/(γt+1))`, `c_u = c∞(1 + 1/(γt))`.
    Hyperbolic(BoundParams),
    /// `c_l = 0`, `c_u = ∞`: BAMSProd degenerates to AMSGrad.
    Unbounded,
}

impl BoundSchedule {
    pub fn at(&self, t: u64) -> Result<(f64, f64)> {
        match self {
            BoundSchedule::Hyperbolic(p) => bound_schedule(t, p),
            BoundSchedule::Unbounded if t >= 1 => Ok((0.0, f64::INFINITY)),
            BoundSchedule::Unbounded => Err(step_domain_error(t)),
        }
    }
}

fn step_domain_error(t: u64) -> Error {
    Error::Domain(format!("bound schedule is defined for t >= 1, got {t}"))
}

pub fn bound_schedule(t: u64, p: &BoundParams) -> Result<(f64, f64)> {
    if t < 1 {
        return Err(step_domain_error(t));
    }
    let gt = p.gamma * t as f64;
    let lower = p.c_inf * (1.0 - 1.0 / (gt + 1.0));
    let upper = p.c_inf * (1.0 + 1.0 / gt);
    Ok((lower, upper))
}
