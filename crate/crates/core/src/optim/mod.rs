//! Optimizer step rules.
//!
//! Every stepper is a pure function of `(state, weights, gradient, config)`
//! returning the next state and the next (projected) weights. [`Optimizer`]
//! wraps one stepper with its owned state for callers that prefer `&mut self`.
//!
//! The adaptive methods share one kernel and differ only in the denominator:
//!
//! | method   | denominator `ṽ_t`                     |
//! |----------|---------------------------------------|
//! | Adam     | `v_t`                                 |
//! | AMSGrad  | `v̂_t = max(v_t, v̂_{t−1})`             |
//! | BAMSProd | `clamp(v̂_t, c_l(t), c_u(t))`          |
//!
//! AdaBound clips the effective rate `η/√v` instead of the moment.

mod bop;
mod regret_bound;
mod schedule;
mod steppers;

use std::fmt;
use std::str::FromStr;

pub use bop::{bop_step, BopParams};
pub use regret_bound::{regret_bound, BoundStatistics, BoundTerms};
pub use schedule::{
    beta1_at, bound_schedule, eta_at, Beta1Schedule, BoundParams, BoundSchedule, EtaSchedule,
};
pub use steppers::{
    adabound_step, adam_step, amsbound_step, amsgrad_step, bamsprod_step, sgdm_step, step,
};

use crate::error::{Error, Result};
use crate::numerics::{FeasibleBox, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OptimizerKind {
    Sgdm,
    Adam,
    Amsgrad,
    Adabound,
    Amsbound,
    Bop,
    Bamsprod,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 7] = [
        OptimizerKind::Sgdm,
        OptimizerKind::Adam,
        OptimizerKind::Amsgrad,
        OptimizerKind::Adabound,
        OptimizerKind::Amsbound,
        OptimizerKind::Bop,
        OptimizerKind::Bamsprod,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Sgdm => "sgdm",
            OptimizerKind::Adam => "adam",
            OptimizerKind::Amsgrad => "amsgrad",
            OptimizerKind::Adabound => "adabound",
            OptimizerKind::Amsbound => "amsbound",
            OptimizerKind::Bop => "bop",
            OptimizerKind::Bamsprod => "bamsprod",
        }
    }

    /// Methods that divide by a second-moment estimate.
    pub fn is_adaptive(self) -> bool {
        !matches!(self, OptimizerKind::Sgdm | OptimizerKind::Bop)
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OptimizerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown optimizer '{s}'")))
    }
}

/// Learning-rate clipping interval of AdaBound/AMSBound:
/// `[f(1 − 1/(γt+1)), f(1 + 1/(γt))]` with `f = final_lr`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateBounds {
    pub final_lr: f64,
    pub gamma: f64,
}

impl Default for RateBounds {
    fn default() -> Self {
        Self {
            final_lr: 0.1,
            gamma: 1e-3,
        }
    }
}

impl RateBounds {
    pub fn at(&self, t: u64) -> (f64, f64) {
        let gt = self.gamma * t as f64;
        (
            self.final_lr * (1.0 - 1.0 / (gt + 1.0)),
            self.final_lr * (1.0 + 1.0 / gt),
        )
    }
}

/// Hyper-parameters for every stepper. Fields irrelevant to a method are ignored.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub eta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta1_schedule: Beta1Schedule,
    pub epsilon: f64,
    pub eta_schedule: EtaSchedule,
    /// Asymptote of the BAMSProd interval; `None` until estimated from a warm-up.
    pub c_inf: Option<f64>,
    pub bound_gamma: f64,
    /// Replace the BAMSProd interval by `[0, ∞)`.
    pub unbounded: bool,
    /// Adam only.
    pub bias_correction: bool,
    pub rate_bounds: RateBounds,
    pub bop: BopParams,
}

/// Number of gradient evaluations used to estimate `c_inf` when it is unset.
pub const WARMUP_STEPS: u64 = 100;

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            eta: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            beta1_schedule: Beta1Schedule::Constant,
            epsilon: 1e-8,
            eta_schedule: EtaSchedule::InvSqrtT,
            c_inf: None,
            bound_gamma: 1e-3,
            unbounded: false,
            bias_correction: false,
            rate_bounds: RateBounds::default(),
            bop: BopParams::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self, kind: OptimizerKind) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad(format!("eta must be positive, got {}", self.eta));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad(format!(
                "epsilon must be non-negative, got {}",
                self.epsilon
            ));
        }
        match kind {
            OptimizerKind::Bamsprod => {
                if self.beta1 > 0.0 && self.beta1 >= self.beta2.sqrt() {
                    return bad(format!(
                        "BAMSProd requires beta1/sqrt(beta2) < 1, got beta1={} beta2={}",
                        self.beta1, self.beta2
                    ));
                }
                if !self.unbounded {
                    if let Some(c) = self.c_inf {
                        BoundParams::new(c, self.bound_gamma)?;
                    } else if !(self.bound_gamma > 0.0 && self.bound_gamma.is_finite()) {
                        return bad(format!(
                            "bound gamma must be positive, got {}",
                            self.bound_gamma
                        ));
                    }
                }
            }
            OptimizerKind::Adabound | OptimizerKind::Amsbound => {
                let rb = self.rate_bounds;
                if !(rb.final_lr > 0.0 && rb.final_lr.is_finite() && rb.gamma > 0.0) {
                    return bad(format!("invalid AdaBound rate bounds {rb:?}"));
                }
            }
            OptimizerKind::Bop => self.bop.validate()?,
            _ => {}
        }
        Ok(())
    }

    /// The BAMSProd interval. Fails while `c_inf` is still unresolved.
    pub fn bound_schedule(&self) -> Result<BoundSchedule> {
        if self.unbounded {
            return Ok(BoundSchedule::Unbounded);
        }
        let c_inf = self.c_inf.ok_or_else(|| {
            Error::Config("c_inf is unset; estimate it from a warm-up first".into())
        })?;
        Ok(BoundSchedule::Hyperbolic(BoundParams::new(
            c_inf,
            self.bound_gamma,
        )?))
    }

    /// Whether a run has to estimate `c_inf` before its first step.
    pub fn needs_warmup(&self, kind: OptimizerKind) -> bool {
        kind == OptimizerKind::Bamsprod && !self.unbounded && self.c_inf.is_none()
    }
}

/// Estimate of `G∞ = max_t ‖g_t‖∞` over warm-up gradients, used as `c_inf`.
pub fn estimate_c_inf<'a>(grads: impl IntoIterator<Item = &'a Vector>) -> Result<f64> {
    let g_inf = grads.into_iter().map(Vector::linf_norm).fold(0.0, f64::max);
    if g_inf > 0.0 {
        Ok(g_inf)
    } else {
        Err(Error::Config(
            "warm-up gradients are all zero; set c_inf explicitly".into(),
        ))
    }
}

/// Moment estimates carried between steps. Bop uses only `m` and `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub m: Vector,
    pub v: Vector,
    pub v_hat: Vector,
    /// Denominator `ṽ_t` used by the most recent step (zero before the first).
    pub v_tilde: Vector,
    pub t: u64,
}

impl OptimizerState {
    pub fn new(dim: usize) -> Self {
        let z = Vector::zeros(dim);
        Self {
            m: z.clone(),
            v: z.clone(),
            v_hat: z.clone(),
            v_tilde: z,
            t: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.m.dim()
    }
}

/// Per-step diagnostics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub t: u64,
    pub eta_t: f64,
    pub beta1_t: f64,
    /// Smallest and largest per-coordinate effective rate.
    pub lr_min: f64,
    pub lr_max: f64,
    /// Bop only: number of sign flips.
    pub flips: usize,
}

/// A stepper together with the state it owns.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    config: OptimizerConfig,
    state: OptimizerState,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, config: OptimizerConfig, dim: usize) -> Result<Self> {
        config.validate(kind)?;
        if kind == OptimizerKind::Bamsprod {
            config.bound_schedule()?;
        }
        Ok(Self {
            kind,
            config,
            state: OptimizerState::new(dim),
        })
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn state(&self) -> &OptimizerState {
        &self.state
    }

    /// One update. On error the owned state is left untouched.
    pub fn step(
        &mut self,
        w: &Vector,
        g: &[f64],
        feasible: &FeasibleBox,
    ) -> Result<(Vector, StepStats)> {
        let (state, w_next, stats) = step(self.kind, &self.state, w, g, &self.config, feasible)?;
        self.state = state;
        Ok((w_next, stats))
    }
}
