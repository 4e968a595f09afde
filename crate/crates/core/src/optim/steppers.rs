use crate::error::{check_dims, Error, Result};
use crate::numerics::{project_box, FeasibleBox, Vector};

use super::schedule::{beta1_at, eta_at, BoundSchedule, EtaSchedule};
use super::{bop_step, OptimizerConfig, OptimizerKind, OptimizerState, StepStats};

type StepResult = Result<(OptimizerState, Vector, StepStats)>;

fn checked_gradient(g: &[f64], w: &Vector, state: &OptimizerState) -> Result<Vector> {
    check_dims(w.dim(), g.len())?;
    check_dims(state.dim(), g.len())?;
    if let Some(i) = g.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!(
            "gradient element {i} is {}",
            g[i]
        )));
    }
    Vector::from_slice(g)
}

/// How the shared adaptive kernel forms `ṽ_t` from `v_t` and `v̂_t`.
#[derive(Clone, Copy, Debug)]
enum Denominator {
    Raw,
    RunningMax,
    Bounded(BoundSchedule),
}

/// Lines shared by Adam, AMSGrad and BAMSProd:
/// `m ← β₁t m + (1−β₁t) g`, `v ← β₂ v + (1−β₂) g²`, `v̂ ← max(v, v̂)`,
/// `w ← Π_F(w − η_t m / (√ṽ + ε))`.
fn adaptive_kernel(
    state: &OptimizerState,
    w: &Vector,
    g: &[f64],
    cfg: &OptimizerConfig,
    feasible: &FeasibleBox,
    denominator: Denominator,
    bias_correction: bool,
) -> StepResult {
    let g = checked_gradient(g, w, state)?;
    check_dims(feasible.dim(), w.dim())?;
    let t = state.t + 1;
    let beta1_t = beta1_at(t, cfg);
    let beta2 = cfg.beta2;
    let eta_t = eta_at(t, cfg);
    let bounds = match denominator {
        Denominator::Bounded(schedule) => Some(schedule.at(t)?),
        _ => None,
    };

    let d = w.dim();
    let mut m = Vec::with_capacity(d);
    let mut v = Vec::with_capacity(d);
    let mut v_hat = Vec::with_capacity(d);
    let mut v_tilde = Vec::with_capacity(d);
    let mut w_next = Vec::with_capacity(d);
    let (mut lr_min, mut lr_max) = (f64::INFINITY, 0.0f64);
    let (corr1, corr2) = if bias_correction {
        (1.0 - cfg.beta1.powf(t as f64), 1.0 - beta2.powf(t as f64))
    } else {
        (1.0, 1.0)
    };
    for i in 0..d {
        let gi = g[i];
        let mi = beta1_t * state.m[i] + (1.0 - beta1_t) * gi;
        let vi = beta2 * state.v[i] + (1.0 - beta2) * gi * gi;
        let vhi = vi.max(state.v_hat[i]);
        let vti = match (denominator, bounds) {
            (Denominator::Raw, _) => vi,
            (Denominator::RunningMax, _) | (Denominator::Bounded(BoundSchedule::Unbounded), _) => {
                vhi
            }
            (Denominator::Bounded(_), Some((lo, hi))) => vhi.clamp(lo, hi),
            (Denominator::Bounded(_), None) => unreachable!("bounds resolved above"),
        };
        let (m_eff, v_eff) = if bias_correction {
            (mi / corr1, vti / corr2)
        } else {
            (mi, vti)
        };
        let rate = eta_t / (v_eff.sqrt() + cfg.epsilon);
        if !rate.is_finite() {
            return Err(Error::NonFinite(format!(
                "effective rate at coordinate {i} is {rate} (zero denominator with epsilon = 0?)"
            )));
        }
        lr_min = lr_min.min(rate);
        lr_max = lr_max.max(rate);
        m.push(mi);
        v.push(vi);
        v_hat.push(vhi);
        v_tilde.push(vti);
        w_next.push(w[i] - rate * m_eff);
    }
    let w_next = project_box(&Vector::new(w_next)?, feasible)?;
    let next = OptimizerState {
        m: Vector::new(m)?,
        v: Vector::new(v)?,
        v_hat: Vector::new(v_hat)?,
        v_tilde: Vector::new(v_tilde)?,
        t,
    };
    let stats = StepStats {
        t,
        eta_t,
        beta1_t,
        lr_min,
        lr_max,
        flips: 0,
    };
    Ok((next, w_next, stats))
}

/// BAMSProd: AMSGrad's running maximum projected into `[c_l(t), c_u(t)]`.
pub fn bamsprod_step(
    state: &OptimizerState,
    w: &Vector,
    g: &[f64],
    cfg: &OptimizerConfig,
    feasible: &FeasibleBox,
) -> StepResult {
    let schedule = cfg.bound_schedule()?;
    adaptive_kernel(
        state,
        w,
        g,
        cfg,
        feasible,
        Denominator::Bounded(schedule),
        false,
    )
}

pub fn adam_step(
    state: &OptimizerState,
    w: &Vector,
    g: &[f64],
    cfg: &OptimizerConfig,
    feasible: &FeasibleBox,
) -> StepResult {
    adaptive_kernel(
        state,
        w,
        g,
        cfg,
        feasible,
        Denominator::Raw,
        cfg.bias_correction,
    )
}

pub fn amsgrad_step(
    state: &OptimizerState,
    w: &Vector,
    g: &[f64],
    cfg: &OptimizerConfig,
    feasible: &FeasibleBox,
) -> StepResult {
    adaptive_kernel(state, w, g, cfg, feasible, Denominator::RunningMax, false)
}

fn rate_clipped_kernel(
    state: &OptimizerState,
    w: &Vector,
    g: &[f64],
    cfg: &OptimizerConfig,
    feasible: &FeasibleBox,
    use_max: bool,
) -> StepResult {
    let g = checked_gradient(g, w, state)?;
    check_dims(feasible.dim(), w.dim())?;
    let t = state.t + 1;
    let beta1_t = beta1_at(t, cfg);
    let (lower, upper) = cfg.rate_bounds.at(t);
    let eta_t = eta_at(t, cfg);

    let d = w.dim();
    let mut next = OptimizerState::new(d);
    let mut m = Vec::with_capacity(d);
    let mut v = Vec::with_capacity(d);
    let mut v_hat = Vec::with_capacity(d);
    let mut v_tilde = Vec::with_capacity(d);
    let mut w_next = Vec::with_capacity(d);
    let (mut lr_min, mut lr_max) = (f64::INFINITY, 0.0f64);
    for i in 0..d {
        let gi = g[i];
        let mi = beta1_t * state.m[i] + (1.0 - beta1_t) * gi;
        let vi = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * gi * gi;
        let vhi = vi.max(state.v_hat[i]);
        let base = if use_max { vhi } else { vi };
        let raw = cfg.eta / (base.sqrt() + cfg.epsilon);
        // the step-size decay is applied after clipping, as in the published rule
        let rate = match cfg.eta_schedule {
            EtaSchedule::InvSqrtT => raw.clamp(lower, upper) / (t as f64).sqrt(),
            EtaSchedule::Constant => raw.clamp(lower, upper),
        };
        lr_min = lr_min.min(rate);
        lr_max = lr_max.max(rate);
        m.push(mi);
        v.push(vi);
        v_hat.push(vhi);
        v_tilde.push(base);
        w_next.push(w[i] - rate * mi);
    }
    next.m = Vector::new(m)?;
    next.v = Vector::new(v)?;
    next.v_hat = Vector::new(v_hat)?;
    next.v_tilde = Vector::new(v_tilde)?;
    next.t = t;
    let w_next = project_box(&Vector::new(w_next)?, feasible)?;
    let stats = StepStats {
        t,
        eta_t,
        beta1_t,
        lr_min,
        lr_max,
        flips: 0,
    };
    Ok((next, w_next, stats))
}

/// AdaBound: the per-coordinate rate `η/√v` is clipped into a shrinking
/// interval around `final_lr` (unlike BAMSProd, which clips the moment).
pub fn adabound_step(
    state: &OptimizerState,
    w: &Vector,
    g: &[f64],
    cfg: &OptimizerConfig,
    feasible: &FeasibleBox,
) -> StepResult {
    rate_clipped_kernel(state, w, g, cfg, feasible, false)
}

/// AdaBound with AMSGrad's running maximum.
pub fn amsbound_step(
    state: &OptimizerState,
    w: &Vector,
    g: &[f64],
    cfg: &OptimizerConfig,
    feasible: &FeasibleBox,
) -> StepResult {
    rate_clipped_kernel(state, w, g, cfg, feasible, true)
}

/// Heavy-ball momentum: `m ← β₁ m + g`, `w ← Π_F(w − η_t m)`.
pub fn sgdm_step(
    state: &OptimizerState,
    w: &Vector,
    g: &[f64],
    cfg: &OptimizerConfig,
    feasible: &FeasibleBox,
) -> StepResult {
    let g = checked_gradient(g, w, state)?;
    check_dims(feasible.dim(), w.dim())?;
    let t = state.t + 1;
    let eta_t = eta_at(t, cfg);
    let m = Vector::new(
        state
            .m
            .iter()
            .zip(g.iter())
            .map(|(mi, gi)| cfg.beta1 * mi + gi)
            .collect(),
    )?;
    let w_next = project_box(
        &Vector::new(
            w.iter()
                .zip(m.iter())
                .map(|(wi, mi)| wi - eta_t * mi)
                .collect(),
        )?,
        feasible,
    )?;
    let next = OptimizerState {
        m,
        t,
        ..state.clone()
    };
    let stats = StepStats {
        t,
        eta_t,
        beta1_t: cfg.beta1,
        lr_min: eta_t,
        lr_max: eta_t,
        flips: 0,
    };
    Ok((next, w_next, stats))
}

/// Dispatches to the stepper registered for `kind`.
pub fn step(
    kind: OptimizerKind,
    state: &OptimizerState,
    w: &Vector,
    g: &[f64],
    cfg: &OptimizerConfig,
    feasible: &FeasibleBox,
) -> StepResult {
    match kind {
        OptimizerKind::Sgdm => sgdm_step(state, w, g, cfg, feasible),
        OptimizerKind::Adam => adam_step(state, w, g, cfg, feasible),
        OptimizerKind::Amsgrad => amsgrad_step(state, w, g, cfg, feasible),
        OptimizerKind::Adabound => adabound_step(state, w, g, cfg, feasible),
        OptimizerKind::Amsbound => amsbound_step(state, w, g, cfg, feasible),
        OptimizerKind::Bamsprod => bamsprod_step(state, w, g, cfg, feasible),
        OptimizerKind::Bop => {
            let g = checked_gradient(g, w, state)?;
            bop_step(state, w, &g, cfg.bop)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::{Beta1Schedule, RateBounds};
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_slice(xs).unwrap()
    }

    fn unit(d: usize) -> FeasibleBox {
        FeasibleBox::cube(d, -1.0, 1.0).unwrap()
    }

    fn bams_cfg(
        beta1: f64,
        beta2: f64,
        eta: f64,
        c_inf: f64,
        gamma: f64,
        eps: f64,
    ) -> OptimizerConfig {
        OptimizerConfig {
            eta,
            beta1,
            beta2,
            epsilon: eps,
            c_inf: Some(c_inf),
            bound_gamma: gamma,
            ..OptimizerConfig::default()
        }
    }

    /// Scalar transcription of the BAMSProd loop, independent of the kernel.
    fn scalar_bamsprod_oracle(
        w0: f64,
        grads: &[f64],
        beta1: f64,
        beta2: f64,
        eta: f64,
        c_inf: f64,
        gamma: f64,
    ) -> Vec<f64> {
        let (mut w, mut m, mut v, mut vh) = (w0, 0.0f64, 0.0f64, 0.0f64);
        let mut out = vec![];
        for (k, g) in grads.iter().enumerate() {
            let t = (k + 1) as f64;
            m = beta1 * m + (1.0 - beta1) * g;
            v = beta2 * v + (1.0 - beta2) * g * g;
            vh = if v > vh { v } else { vh };
            let et = eta / t.sqrt();
            let cl = c_inf - c_inf / (gamma * t + 1.0);
            let cu = c_inf + c_inf / (gamma * t);
            let vt = if vh < cl {
                cl
            } else if vh > cu {
                cu
            } else {
                vh
            };
            w -= et * m / vt.sqrt();
            w = w.clamp(-1.0, 1.0);
            out.push(w);
        }
        out
    }

    // frozen from the scalar oracle above (first entry by hand:
    // ṽ = c_l(1) = 0.5, w = 0.5 − 0.1/√0.5 = 0.358578643762690...)
    const GOLDEN_BAMSPROD: [f64; 5] = [
        0.3585786437626905,
        0.2719761033842466,
        0.33864277005091326,
        0.2827410706134185,
        0.2827410706134185,
    ];

    #[test]
    fn bamsprod_golden_trace() {
        let grads = [1.0, 1.0, -1.0, 1.0, 0.0];
        let cfg = bams_cfg(0.0, 0.999, 0.1, 1.0, 1.0, 0.0);
        let oracle = scalar_bamsprod_oracle(0.5, &grads, 0.0, 0.999, 0.1, 1.0, 1.0);
        let mut state = OptimizerState::new(1);
        let mut w = v(&[0.5]);
        for (k, g) in grads.iter().enumerate() {
            let (s, wn, _) = bamsprod_step(&state, &w, &[*g], &cfg, &unit(1)).unwrap();
            state = s;
            w = wn;
            assert!(
                (w[0] - oracle[k]).abs() < 1e-12,
                "step {k}: {} vs {}",
                w[0],
                oracle[k]
            );
            assert!(
                (w[0] - GOLDEN_BAMSPROD[k]).abs() < 1e-12,
                "step {k}: {}",
                w[0]
            );
        }
        assert_eq!(state.t, 5);
    }

    #[test]
    fn bamsprod_oracle_agrees_with_momentum() {
        let grads = [0.3, -1.2, 0.7, 0.05, -0.4, 2.0, 0.0, 1.1];
        let cfg = bams_cfg(0.6, 0.99, 0.2, 0.5, 0.1, 0.0);
        let oracle = scalar_bamsprod_oracle(-0.2, &grads, 0.6, 0.99, 0.2, 0.5, 0.1);
        let mut state = OptimizerState::new(1);
        let mut w = v(&[-0.2]);
        for (k, g) in grads.iter().enumerate() {
            let (s, wn, _) = bamsprod_step(&state, &w, &[*g], &cfg, &unit(1)).unwrap();
            state = s;
            w = wn;
            assert!((w[0] - oracle[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let w = v(&[0.3, -0.6]);
        for kind in [
            OptimizerKind::Adam,
            OptimizerKind::Amsgrad,
            OptimizerKind::Bamsprod,
            OptimizerKind::Adabound,
            OptimizerKind::Amsbound,
            OptimizerKind::Sgdm,
        ] {
            let cfg = bams_cfg(0.9, 0.999, 0.1, 1.0, 1e-3, 1e-8);
            let mut state = OptimizerState::new(2);
            let mut cur = w.clone();
            for _ in 0..50 {
                let (s, wn, _) = step(kind, &state, &cur, &[0.0, 0.0], &cfg, &unit(2)).unwrap();
                state = s;
                cur = wn;
            }
            assert_eq!(cur, w, "{kind}");
            assert_eq!(state.v_hat, Vector::zeros(2), "{kind}");
        }
    }

    #[test]
    fn adam_one_step_by_hand() {
        let cfg = OptimizerConfig {
            eta: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 0.0,
            ..OptimizerConfig::default()
        };
        let (s, w, stats) =
            adam_step(&OptimizerState::new(1), &v(&[0.5]), &[1.0], &cfg, &unit(1)).unwrap();
        assert!((s.m[0] - 0.1).abs() < 1e-15);
        assert!((s.v[0] - 0.001).abs() < 1e-15);
        // 0.1 · 0.1 / √0.001 = 0.316227766...
        assert!((w[0] - (0.5 - 0.31622776601683794)).abs() < 1e-12);
        assert!((w[0] - 0.1838).abs() < 1e-4);
        assert_eq!(stats.eta_t, 0.1);
    }

    #[test]
    fn adam_step_tends_to_unit_ratio_under_constant_gradient() {
        let cfg = OptimizerConfig {
            eta: 1e-3,
            beta1: 0.0,
            beta2: 0.9,
            epsilon: 0.0,
            eta_schedule: EtaSchedule::Constant,
            ..OptimizerConfig::default()
        };
        let box_ = FeasibleBox::cube(1, -1e9, 1e9).unwrap();
        let mut state = OptimizerState::new(1);
        let mut w = v(&[0.0]);
        let mut last = 0.0;
        for _ in 0..400 {
            let (s, wn, _) = adam_step(&state, &w, &[2.5], &cfg, &box_).unwrap();
            last = w[0] - wn[0];
            state = s;
            w = wn;
        }
        // v → g², so the step → η |m| / |g| = η
        assert!((last - 1e-3).abs() < 1e-9);
    }

    #[test]
    fn amsgrad_one_step_and_running_max() {
        let cfg = OptimizerConfig {
            eta: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 0.0,
            ..OptimizerConfig::default()
        };
        let (s, w, _) =
            amsgrad_step(&OptimizerState::new(1), &v(&[0.5]), &[1.0], &cfg, &unit(1)).unwrap();
        assert!((w[0] - (0.5 - 0.31622776601683794)).abs() < 1e-12);
        assert_eq!(s.v_hat, s.v);
        // a smaller gradient keeps v̂ at its previous level
        let (s2, _, _) = amsgrad_step(&s, &w, &[0.0], &cfg, &unit(1)).unwrap();
        assert!(s2.v[0] < s.v[0]);
        assert_eq!(s2.v_hat[0], s.v_hat[0]);
        assert_eq!(s2.v_tilde[0], s.v_hat[0]);
    }

    #[test]
    fn running_max_sequence() {
        // drive v through 0.5, 0.3, 0.7 with β₂ = 0 so that v_t = g_t²
        let cfg = OptimizerConfig {
            beta1: 0.0,
            beta2: 0.0,
            c_inf: Some(1.0),
            unbounded: true,
            ..OptimizerConfig::default()
        };
        let mut state = OptimizerState::new(1);
        let w = v(&[0.0]);
        let mut seen = vec![];
        for vt in [0.5f64, 0.3, 0.7] {
            let (s, _, _) = bamsprod_step(&state, &w, &[vt.sqrt()], &cfg, &unit(1)).unwrap();
            seen.push(s.v_hat[0]);
            state = s;
        }
        let expected = [0.5, 0.5, 0.7];
        for (a, b) in seen.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn nonfinite_gradient_aborts_without_touching_state() {
        let cfg = bams_cfg(0.9, 0.999, 0.1, 1.0, 1e-3, 1e-8);
        let mut opt = crate::optim::Optimizer::new(OptimizerKind::Bamsprod, cfg, 2).unwrap();
        let w = v(&[0.1, 0.2]);
        opt.step(&w, &[0.5, -0.5], &unit(2)).unwrap();
        let before = opt.state().clone();
        for bad in [f64::NAN, f64::INFINITY] {
            assert!(matches!(
                opt.step(&w, &[bad, 0.0], &unit(2)),
                Err(Error::NonFinite(_))
            ));
            assert_eq!(opt.state(), &before);
        }
        assert!(matches!(
            opt.step(&w, &[0.0], &unit(2)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn adabound_collapsed_bounds_equal_sgd() {
        let mut cfg = OptimizerConfig {
            eta: 0.3,
            beta1: 0.0,
            rate_bounds: RateBounds {
                final_lr: 0.3,
                gamma: f64::MAX,
            },
            ..OptimizerConfig::default()
        };
        assert_eq!(cfg.rate_bounds.at(1), (0.3, 0.3));
        let grads = [0.5, -1.5, 2.0, 0.25, -0.75];
        let (mut sa, mut sb) = (OptimizerState::new(1), OptimizerState::new(1));
        let (mut wa, mut wb) = (v(&[0.1]), v(&[0.1]));
        for g in grads {
            let (s, w, _) = adabound_step(&sa, &wa, &[g], &cfg, &unit(1)).unwrap();
            sa = s;
            wa = w;
            let (s, w, _) = sgdm_step(&sb, &wb, &[g], &cfg, &unit(1)).unwrap();
            sb = s;
            wb = w;
            assert_eq!(wa, wb);
        }
        cfg.beta1 = 0.5;
        assert!(cfg.validate(OptimizerKind::Adabound).is_ok());
    }

    #[test]
    fn adabound_scalar_trace() {
        // hand trace: β₁=0, β₂=0.5, η=1, final_lr=0.2, γ=1, ε=0, g = [2, 1]
        // t=1: v=2, raw=1/√2≈0.7071, bounds [0.1, 0.4] → 0.4, w = 0.9 − 0.4·2 = 0.1
        // t=2: v=1.5, raw=0.8165, bounds [0.2·(1−1/3), 0.2·1.5] = [0.1333, 0.3] → 0.3,
        //      decay 1/√2 → rate 0.212132, w = 0.1 − 0.212132 = −0.112132
        let cfg = OptimizerConfig {
            eta: 1.0,
            beta1: 0.0,
            beta2: 0.5,
            epsilon: 0.0,
            rate_bounds: RateBounds {
                final_lr: 0.2,
                gamma: 1.0,
            },
            ..OptimizerConfig::default()
        };
        let (s, w, st) =
            adabound_step(&OptimizerState::new(1), &v(&[0.9]), &[2.0], &cfg, &unit(1)).unwrap();
        assert!((w[0] - 0.1).abs() < 1e-12);
        assert!((st.lr_max - 0.4).abs() < 1e-12);
        let (_, w, _) = adabound_step(&s, &w, &[1.0], &cfg, &unit(1)).unwrap();
        assert!((w[0] - (0.1 - 0.3 / 2f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn sgdm_examples() {
        let cfg = OptimizerConfig {
            eta: 0.5,
            beta1: 0.9,
            ..OptimizerConfig::default()
        };
        // t=1: m=1, w=0.5−0.5=0 ; t=2: m=0.9+1=1.9, w=0−(0.5/√2)·1.9
        let (s, w, _) =
            sgdm_step(&OptimizerState::new(1), &v(&[0.5]), &[1.0], &cfg, &unit(1)).unwrap();
        assert_eq!(w[0], 0.0);
        let (_, w, _) = sgdm_step(&s, &w, &[1.0], &cfg, &unit(1)).unwrap();
        assert!((w[0] + 0.5 / 2f64.sqrt() * 1.9).abs() < 1e-12);

        let plain = OptimizerConfig { beta1: 0.0, ..cfg };
        let (_, w, _) = sgdm_step(
            &OptimizerState::new(1),
            &v(&[0.2]),
            &[0.3],
            &plain,
            &unit(1),
        )
        .unwrap();
        assert!((w[0] - (0.2 - 0.5 * 0.3)).abs() < 1e-15);
    }

    #[test]
    fn bias_correction_only_changes_adam() {
        let cfg = OptimizerConfig {
            bias_correction: true,
            epsilon: 0.0,
            ..OptimizerConfig::default()
        };
        // corrected first step moves by η·sign(g)
        let (_, w, _) =
            adam_step(&OptimizerState::new(1), &v(&[0.5]), &[3.0], &cfg, &unit(1)).unwrap();
        assert!((w[0] - 0.4).abs() < 1e-12);
        let (_, w2, _) =
            amsgrad_step(&OptimizerState::new(1), &v(&[0.5]), &[3.0], &cfg, &unit(1)).unwrap();
        assert!((w2[0] - 0.4).abs() > 1e-3);
    }

    fn grad_stream(dim: usize, len: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(-3.0f64..3.0, dim), len)
    }

    proptest! {
        #[test]
        fn unbounded_bamsprod_is_amsgrad(stream in (1usize..5).prop_flat_map(|d| grad_stream(d, 60))) {
            let d = stream[0].len();
            let mut cfg = bams_cfg(0.9, 0.999, 0.1, 1.0, 1e-3, 1e-8);
            cfg.unbounded = true;
            let (mut sa, mut sb) = (OptimizerState::new(d), OptimizerState::new(d));
            let (mut wa, mut wb) = (Vector::zeros(d), Vector::zeros(d));
            for g in &stream {
                let (s, w, _) = bamsprod_step(&sa, &wa, g, &cfg, &unit(d)).unwrap();
                sa = s; wa = w;
                let (s, w, _) = amsgrad_step(&sb, &wb, g, &cfg, &unit(d)).unwrap();
                sb = s; wb = w;
                prop_assert_eq!(&wa, &wb);
                prop_assert_eq!(&sa, &sb);
            }
        }

        // AMSGrad with the max line removed must be exactly Adam: drive both
        // through a stream where v never decreases, so the max is inactive.
        #[test]
        fn amsgrad_without_max_is_adam(mags in prop::collection::vec(0.0f64..1.0, 40), signs in prop::collection::vec(any::<bool>(), 40)) {
            let mut g = 0.1f64;
            let cfg = OptimizerConfig { beta1: 0.7, beta2: 0.9, ..OptimizerConfig::default() };
            let (mut sa, mut sb) = (OptimizerState::new(1), OptimizerState::new(1));
            let (mut wa, mut wb) = (Vector::zeros(1), Vector::zeros(1));
            for (mag, s) in mags.iter().zip(&signs) {
                g += mag;
                let gs = if *s { g } else { -g };
                let (s1, w1, _) = adam_step(&sa, &wa, &[gs], &cfg, &unit(1)).unwrap();
                let (s2, w2, _) = amsgrad_step(&sb, &wb, &[gs], &cfg, &unit(1)).unwrap();
                prop_assert_eq!(&w1, &w2);
                prop_assert_eq!(&s1.v, &s2.v);
                sa = s1; wa = w1; sb = s2; wb = w2;
            }
        }

        #[test]
        fn iterates_stay_feasible(
            stream in (1usize..4).prop_flat_map(|d| grad_stream(d, 40)),
            kind_ix in 0usize..6,
        ) {
            let kinds = [OptimizerKind::Sgdm, OptimizerKind::Adam, OptimizerKind::Amsgrad, OptimizerKind::Adabound, OptimizerKind::Amsbound, OptimizerKind::Bamsprod];
            let kind = kinds[kind_ix];
            let d = stream[0].len();
            let f = FeasibleBox::cube(d, -0.3, 0.6).unwrap();
            let cfg = OptimizerConfig { eta: 2.0, c_inf: Some(0.5), beta1_schedule: Beta1Schedule::Harmonic, ..OptimizerConfig::default() };
            let mut s = OptimizerState::new(d);
            let mut w = Vector::zeros(d);
            for g in &stream {
                let (s2, w2, _) = step(kind, &s, &w, g, &cfg, &f).unwrap();
                prop_assert!(f.contains(&w2));
                s = s2; w = w2;
            }
        }
    }
}
