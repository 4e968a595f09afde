//! Online convex optimization harness: test problems, regret accounting and a
//! seeded runner that drives any optimizer, optionally through sign
//! binarization with the straight-through estimator.

use std::fmt::Write as _;

use crate::binarize::{compute_scale, sign_binarize, ste_backward, QuantErrorTrace, ScaleMode};
use crate::error::{Error, Result};
use crate::numerics::{FeasibleBox, Vector};
use crate::optim::{
    beta1_at, estimate_c_inf, eta_at, regret_bound, BoundStatistics, BoundTerms, Optimizer,
    OptimizerConfig, OptimizerKind, WARMUP_STEPS,
};

mod fixed_point;
mod problems;

pub use fixed_point::{best_fixed_point_1d, minimize_1d};
pub use problems::{
    adversarial_grad, adversarial_loss, condition_holds, quadratic_problem, shubert_grad,
    shubert_loss, AdversarialSequence, AlphaSchedule, CoinFlipProblem, QuadraticProblem,
    ShubertProblem, StochasticQuadratic,
};

/// Step index and seed handed to a problem; stochastic problems key their
/// randomness on both.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Round {
    pub t: u64,
    pub seed: u64,
}

/// A sequence of losses `f_1, f_2, …` over a box.
///
/// `loss` and `grad` are evaluated at the point the model actually uses
/// (the quantized weights in binary runs).
pub trait OnlineProblem: Sync {
    fn name(&self) -> &'static str;
    fn dim(&self) -> usize;
    fn feasible(&self) -> &FeasibleBox;
    fn initial_point(&self, seed: u64) -> Vector;
    fn loss(&self, round: Round, w: &Vector) -> Result<f64>;
    fn grad(&self, round: Round, w: &Vector) -> Result<Vector>;
    fn best_fixed_point(&self, horizon: u64, seed: u64) -> Result<Vector>;
    /// Problem-imposed scale `α_t` for binary runs; `None` derives it from the weights.
    fn quant_scale(&self, _t: u64) -> Option<f64> {
        None
    }
}

pub fn best_fixed_point(problem: &dyn OnlineProblem, horizon: u64, seed: u64) -> Result<Vector> {
    problem.best_fixed_point(horizon, seed)
}

/// Cumulative and average regret against a fixed comparator.
#[derive(Clone, Debug, PartialEq)]
pub struct RegretTracker {
    best_fixed_point: Vector,
    cumulative_loss: f64,
    best_fixed_cumloss: f64,
    per_step_losses: Vec<f64>,
    comparator_losses: Vec<f64>,
    regret_series: Vec<f64>,
    avg_regret_series: Vec<f64>,
}

impl RegretTracker {
    pub fn new(best_fixed_point: Vector) -> Self {
        Self {
            best_fixed_point,
            cumulative_loss: 0.0,
            best_fixed_cumloss: 0.0,
            per_step_losses: Vec::new(),
            comparator_losses: Vec::new(),
            regret_series: Vec::new(),
            avg_regret_series: Vec::new(),
        }
    }

    /// Appends one step and returns `R_t`.
    pub fn record(&mut self, loss: f64, comparator_loss: f64) -> f64 {
        self.cumulative_loss += loss;
        self.best_fixed_cumloss += comparator_loss;
        self.per_step_losses.push(loss);
        self.comparator_losses.push(comparator_loss);
        let regret = self.cumulative_loss - self.best_fixed_cumloss;
        self.regret_series.push(regret);
        self.avg_regret_series.push(regret / self.len() as f64);
        regret
    }

    pub fn len(&self) -> usize {
        self.per_step_losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_step_losses.is_empty()
    }

    pub fn best_fixed_point(&self) -> &Vector {
        &self.best_fixed_point
    }

    pub fn cumulative_loss(&self) -> f64 {
        self.cumulative_loss
    }

    pub fn best_fixed_cumloss(&self) -> f64 {
        self.best_fixed_cumloss
    }

    pub fn per_step_losses(&self) -> &[f64] {
        &self.per_step_losses
    }

    pub fn comparator_losses(&self) -> &[f64] {
        &self.comparator_losses
    }

    pub fn regret_series(&self) -> &[f64] {
        &self.regret_series
    }

    pub fn avg_regret_series(&self) -> &[f64] {
        &self.avg_regret_series
    }

    /// `R_t` for a 1-based step.
    pub fn regret_at(&self, t: u64) -> Option<f64> {
        self.regret_series
            .get((t as usize).checked_sub(1)?)
            .copied()
    }

    pub fn avg_regret_at(&self, t: u64) -> Option<f64> {
        self.avg_regret_series
            .get((t as usize).checked_sub(1)?)
            .copied()
    }

    /// `R_t` re-summed from the stored per-step losses.
    pub fn recompute_regret(&self, t: u64) -> f64 {
        let n = t as usize;
        let mut cum = 0.0;
        let mut best = 0.0;
        for (l, c) in self.per_step_losses[..n]
            .iter()
            .zip(&self.comparator_losses[..n])
        {
            cum += l;
            best += c;
        }
        cum - best
    }
}

/// How a run maps proxies to evaluated points and what it records.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOptions {
    /// Evaluate at `α ⊙ sign(w)` and back-propagate through the STE.
    pub binary: bool,
    /// Used when the problem does not impose `α_t`.
    pub scale: ScaleMode,
    /// STE mask threshold on the proxy.
    pub ste_clip: Option<f64>,
    /// Coordinate-wise clipping at `±G` of the loss gradient, before the STE.
    pub grad_clip: Option<f64>,
    /// Keep every `log_every`-th row (plus the first and last).
    pub log_every: u64,
    /// Overrides the problem's starting point.
    pub initial: Option<Vector>,
    /// Steps at which to evaluate the regret bound.
    pub bound_checkpoints: Vec<u64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            binary: false,
            scale: ScaleMode::MeanAbs,
            ste_clip: None,
            grad_clip: None,
            log_every: 1,
            initial: None,
            bound_checkpoints: Vec::new(),
        }
    }
}

/// One logged step: the proxy, the evaluated point, and the diagnostics
/// produced by the update that followed.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRow {
    pub step: u64,
    pub w: Vector,
    pub point: Vector,
    pub loss: f64,
    pub regret: f64,
    pub avg_regret: f64,
    pub gamma: f64,
    pub lr_min: f64,
    pub lr_max: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundCheck {
    pub t: u64,
    pub regret: f64,
    pub terms: BoundTerms,
}

impl BoundCheck {
    pub fn holds(&self) -> bool {
        self.regret <= self.terms.total()
    }
}

#[derive(Clone, Debug)]
pub struct RunLog {
    pub problem: &'static str,
    pub optimizer: OptimizerKind,
    pub binary: bool,
    pub seed: u64,
    pub horizon: u64,
    pub rows: Vec<RunRow>,
    pub regret: RegretTracker,
    pub quant_trace: QuantErrorTrace,
    /// Resolved BAMSProd asymptote, when one was used.
    pub c_inf: Option<f64>,
    pub final_w: Vector,
    pub final_point: Vector,
    /// Every proxy and evaluated point stayed inside the box.
    pub stayed_feasible: bool,
    pub bound_checks: Vec<BoundCheck>,
}

pub const RUN_LOG_CSV_HEADER: &str = "step,w,loss,regret,avg_regret,gamma,lr_min,lr_max";

fn join(v: &Vector) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

impl RunLog {
    pub fn final_loss(&self) -> f64 {
        self.regret
            .per_step_losses()
            .last()
            .copied()
            .unwrap_or(f64::NAN)
    }

    pub fn final_avg_regret(&self) -> f64 {
        self.regret
            .avg_regret_series()
            .last()
            .copied()
            .unwrap_or(f64::NAN)
    }

    /// Rows `step,w,loss,…`; `w` is the evaluated point, coordinates joined by `;`.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(RUN_LOG_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.step,
                join(&r.point),
                r.loss,
                r.regret,
                r.avg_regret,
                r.gamma,
                r.lr_min,
                r.lr_max
            );
        }
        out
    }
}

/// Runs `optimizer` (by name) for `horizon` steps.
pub fn run_online(
    problem: &dyn OnlineProblem,
    optimizer: &str,
    cfg: &OptimizerConfig,
    horizon: u64,
    seed: u64,
    binary: bool,
) -> Result<RunLog> {
    let kind: OptimizerKind = optimizer.parse()?;
    let options = RunOptions {
        binary,
        ..RunOptions::default()
    };
    run_online_with(problem, kind, cfg, horizon, seed, &options)
}

struct Evaluator<'a> {
    problem: &'a dyn OnlineProblem,
    options: &'a RunOptions,
}

impl Evaluator<'_> {
    /// The point the loss sees and the scale used to reach it.
    fn point(&self, t: u64, w: &Vector) -> Result<(Vector, f64)> {
        if !self.options.binary {
            return Ok((w.clone(), 1.0));
        }
        let alpha = match self.problem.quant_scale(t) {
            Some(a) => a,
            None => compute_scale(w, self.options.scale)?,
        };
        Ok((sign_binarize(w).scale(alpha)?, alpha))
    }

    /// Loss gradient at the evaluated point, clipped if requested.
    fn loss_grad(&self, round: Round, point: &Vector) -> Result<Vector> {
        let g = self.problem.grad(round, point)?;
        match self.options.grad_clip {
            Some(c) => g.map(|x| x.clamp(-c, c)),
            None => Ok(g),
        }
    }

    /// Gradient with respect to the proxy.
    fn proxy_grad(&self, round: Round, w: &Vector, point: &Vector, alpha: f64) -> Result<Vector> {
        let g = self.loss_grad(round, point)?;
        if self.options.binary {
            ste_backward(&g, w, self.options.ste_clip)?.scale(alpha)
        } else {
            Ok(g)
        }
    }
}

/// Running sums feeding the regret bound.
struct BoundAccumulator {
    grad_sq: Vec<f64>,
    beta1_over_eta: f64,
    l_inf: f64,
    deviation_root: f64,
    deviation: f64,
}

impl BoundAccumulator {
    fn new(dim: usize) -> Self {
        Self {
            grad_sq: vec![0.0; dim],
            beta1_over_eta: 0.0,
            l_inf: 0.0,
            deviation_root: 0.0,
            deviation: 0.0,
        }
    }

    fn record(
        &mut self,
        t: u64,
        cfg: &OptimizerConfig,
        g: &Vector,
        w: &Vector,
        comparator: &Vector,
        v_tilde_prev: &Vector,
    ) {
        for (acc, gi) in self.grad_sq.iter_mut().zip(g.iter()) {
            *acc += gi * gi;
        }
        self.l_inf = self.l_inf.max(g.linf_norm());
        self.beta1_over_eta += beta1_at(t, cfg) / eta_at(t, cfg);
        let sq: f64 = w
            .iter()
            .zip(comparator.iter())
            .zip(v_tilde_prev.iter())
            .map(|((x, a), v)| (v.sqrt() + cfg.epsilon) * (x - a) * (x - a))
            .sum();
        self.deviation_root += sq.sqrt().sqrt();
        self.deviation += sq.sqrt();
    }

    fn evaluate(
        &self,
        t: u64,
        cfg: &OptimizerConfig,
        v_hat: &Vector,
        d_inf: f64,
    ) -> Result<BoundTerms> {
        regret_bound(&BoundStatistics {
            v_hat_final: v_hat.clone(),
            grad_history_norms: self.grad_sq.iter().map(|s| s.sqrt()).collect(),
            d_inf,
            l_inf: self.l_inf,
            eta: cfg.eta,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            horizon: t,
            beta1_over_eta_sum: self.beta1_over_eta,
            deviation_root_sum: self.deviation_root,
            deviation_sum: self.deviation,
        })
    }
}

/// Probes the first warm-up rounds at the starting point and returns `G∞`.
pub fn warmup_c_inf(
    problem: &dyn OnlineProblem,
    options: &RunOptions,
    w0: &Vector,
    seed: u64,
) -> Result<f64> {
    let eval = Evaluator { problem, options };
    let grads = (1..=WARMUP_STEPS)
        .map(|t| {
            let round = Round { t, seed };
            let (point, alpha) = eval.point(t, w0)?;
            eval.proxy_grad(round, w0, &point, alpha)
        })
        .collect::<Result<Vec<_>>>()?;
    estimate_c_inf(&grads)
}

/// Runs `kind` for `horizon` steps under `options`. Deterministic in `seed`.
pub fn run_online_with(
    problem: &dyn OnlineProblem,
    kind: OptimizerKind,
    cfg: &OptimizerConfig,
    horizon: u64,
    seed: u64,
    options: &RunOptions,
) -> Result<RunLog> {
    if horizon == 0 {
        return Err(Error::Config("horizon must be at least 1".into()));
    }
    if kind == OptimizerKind::Bop && !options.binary {
        return Err(Error::Config("bop trains binary weights only".into()));
    }
    let dim = problem.dim();
    let feasible = problem.feasible();
    let mut w = match &options.initial {
        Some(w0) => w0.clone(),
        None => problem.initial_point(seed),
    };
    if w.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: w.dim(),
        });
    }
    if kind == OptimizerKind::Bop {
        w = sign_binarize(&w);
    }

    let mut cfg = cfg.clone();
    if kind == OptimizerKind::Bamsprod && cfg.needs_warmup(kind) {
        cfg.c_inf = Some(warmup_c_inf(problem, options, &w, seed)?);
    }
    let c_inf = if kind == OptimizerKind::Bamsprod {
        cfg.c_inf
    } else {
        None
    };

    let comparator = problem.best_fixed_point(horizon, seed)?;
    let eval = Evaluator { problem, options };
    let mut optimizer = Optimizer::new(kind, cfg.clone(), dim)?;
    // full-precision twin providing Υ_t for Γ_t in binary runs
    let mut shadow = if options.binary && kind.is_adaptive() {
        Some((Optimizer::new(kind, cfg.clone(), dim)?, w.clone()))
    } else {
        None
    };
    let mut tracker = RegretTracker::new(comparator.clone());
    let mut trace = QuantErrorTrace::new();
    let mut bound = BoundAccumulator::new(dim);
    let mut checkpoints = options.bound_checkpoints.clone();
    checkpoints.sort_unstable();
    checkpoints.dedup();
    let mut next_checkpoint = checkpoints.iter().copied().peekable();
    let mut bound_checks = Vec::new();
    let mut rows = Vec::new();
    let mut stayed_feasible = true;
    let log_every = options.log_every.max(1);
    let mut last_point = w.clone();

    for t in 1..=horizon {
        let round = Round { t, seed };
        let (point, alpha) = eval.point(t, &w)?;
        stayed_feasible &= feasible.contains(&w) && feasible.contains(&point);
        let loss = problem.loss(round, &point)?;
        let comparator_loss = problem.loss(round, &comparator)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("loss at step {t} is {loss}")));
        }
        let regret = tracker.record(loss, comparator_loss);
        let g = eval.proxy_grad(round, &w, &point, alpha)?;

        let v_prev = optimizer.state().v.clone();
        let v_tilde_prev = optimizer.state().v_tilde.clone();
        let (w_next, stats) = optimizer.step(&w, g.as_slice(), feasible)?;

        let gamma = if kind.is_adaptive() {
            let eta_t = eta_at(t, &cfg);
            let eta_prev = eta_at((t - 1).max(1), &cfg);
            let v_t = &optimizer.state().v;
            match shadow.as_mut() {
                Some((twin, w_fp)) => {
                    let v_fp_prev = twin.state().v.clone();
                    let g_fp = eval.loss_grad(round, w_fp)?;
                    let (next, _) = twin.step(w_fp, g_fp.as_slice(), feasible)?;
                    *w_fp = next;
                    trace.record_upsilon(
                        &twin.state().v,
                        &v_fp_prev,
                        eta_t,
                        eta_prev,
                        v_t,
                        &v_prev,
                    )?
                }
                None => trace.record_upsilon(v_t, &v_prev, eta_t, eta_prev, v_t, &v_prev)?,
            }
        } else {
            0.0
        };

        if !checkpoints.is_empty() {
            bound.record(t, &cfg, &g, &w, &comparator, &v_tilde_prev);
            if next_checkpoint.peek() == Some(&t) {
                next_checkpoint.next();
                let terms =
                    bound.evaluate(t, &cfg, &optimizer.state().v_hat, feasible.diameter_inf())?;
                bound_checks.push(BoundCheck { t, regret, terms });
            }
        }

        if t == 1 || t == horizon || t % log_every == 0 {
            rows.push(RunRow {
                step: t,
                w: w.clone(),
                point: point.clone(),
                loss,
                regret,
                avg_regret: regret / t as f64,
                gamma,
                lr_min: stats.lr_min,
                lr_max: stats.lr_max,
            });
        }
        last_point = point;
        w = w_next;
    }
    stayed_feasible &= feasible.contains(&w);

    Ok(RunLog {
        problem: problem.name(),
        optimizer: kind,
        binary: options.binary,
        seed,
        horizon,
        rows,
        regret: tracker,
        quant_trace: trace,
        c_inf,
        final_point: if options.binary {
            eval.point(horizon + 1, &w)
                .map(|(p, _)| p)
                .unwrap_or(last_point)
        } else {
            w.clone()
        },
        final_w: w,
        stayed_feasible,
        bound_checks,
    })
}

/// Steps needed by clipped and unclipped Adam-with-STE to reach a loss gap.
#[derive(Clone, Debug)]
pub struct ClippingOutcome {
    /// `horizon + 1` when the tolerance is never reached.
    pub clipped_steps: u64,
    pub unclipped_steps: u64,
    pub clipped: RunLog,
    pub unclipped: RunLog,
}

/// First step whose loss is within `tolerance` of the comparator's.
pub fn steps_to_tolerance(log: &RunLog, tolerance: f64) -> u64 {
    let r = &log.regret;
    r.per_step_losses()
        .iter()
        .zip(r.comparator_losses())
        .position(|(l, c)| l - c <= tolerance)
        .map_or(log.horizon + 1, |i| i as u64 + 1)
}

pub fn clipping_slowdown_experiment(
    problem: &dyn OnlineProblem,
    clip: f64,
    scale: ScaleMode,
    cfg: &OptimizerConfig,
    horizon: u64,
    tolerance: f64,
    seed: u64,
) -> Result<ClippingOutcome> {
    if !(clip > 0.0) {
        return Err(Error::Config(format!(
            "clip threshold must be positive, got {clip}"
        )));
    }
    let base = RunOptions {
        binary: true,
        scale,
        log_every: horizon,
        ..RunOptions::default()
    };
    let unclipped = run_online_with(problem, OptimizerKind::Adam, cfg, horizon, seed, &base)?;
    let clipped_opts = RunOptions {
        grad_clip: Some(clip),
        ..base
    };
    let clipped = run_online_with(
        problem,
        OptimizerKind::Adam,
        cfg,
        horizon,
        seed,
        &clipped_opts,
    )?;
    Ok(ClippingOutcome {
        clipped_steps: steps_to_tolerance(&clipped, tolerance),
        unclipped_steps: steps_to_tolerance(&unclipped, tolerance),
        clipped,
        unclipped,
    })
}
