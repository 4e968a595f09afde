//! Expansion of a manifest into independent cells and their execution.

use std::fmt::Write as _;
use std::time::Instant;

use bamsprod_core::models::{make_autoencoder, sparse_binary, train, LossKind, TrainOptions};
use bamsprod_core::ocoharness::{
    run_online_with, steps_to_tolerance, AdversarialSequence, AlphaSchedule, OnlineProblem,
    QuadraticProblem, RunLog, RunOptions, ShubertProblem, StochasticQuadratic,
};
use bamsprod_core::optim::{OptimizerConfig, OptimizerKind};
use bamsprod_core::FeasibleBox;

use crate::error::{CliError, Result};
use crate::grid::{expand, Assignment};
use crate::manifest::{apply_override, ExperimentKind, Manifest};

pub const SUMMARY_CSV_HEADER: &str = "experiment,cell,optimizer,seed,metric,value,feasible,status";

pub const BOUND_CSV_HEADER: &str =
    "t,regret,bound,moment,momentum,gradient,quantization,quantization_squared_form,holds";

/// The three runs a clipping cell can stand for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClipVariant {
    Unclipped,
    Clipped,
    NonBinding,
}

impl ClipVariant {
    pub fn name(self) -> &'static str {
        match self {
            ClipVariant::Unclipped => "unclipped",
            ClipVariant::Clipped => "clipped",
            ClipVariant::NonBinding => "nonbinding",
        }
    }
}

/// One (grid point × optimizer × seed) run.
#[derive(Clone, Debug)]
pub struct Cell {
    pub name: String,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub grid: Assignment,
    pub variant: Option<ClipVariant>,
    pub cfg: OptimizerConfig,
    /// The manifest with this cell's grid point applied.
    pub manifest: Manifest,
}

/// What a verdict needs from a finished cell.
#[derive(Clone, Debug, PartialEq)]
pub enum Detail {
    Online {
        /// The last evaluated point `w̃_T` (the proxy itself in full precision).
        final_latent: Vec<f64>,
        /// `(t, R_t/t)` at `T, T/2, T/4, …`.
        dyadic_avg_regret: Vec<(u64, f64)>,
        bound_checks: usize,
        bound_violations: usize,
    },
    Clipping {
        steps: u64,
        losses: Vec<f64>,
        final_proxy: Vec<f64>,
    },
    Training {
        final_loss: f64,
        var_tail: f64,
    },
}

#[derive(Clone, Debug)]
pub struct CellOutcome {
    pub cell: Cell,
    /// `(file name, contents)` pairs.
    pub files: Vec<(String, String)>,
    pub metric: &'static str,
    pub value: f64,
    pub feasible: bool,
    pub diverged: Option<String>,
    pub detail: Detail,
    pub wall_seconds: f64,
}

impl CellOutcome {
    pub fn status(&self) -> &'static str {
        if self.diverged.is_some() {
            "diverged"
        } else {
            "ok"
        }
    }

    pub fn summary_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.cell.manifest.id,
            self.cell.name,
            self.cell.optimizer,
            self.cell.seed,
            self.metric,
            self.value,
            self.feasible,
            self.status()
        )
    }
}

fn cell_name(optimizer: OptimizerKind, grid: &Assignment, variant: Option<ClipVariant>, seed: u64) -> String {
    let mut name = optimizer.name().to_string();
    for (k, v) in grid {
        let _ = write!(name, "_{k}-{v}");
    }
    if let Some(v) = variant {
        let _ = write!(name, "_{}", v.name());
    }
    let _ = write!(name, "_seed{seed}");
    name
}

/// Every cell of `manifest` after applying `extra_grid` on top of its own
/// `[sweep]` section. Fails before anything runs if any cell is invalid.
pub fn plan(manifest: &Manifest, extra_grid: &[(String, Vec<String>)], seed_offset: u64) -> Result<Vec<Cell>> {
    let mut params = manifest.sweep.clone();
    params.extend_from_slice(extra_grid);
    let points = expand(&params)?;
    let mut cells = Vec::new();
    for point in points {
        let mut m = manifest.clone();
        for (k, v) in &point {
            apply_override(&mut m, k, v)?;
        }
        m.validate()?;
        let variants: Vec<Option<ClipVariant>> = if m.kind == ExperimentKind::ClippingSlowdown {
            let mut v = vec![Some(ClipVariant::Unclipped), Some(ClipVariant::Clipped)];
            if m.problem.contains("nonbinding_clip") {
                v.push(Some(ClipVariant::NonBinding));
            }
            v
        } else {
            vec![None]
        };
        for (optimizer, table) in &m.optimizers {
            let cfg = m.optimizer_config(*optimizer, table)?;
            for &seed in &m.seeds {
                let seed = seed
                    .checked_add(seed_offset)
                    .ok_or_else(|| CliError::Usage("seed offset overflows".into()))?;
                for &variant in &variants {
                    cells.push(Cell {
                        name: cell_name(*optimizer, &point, variant, seed),
                        optimizer: *optimizer,
                        seed,
                        grid: point.clone(),
                        variant,
                        cfg: cfg.clone(),
                        manifest: m.clone(),
                    });
                }
            }
        }
    }
    Ok(cells)
}

fn cube(dim: usize, lo: f64, hi: f64) -> Result<FeasibleBox> {
    Ok(FeasibleBox::cube(dim, lo, hi)?)
}

fn dyadic(log: &RunLog) -> Vec<(u64, f64)> {
    let mut out = Vec::new();
    let mut t = log.horizon;
    while t >= 1 {
        if let Some(a) = log.regret.avg_regret_at(t) {
            out.push((t, a));
        }
        t /= 2;
    }
    out
}

fn bound_csv(log: &RunLog) -> String {
    let mut out = format!("{BOUND_CSV_HEADER}\n");
    for c in &log.bound_checks {
        let b = &c.terms;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            c.t,
            c.regret,
            b.total(),
            b.moment,
            b.momentum,
            b.gradient,
            b.quantization,
            b.quantization_squared_form,
            c.holds()
        );
    }
    out
}

fn checkpoints(spec: &str, horizon: u64) -> Result<Vec<u64>> {
    if spec == "dyadic" {
        let mut v: Vec<u64> = std::iter::successors(Some(1u64), |t| t.checked_mul(2))
            .take_while(|&t| t < horizon)
            .collect();
        v.push(horizon);
        return Ok(v);
    }
    crate::manifest::split_list(spec)
        .iter()
        .map(|s| {
            s.parse::<u64>()
                .ok()
                .filter(|&t| t >= 1 && t <= horizon)
                .ok_or_else(|| CliError::Validation(format!("bad bound checkpoint '{s}' for horizon {horizon}")))
        })
        .collect()
}

fn online_outcome(cell: &Cell, log: RunLog, metric: &'static str, value: f64, extra: Vec<(String, String)>) -> CellOutcome {
    let mut files = vec![(format!("{}.csv", cell.name), log.to_csv())];
    files.extend(extra);
    CellOutcome {
        cell: cell.clone(),
        files,
        metric,
        value,
        feasible: log.stayed_feasible,
        diverged: None,
        detail: Detail::Online {
            final_latent: log.final_point.iter().copied().collect(),
            dyadic_avg_regret: dyadic(&log),
            bound_checks: log.bound_checks.len(),
            bound_violations: log.bound_checks.iter().filter(|c| !c.holds()).count(),
        },
        wall_seconds: 0.0,
    }
}

/// Runs one cell. Deterministic in the cell.
pub fn run_cell(cell: &Cell) -> Result<CellOutcome> {
    let start = Instant::now();
    let mut outcome = run_cell_inner(cell)?;
    outcome.wall_seconds = start.elapsed().as_secs_f64();
    Ok(outcome)
}

fn run_cell_inner(cell: &Cell) -> Result<CellOutcome> {
    let m = &cell.manifest;
    let p = &m.problem;
    match m.kind {
        ExperimentKind::Autoencoder => return run_autoencoder(cell),
        ExperimentKind::ClippingSlowdown => return run_clipping(cell),
        _ => {}
    }
    let horizon = m.horizon()?;
    let mut options = RunOptions {
        binary: m.binary()?,
        log_every: m.log_every()?,
        ..RunOptions::default()
    };
    let run = |problem: &dyn OnlineProblem, options: &RunOptions| {
        run_online_with(problem, cell.optimizer, &cell.cfg, horizon, cell.seed, options)
    };
    match m.kind {
        ExperimentKind::Adversarial => {
            let alpha: f64 = p.parse_or("alpha", 1.0)?;
            let schedule = match p.parse::<f64>("alpha_end")? {
                Some(end) => AlphaSchedule::Decay { start: alpha, end },
                None => AlphaSchedule::Constant(alpha),
            };
            let problem = AdversarialSequence::new(p.parse_or("period", 101)?, schedule)?
                .with_initial(p.parse_or("initial", 0.5)?)?;
            let log = run(&problem, &options)?;
            let value = log.final_avg_regret();
            Ok(online_outcome(cell, log, "avg_regret", value, Vec::new()))
        }
        ExperimentKind::Quadratic => {
            let dim: usize = p.parse_or("dim", 2)?;
            let feasible = cube(dim, p.parse_or("lo", -1.0)?, p.parse_or("hi", 1.0)?)?;
            let problem = QuadraticProblem::random(dim, feasible, cell.seed)?;
            let mut extra = Vec::new();
            if let Some(spec) = p.get("bound_checkpoints") {
                options.bound_checkpoints = checkpoints(spec, horizon)?;
            }
            let log = run(&problem, &options)?;
            if !options.bound_checkpoints.is_empty() {
                extra.push((format!("{}_bound.csv", cell.name), bound_csv(&log)));
            }
            let value = log.final_avg_regret();
            Ok(online_outcome(cell, log, "avg_regret", value, extra))
        }
        ExperimentKind::Shubert => {
            let problem = ShubertProblem::new(cube(2, p.parse_or("lo", -5.12)?, p.parse_or("hi", 5.12)?)?)?;
            let log = run(&problem, &options)?;
            let value = log.final_loss();
            Ok(online_outcome(cell, log, "final_loss", value, Vec::new()))
        }
        ExperimentKind::Autoencoder | ExperimentKind::ClippingSlowdown => unreachable!(),
    }
}

fn run_clipping(cell: &Cell) -> Result<CellOutcome> {
    let m = &cell.manifest;
    let p = &m.problem;
    let horizon = m.horizon()?;
    let problem = StochasticQuadratic::clipping_instance(p.parse_or("dim", 4)?, cell.seed)?;
    let clip: f64 = p.require("clip")?;
    let grad_clip = match cell.variant.expect("clipping cells carry a variant") {
        ClipVariant::Unclipped => None,
        ClipVariant::Clipped => Some(clip),
        ClipVariant::NonBinding => Some(p.require("nonbinding_clip")?),
    };
    if grad_clip.is_some_and(|g: f64| !(g > 0.0)) {
        return Err(CliError::Validation("clip thresholds must be positive".into()));
    }
    let options = RunOptions {
        binary: m.binary()?,
        grad_clip,
        log_every: m.log_every()?,
        ..RunOptions::default()
    };
    let log = run_online_with(&problem, cell.optimizer, &cell.cfg, horizon, cell.seed, &options)?;
    let steps = steps_to_tolerance(&log, p.parse_or("tolerance", 1e-3)?);
    Ok(CellOutcome {
        cell: cell.clone(),
        files: vec![(format!("{}.csv", cell.name), log.to_csv())],
        metric: "steps_to_tolerance",
        value: steps as f64,
        feasible: log.stayed_feasible,
        diverged: None,
        detail: Detail::Clipping {
            steps,
            losses: log.regret.per_step_losses().to_vec(),
            final_proxy: log.final_w.iter().copied().collect(),
        },
        wall_seconds: 0.0,
    })
}

fn run_autoencoder(cell: &Cell) -> Result<CellOutcome> {
    let m = &cell.manifest;
    let p = &m.problem;
    let data_kind = p.get("data").unwrap_or("sparse_binary");
    if data_kind != "sparse_binary" {
        return Err(CliError::Validation(format!(
            "autoencoder experiments reconstruct sparse_binary data, got '{data_kind}'"
        )));
    }
    let input_dim: usize = p.parse_or("input_dim", 32)?;
    let data = sparse_binary(p.parse_or("samples", 2048)?, input_dim, cell.seed)?;
    let (train_set, test_set) = data.split(p.parse_or("train_fraction", 0.8)?);
    let mut model = make_autoencoder(input_dim, p.parse_or("hidden_dim", 16)?, cell.seed)?;
    let options = TrainOptions {
        epochs: m.experiment.require("epochs")?,
        batch_size: p.parse_or("batch_size", 64)?,
        seed: cell.seed,
        loss: LossKind::Mse,
        param_bound: p.parse_or("param_bound", 1.0)?,
        track_gamma: p.parse_or("track_gamma", true)?,
    };
    let log = train(&mut model, &train_set, &test_set, cell.optimizer, &cell.cfg, &options)?;
    Ok(CellOutcome {
        cell: cell.clone(),
        files: vec![(format!("{}.csv", cell.name), log.to_csv())],
        metric: "final_train_loss",
        value: log.final_train_loss(),
        feasible: log.stayed_feasible,
        diverged: log.diverged.clone(),
        detail: Detail::Training {
            final_loss: log.final_train_loss(),
            var_tail: log.final_var_tail(),
        },
        wall_seconds: 0.0,
    })
}
