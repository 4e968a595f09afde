//! Mini-batch training with any registered optimizer.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::binarize::sign;
use crate::error::{check_dims, Error, Result};
use crate::numerics::{project_box, FeasibleBox, Vector};
use crate::optim::{
    estimate_c_inf, eta_at, Optimizer, OptimizerConfig, OptimizerKind, WARMUP_STEPS,
};

use super::{parameter_box, Dataset, LossKind, Model};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: LossKind,
    /// Every proxy is kept in `[−bound, bound]`.
    pub param_bound: f64,
    /// Train a full-precision twin alongside to report `Γ`.
    pub track_gamma: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 64,
            seed: 0,
            loss: LossKind::Mse,
            param_bound: 1.0,
            track_gamma: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainRow {
    pub epoch: usize,
    /// Mean of the batch losses seen during the epoch.
    pub train_loss: f64,
    pub test_loss: f64,
    /// Variance of `train_loss` over the trailing quarter of the run.
    pub var_tail: f64,
    /// Mean `Γ_t` over the epoch's steps (`0` when not tracked).
    pub gamma_mean: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<TrainRow>,
    /// Set when a non-finite loss stopped training early.
    pub diverged: Option<String>,
    pub c_inf: Option<f64>,
    pub stayed_feasible: bool,
}

pub const TRAIN_LOG_CSV_HEADER: &str = "epoch,train_loss,test_loss,var_tail,gamma_mean";

impl TrainLog {
    pub fn final_train_loss(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.train_loss)
    }

    pub fn final_var_tail(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.var_tail)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRAIN_LOG_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.epoch, r.train_loss, r.test_loss, r.var_tail, r.gamma_mean
            );
        }
        out
    }
}

/// Mean loss and mean parameter gradient over a batch.
fn batch_gradient(
    model: &Model,
    data: &Dataset,
    idx: &[usize],
    loss: LossKind,
) -> Result<(f64, Vec<f64>)> {
    let mut total = 0.0;
    let mut grad = vec![0.0; model.num_params()];
    for &i in idx {
        let (y, tape) = model.forward(&data.inputs()[i])?;
        let (l, dy) = loss.evaluate(&y, &data.targets()[i])?;
        total += l;
        for (acc, g) in grad.iter_mut().zip(model.backward(&tape, &dy)?) {
            *acc += g;
        }
    }
    let n = idx.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((total / n, grad))
}

fn mean_loss(model: &Model, data: &Dataset, loss: LossKind) -> Result<f64> {
    if data.is_empty() {
        return Ok(f64::NAN);
    }
    let mut total = 0.0;
    for (x, t) in data.inputs().iter().zip(data.targets()) {
        total += loss.evaluate(&model.predict(x)?, t)?.0;
    }
    Ok(total / data.len() as f64)
}

fn variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

/// `‖Υ̃_t − Υ_t‖` from the binary and full-precision second moments.
fn gamma(v_bin: (&Vector, &Vector), v_fp: (&Vector, &Vector), eta_t: f64, eta_prev: f64) -> f64 {
    let ups = |cur: f64, prev: f64| cur.sqrt() / eta_t - prev.sqrt() / eta_prev;
    v_bin
        .0
        .iter()
        .zip(v_bin.1.iter())
        .zip(v_fp.0.iter().zip(v_fp.1.iter()))
        .map(|((bc, bp), (fc, fp))| {
            let d = ups(*bc, *bp) - ups(*fc, *fp);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// The optimizer(s) driving one parameter vector. Bop flips the signs of the
/// quantized weights and leaves the remaining parameters to Adam.
enum Driver {
    Single(Optimizer),
    Split {
        binary_idx: Vec<usize>,
        rest_idx: Vec<usize>,
        bop: Optimizer,
        rest: Optimizer,
        binary_box: FeasibleBox,
        rest_box: FeasibleBox,
    },
}

fn gather(xs: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| xs[i]).collect()
}

impl Driver {
    fn new(kind: OptimizerKind, cfg: &OptimizerConfig, model: &Model, bound: f64) -> Result<Self> {
        if kind != OptimizerKind::Bop {
            return Ok(Driver::Single(Optimizer::new(
                kind,
                cfg.clone(),
                model.num_params(),
            )?));
        }
        let mask = model.quantized_mask();
        let binary_idx: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
        let rest_idx: Vec<usize> = (0..mask.len()).filter(|&i| !mask[i]).collect();
        if binary_idx.is_empty() || rest_idx.is_empty() {
            return Err(Error::Config(
                "bop training needs binary weights and biases".into(),
            ));
        }
        Ok(Driver::Split {
            bop: Optimizer::new(OptimizerKind::Bop, cfg.clone(), binary_idx.len())?,
            rest: Optimizer::new(OptimizerKind::Adam, cfg.clone(), rest_idx.len())?,
            binary_box: FeasibleBox::cube(binary_idx.len(), -1.0, 1.0)?,
            rest_box: FeasibleBox::cube(rest_idx.len(), -bound, bound)?,
            binary_idx,
            rest_idx,
        })
    }

    /// Bop starts from the signs of the initial proxies.
    fn prepare(&self, params: &mut [f64]) {
        if let Driver::Split { binary_idx, .. } = self {
            for &i in binary_idx {
                params[i] = sign(params[i]);
            }
        }
    }

    fn step(&mut self, params: &[f64], grad: &[f64], feasible: &FeasibleBox) -> Result<Vec<f64>> {
        match self {
            Driver::Single(opt) => Ok(opt
                .step(&Vector::from_slice(params)?, grad, feasible)?
                .0
                .into_inner()),
            Driver::Split {
                binary_idx,
                rest_idx,
                bop,
                rest,
                binary_box,
                rest_box,
            } => {
                let wb = Vector::new(gather(params, binary_idx))?;
                let wr = Vector::new(gather(params, rest_idx))?;
                let (nb, _) = bop.step(&wb, &gather(grad, binary_idx), binary_box)?;
                let (nr, _) = rest.step(&wr, &gather(grad, rest_idx), rest_box)?;
                let mut out = params.to_vec();
                for (&i, &x) in binary_idx.iter().zip(nb.iter()) {
                    out[i] = x;
                }
                for (&i, &x) in rest_idx.iter().zip(nr.iter()) {
                    out[i] = x;
                }
                Ok(out)
            }
        }
    }

    fn second_moment(&self) -> Option<&Vector> {
        match self {
            Driver::Single(opt) if opt.kind().is_adaptive() => Some(&opt.state().v),
            _ => None,
        }
    }
}

/// Trains `model` in place. Deterministic in `options.seed`.
pub fn train(
    model: &mut Model,
    train_set: &Dataset,
    test_set: &Dataset,
    kind: OptimizerKind,
    cfg: &OptimizerConfig,
    options: &TrainOptions,
) -> Result<TrainLog> {
    if options.epochs == 0 || options.batch_size == 0 {
        return Err(Error::Config(
            "epochs and batch size must be at least 1".into(),
        ));
    }
    if train_set.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    for data in [train_set, test_set] {
        if let (Some(x), Some(t)) = (data.inputs().first(), data.targets().first()) {
            check_dims(model.input_dim(), x.len())?;
            check_dims(model.output_dim(), t.len())?;
        }
    }
    let feasible = parameter_box(model, options.param_bound)?;
    let loss = options.loss;

    let mut cfg = cfg.clone();
    let mut params = project_box(&Vector::new(model.params())?, &feasible)?.into_inner();
    model.set_params(&params)?;
    if kind == OptimizerKind::Bamsprod && cfg.needs_warmup(kind) {
        let order: Vec<usize> = (0..train_set.len()).collect();
        let grads = order
            .chunks(options.batch_size)
            .take(WARMUP_STEPS as usize)
            .map(|idx| Vector::new(batch_gradient(model, train_set, idx, loss)?.1))
            .collect::<Result<Vec<_>>>()?;
        cfg.c_inf = Some(estimate_c_inf(&grads)?);
    }
    let c_inf = if kind == OptimizerKind::Bamsprod {
        cfg.c_inf
    } else {
        None
    };

    let mut driver = Driver::new(kind, &cfg, model, options.param_bound)?;
    driver.prepare(&mut params);
    model.set_params(&params)?;
    let mut twin = if options.track_gamma && kind.is_adaptive() {
        let twin_model = model.full_precision_twin();
        let opt = Driver::new(kind, &cfg, &twin_model, options.param_bound)?;
        Some((twin_model, opt))
    } else {
        None
    };

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let window = (options.epochs / 4).max(1);
    let mut history = Vec::with_capacity(options.epochs);
    let mut rows = Vec::with_capacity(options.epochs);
    let mut stayed_feasible = true;
    let mut t: u64 = 0;

    for epoch in 1..=options.epochs {
        order.shuffle(&mut rng);
        let mut batch_losses = 0.0;
        let mut batches = 0usize;
        let mut gamma_sum = 0.0;
        for idx in order.chunks(options.batch_size) {
            let (l, g) = batch_gradient(model, train_set, idx, loss)?;
            if !l.is_finite() || g.iter().any(|x| !x.is_finite()) {
                return Ok(TrainLog {
                    rows,
                    diverged: Some(format!("non-finite loss at epoch {epoch}, step {}", t + 1)),
                    c_inf,
                    stayed_feasible,
                });
            }
            t += 1;
            let v_prev = driver.second_moment().cloned();
            params = driver.step(&params, &g, &feasible)?;
            model.set_params(&params)?;
            stayed_feasible &= feasible.contains(&Vector::from_slice(&params)?);

            if let Some((twin_model, twin_opt)) = twin.as_mut() {
                let fp_prev = twin_opt.second_moment().cloned();
                let (_, g_fp) = batch_gradient(twin_model, train_set, idx, loss)?;
                let fp_params = twin_opt.step(&twin_model.params(), &g_fp, &feasible)?;
                twin_model.set_params(&fp_params)?;
                if let (Some(vb), Some(vb_prev), Some(vf), Some(vf_prev)) = (
                    driver.second_moment(),
                    v_prev.as_ref(),
                    twin_opt.second_moment(),
                    fp_prev.as_ref(),
                ) {
                    let eta_t = eta_at(t, &cfg);
                    let eta_prev = eta_at((t - 1).max(1), &cfg);
                    gamma_sum += gamma((vb, vb_prev), (vf, vf_prev), eta_t, eta_prev);
                }
            }
            batch_losses += l;
            batches += 1;
        }
        let train_loss = batch_losses / batches as f64;
        history.push(train_loss);
        let tail = &history[history.len().saturating_sub(window)..];
        rows.push(TrainRow {
            epoch,
            train_loss,
            test_loss: mean_loss(model, test_set, loss)?,
            var_tail: variance(tail),
            gamma_mean: gamma_sum / batches as f64,
        });
    }
    Ok(TrainLog {
        rows,
        diverged: None,
        c_inf,
        stayed_feasible,
    })
}
