//! PASS/FAIL verdicts for manifests carrying a `[verdict]` section. The
//! thresholds come from that section; this module only knows how to compare.

use std::collections::BTreeMap;

use crate::error::{CliError, Result};
use crate::exec::{CellOutcome, ClipVariant, Detail};
use crate::manifest::{ExperimentKind, Manifest, Table};

#[derive(Clone, Debug, PartialEq)]
pub struct Verdict {
    pub pass: bool,
    pub lines: Vec<String>,
}

impl Verdict {
    fn new() -> Self {
        Self {
            pass: true,
            lines: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, line: String) {
        self.pass &= ok;
        self.lines.push(format!("[{}] {line}", if ok { "ok" } else { "FAIL" }));
    }
}

/// `None` when the manifest has no `[verdict]` section.
pub fn evaluate(manifest: &Manifest, outcomes: &[CellOutcome]) -> Result<Option<Verdict>> {
    let t = &manifest.verdict;
    if t.keys().next().is_none() {
        return Ok(None);
    }
    let v = match manifest.kind {
        ExperimentKind::Adversarial => adversarial(t, outcomes)?,
        ExperimentKind::Quadratic => bound(t, outcomes)?,
        ExperimentKind::ClippingSlowdown => clipping(t, outcomes)?,
        ExperimentKind::Shubert => shubert(t, outcomes)?,
        ExperimentKind::Autoencoder => hyperparameters(t, outcomes)?,
    };
    Ok(Some(v))
}

fn names(t: &Table, key: &str) -> Result<Vec<String>> {
    Ok(t.list::<String>(key)?.unwrap_or_default())
}

fn cells_of<'a>(outcomes: &'a [CellOutcome], optimizer: &'a str) -> impl Iterator<Item = &'a CellOutcome> + 'a {
    outcomes.iter().filter(move |o| o.cell.optimizer.name() == optimizer)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Non-convergent methods must end near `target_point` with `R_T/T` above
/// `min_avg_regret`; convergent ones must stay below `relative_avg_regret`
/// times the reference (first non-convergent method, same seed) and strictly
/// decrease over `T/k` for the listed divisors `k`.
fn adversarial(t: &Table, outcomes: &[CellOutcome]) -> Result<Verdict> {
    let nonconvergent = names(t, "nonconvergent")?;
    let convergent = names(t, "convergent")?;
    let target: f64 = t.require("target_point")?;
    let tol: f64 = t.require("final_point_tolerance")?;
    let min_avg: f64 = t.require("min_avg_regret")?;
    let relative: f64 = t.require("relative_avg_regret")?;
    let divisors: Vec<u64> = t.list("checkpoints")?.unwrap_or_else(|| vec![8, 4, 2, 1]);
    let mut v = Verdict::new();
    let mut reference: BTreeMap<u64, f64> = BTreeMap::new();
    for name in &nonconvergent {
        for o in cells_of(outcomes, name) {
            let Detail::Online { final_latent, .. } = &o.detail else { continue };
            let w = final_latent[0];
            let ok = (w - target).abs() <= tol && o.value > min_avg;
            reference.entry(o.cell.seed).or_insert(o.value);
            v.check(
                ok,
                format!(
                    "{} seed {}: {} (final latent {w:.4}, R_T/T = {:.6})",
                    o.cell.optimizer,
                    o.cell.seed,
                    if ok { "NON-CONVERGENT" } else { "not flagged NON-CONVERGENT" },
                    o.value
                ),
            );
        }
    }
    for name in &convergent {
        for o in cells_of(outcomes, name) {
            let Detail::Online { dyadic_avg_regret, .. } = &o.detail else { continue };
            let horizon = dyadic_avg_regret.first().map_or(0, |(t, _)| *t);
            let series: Vec<f64> = divisors
                .iter()
                .filter_map(|k| {
                    let tk = horizon / k;
                    dyadic_avg_regret.iter().find(|(t, _)| *t == tk).map(|(_, a)| *a)
                })
                .collect();
            let decreasing = series.len() == divisors.len() && series.windows(2).all(|w| w[1] < w[0]);
            let bar = reference.get(&o.cell.seed).map(|r| relative * r);
            let small = bar.is_some_and(|b| o.value < b);
            let ok = small && decreasing;
            let shown: Vec<String> = series.iter().map(|a| format!("{a:.6}")).collect();
            v.check(
                ok,
                format!(
                    "{} seed {}: {} (R_T/T = {:.6}, bar {}, checkpoints [{}] {})",
                    o.cell.optimizer,
                    o.cell.seed,
                    if ok { "CONVERGENT" } else { "not flagged CONVERGENT" },
                    o.value,
                    bar.map_or("n/a".to_string(), |b| format!("{b:.6}")),
                    shown.join(", "),
                    if decreasing { "strictly decreasing" } else { "not strictly decreasing" }
                ),
            );
        }
    }
    Ok(v)
}

fn bound(t: &Table, outcomes: &[CellOutcome]) -> Result<Verdict> {
    let max_violations: usize = t.require("max_violations")?;
    let mut v = Verdict::new();
    let (mut checks, mut violations) = (0, 0);
    for o in outcomes {
        if let Detail::Online {
            bound_checks,
            bound_violations,
            ..
        } = &o.detail
        {
            checks += bound_checks;
            violations += bound_violations;
            if *bound_violations > 0 {
                v.lines.push(format!("{}: {bound_violations} checkpoint(s) with R_T > bound", o.cell.name));
            }
        }
    }
    if checks == 0 {
        return Err(CliError::Validation("bound verdict needs problem.bound_checkpoints".into()));
    }
    v.check(
        violations <= max_violations,
        format!("R_T <= bound at {} of {checks} checkpoints over {} runs", checks - violations, outcomes.len()),
    );
    Ok(v)
}

/// Clipped runs need at least as many steps as unclipped ones on
/// `min_fraction` of the seeds; non-binding clipping must reproduce the
/// unclipped trajectory exactly.
fn clipping(t: &Table, outcomes: &[CellOutcome]) -> Result<Verdict> {
    let min_fraction: f64 = t.require("min_fraction")?;
    let require_identical: bool = t.parse_or("require_nonbinding_identical", true)?;
    let mut by_seed: BTreeMap<(String, u64), BTreeMap<&str, &Detail>> = BTreeMap::new();
    for o in outcomes {
        if let Some(var) = o.cell.variant {
            by_seed
                .entry((o.cell.optimizer.name().to_string(), o.cell.seed))
                .or_default()
                .insert(var.name(), &o.detail);
        }
    }
    let mut v = Verdict::new();
    let (mut slower, mut identical, mut compared) = (0usize, 0usize, 0usize);
    let steps = |d: &Detail| match d {
        Detail::Clipping { steps, .. } => *steps,
        _ => 0,
    };
    for ((opt, seed), runs) in &by_seed {
        let (Some(u), Some(c)) = (runs.get(ClipVariant::Unclipped.name()), runs.get(ClipVariant::Clipped.name()))
        else {
            continue;
        };
        let (su, sc) = (steps(u), steps(c));
        slower += usize::from(sc >= su);
        let mut line = format!("{opt} seed {seed}: clipped {sc} steps, unclipped {su} steps");
        if let Some(nb) = runs.get(ClipVariant::NonBinding.name()) {
            compared += 1;
            let same = match (u, nb) {
                (
                    Detail::Clipping { losses: a, final_proxy: wa, .. },
                    Detail::Clipping { losses: b, final_proxy: wb, .. },
                ) => a.len() == b.len()
                    && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
                    && wa.iter().zip(wb).all(|(x, y)| x.to_bits() == y.to_bits()),
                _ => false,
            };
            identical += usize::from(same);
            line.push_str(if same { ", non-binding identical" } else { ", non-binding DIFFERS" });
        }
        v.lines.push(line);
    }
    let n = by_seed.len();
    if n == 0 {
        return Err(CliError::Validation("clipping verdict found no runs".into()));
    }
    v.check(
        slower as f64 >= min_fraction * n as f64,
        format!("clipped needs >= steps of unclipped on {slower}/{n} seeds"),
    );
    if require_identical {
        v.check(
            compared == n && identical == n,
            format!("non-binding clip reproduces the unclipped trajectory bitwise on {identical}/{n} seeds"),
        );
    }
    Ok(v)
}

fn shubert(t: &Table, outcomes: &[CellOutcome]) -> Result<Verdict> {
    let candidate: String = t.require("candidate")?;
    let baseline: String = t.require("baseline")?;
    let require_feasible: bool = t.parse_or("require_feasible", true)?;
    let losses = |name: &str| cells_of(outcomes, name).map(|o| o.value).collect::<Vec<f64>>();
    let (c, b) = (losses(&candidate), losses(&baseline));
    if c.is_empty() || b.is_empty() {
        return Err(CliError::Validation(format!("shubert verdict needs runs of {candidate} and {baseline}")));
    }
    let (mc, mb) = (mean(&c), mean(&b));
    let mut v = Verdict::new();
    v.check(
        mc <= mb,
        format!("mean final loss {candidate} {mc:.6e} <= {baseline} {mb:.6e} ({} seeds)", c.len()),
    );
    if require_feasible {
        let infeasible: Vec<&str> = outcomes
            .iter()
            .filter(|o| !o.feasible)
            .map(|o| o.cell.name.as_str())
            .collect();
        v.check(
            infeasible.is_empty(),
            format!("all {} trajectories stay in the box{}", outcomes.len(), if infeasible.is_empty() {
                String::new()
            } else {
                format!(" (left: {})", infeasible.join(" "))
            }),
        );
    }
    Ok(v)
}

fn parse_assignment(s: &str) -> Result<Vec<(String, String)>> {
    crate::manifest::split_list(s)
        .iter()
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| CliError::Validation(format!("bad cell selector '{kv}'")))
        })
        .collect()
}

fn same_value(a: &str, b: &str) -> bool {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

fn matches(grid: &[(String, String)], selector: &[(String, String)]) -> bool {
    selector
        .iter()
        .all(|(k, v)| grid.iter().any(|(gk, gv)| gk == k && same_value(gv, v)))
}

/// Per seed: the `best_cell` grid point attains the lowest final loss, and for
/// every setting of the other parameters the `stable_value` of
/// `variance_param` has a lower tail variance than `unstable_value`. Each
/// claim passes when it holds on at least `majority` seeds.
fn hyperparameters(t: &Table, outcomes: &[CellOutcome]) -> Result<Verdict> {
    let best = parse_assignment(&t.require::<String>("best_cell")?)?;
    let param: String = t.require("variance_param")?;
    let stable: String = t.require("stable_value")?;
    let unstable: String = t.require("unstable_value")?;
    let majority: usize = t.require("majority")?;
    let detail = |o: &CellOutcome| match o.detail {
        Detail::Training { final_loss, var_tail } => (final_loss, var_tail),
        _ => (f64::NAN, f64::NAN),
    };
    let seeds: Vec<u64> = {
        let mut s: Vec<u64> = outcomes.iter().map(|o| o.cell.seed).collect();
        s.sort_unstable();
        s.dedup();
        s
    };
    let mut v = Verdict::new();
    let mut best_count = 0;
    for &seed in &seeds {
        let winner = outcomes
            .iter()
            .filter(|o| o.cell.seed == seed)
            .min_by(|a, b| detail(a).0.total_cmp(&detail(b).0));
        if winner.is_some_and(|w| matches(&w.cell.grid, &best)) {
            best_count += 1;
        }
    }
    let label = |a: &[(String, String)]| a.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(",");
    v.check(
        best_count >= majority,
        format!("lowest final loss at {} on {best_count}/{} seeds", label(&best), seeds.len()),
    );
    // pair cells that differ only in `param`
    let others = |o: &CellOutcome| -> Vec<(String, String)> {
        o.cell.grid.iter().filter(|(k, _)| *k != param).cloned().collect()
    };
    let mut groups: Vec<Vec<(String, String)>> = outcomes.iter().map(others).collect();
    groups.sort();
    groups.dedup();
    for group in groups {
        let var_at = |seed: u64, value: &str| {
            outcomes
                .iter()
                .find(|o| {
                    o.cell.seed == seed
                        && others(o) == group
                        && o.cell.grid.iter().any(|(k, v)| *k == param && same_value(v, value))
                })
                .map(|o| detail(o).1)
        };
        let mut count = 0;
        for &seed in &seeds {
            if let (Some(s), Some(u)) = (var_at(seed, &stable), var_at(seed, &unstable)) {
                count += usize::from(s < u);
            }
        }
        v.check(
            count >= majority,
            format!(
                "tail variance {param}={stable} < {param}={unstable} at {} on {count}/{} seeds",
                if group.is_empty() { "base".to_string() } else { label(&group) },
                seeds.len()
            ),
        );
    }
    Ok(v)
}
