//! Experiment manifests: line-oriented `key = value` text with `[section]`
//! headers.
//!
//! ```text
//! [experiment]
//! id = adversarial_small
//! kind = adversarial
//! horizon = 1000
//! seeds = 0..3
//!
//! [problem]
//! period = 11
//!
//! [defaults]
//! beta1 = 0
//!
//! [optimizer.adam]
//! [optimizer.bamsprod]
//! eta = 0.5
//! ```
//!
//! `#` starts a comment. Recognised sections are `experiment`, `problem`,
//! `defaults`, `optimizer.NAME` (one per optimizer, in run order), `sweep`
//! (parameter grids, same syntax as `--grid`) and `verdict` (thresholds used
//! by the canned recipes).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use bamsprod_core::optim::{Beta1Schedule, EtaSchedule, OptimizerConfig, OptimizerKind};

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    Adversarial,
    Quadratic,
    Shubert,
    Autoencoder,
    ClippingSlowdown,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Adversarial => "adversarial",
            ExperimentKind::Quadratic => "quadratic",
            ExperimentKind::Shubert => "shubert",
            ExperimentKind::Autoencoder => "autoencoder",
            ExperimentKind::ClippingSlowdown => "clipping_slowdown",
        }
    }

    fn problem_keys(self) -> &'static [&'static str] {
        match self {
            ExperimentKind::Adversarial => &["period", "alpha", "alpha_end", "initial"],
            ExperimentKind::Quadratic => &["dim", "lo", "hi", "bound_checkpoints"],
            ExperimentKind::Shubert => &["lo", "hi"],
            ExperimentKind::Autoencoder => &[
                "data",
                "samples",
                "input_dim",
                "hidden_dim",
                "train_fraction",
                "batch_size",
                "param_bound",
                "track_gamma",
            ],
            ExperimentKind::ClippingSlowdown => &["dim", "clip", "nonbinding_clip", "tolerance"],
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        [
            ExperimentKind::Adversarial,
            ExperimentKind::Quadratic,
            ExperimentKind::Shubert,
            ExperimentKind::Autoencoder,
            ExperimentKind::ClippingSlowdown,
        ]
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| format!("unknown experiment kind '{s}'"))
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

const EXPERIMENT_KEYS: &[&str] = &["id", "kind", "seeds", "horizon", "epochs", "binary", "log_every"];

const OPTIMIZER_KEYS: &[&str] = &[
    "eta",
    "beta1",
    "beta2",
    "beta1_schedule",
    "eta_schedule",
    "epsilon",
    "c_inf",
    "bound_gamma",
    "unbounded",
    "bias_correction",
    "final_lr",
    "rate_gamma",
    "bop_threshold",
    "bop_adaptivity",
];

/// The `key = value` pairs of one section, remembering line numbers for
/// diagnostics.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    name: String,
    entries: BTreeMap<String, (String, usize)>,
}

impl Table {
    fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            entries: BTreeMap::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_string(), (value.to_string(), 0));
    }

    fn invalid(&self, key: &str, msg: impl fmt::Display) -> CliError {
        let line = self.entries.get(key).map_or(0, |(_, l)| *l);
        let at = if line > 0 { format!(" (line {line})") } else { String::new() };
        CliError::Validation(format!("[{}] {key}{at}: {msg}", self.name))
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| self.invalid(key, format!("cannot parse '{v}': {e}"))),
        }
    }

    pub fn parse_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        self.parse(key)?
            .ok_or_else(|| CliError::Validation(format!("[{}] is missing required key '{key}'", self.name)))
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(v) => split_list(v)
                .into_iter()
                .map(|item| {
                    item.parse()
                        .map_err(|e| self.invalid(key, format!("cannot parse '{item}': {e}")))
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        match self.keys().find(|k| !allowed.contains(k)) {
            Some(k) => Err(self.invalid(k, "unknown key")),
            None => Ok(()),
        }
    }
}

pub fn split_list(v: &str) -> Vec<String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// `0..5` (exclusive) or a comma list.
pub fn parse_seeds(v: &str) -> std::result::Result<Vec<u64>, String> {
    if let Some((a, b)) = v.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|e| format!("bad seed range '{v}': {e}"))?;
        let b: u64 = b.trim().parse().map_err(|e| format!("bad seed range '{v}': {e}"))?;
        return Ok((a..b).collect());
    }
    split_list(v)
        .iter()
        .map(|s| s.parse().map_err(|e| format!("bad seed '{s}': {e}")))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub id: String,
    pub kind: ExperimentKind,
    pub seeds: Vec<u64>,
    pub experiment: Table,
    pub problem: Table,
    pub defaults: Table,
    pub optimizers: Vec<(OptimizerKind, Table)>,
    pub sweep: Vec<(String, Vec<String>)>,
    pub verdict: Table,
}

fn syntax(source: &str, line: usize, msg: impl Into<String>) -> CliError {
    CliError::Manifest {
        path: source.to_string(),
        line,
        msg: msg.into(),
    }
}

impl Manifest {
    /// Parses and validates. `source` names the text in diagnostics and is the
    /// fallback experiment id.
    pub fn parse(text: &str, source: &str) -> Result<Manifest> {
        let mut sections: Vec<Table> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| syntax(source, line_no, "unterminated section header"))?
                    .trim();
                if name.is_empty() {
                    return Err(syntax(source, line_no, "empty section name"));
                }
                if sections.iter().any(|s| s.name == name) {
                    return Err(syntax(source, line_no, format!("duplicate section [{name}]")));
                }
                sections.push(Table::new(name));
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| syntax(source, line_no, format!("expected key = value, found '{line}'")))?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(syntax(source, line_no, "empty key"));
            }
            let table = sections
                .last_mut()
                .ok_or_else(|| syntax(source, line_no, "key outside of any section"))?;
            if table
                .entries
                .insert(key.to_string(), (value.to_string(), line_no))
                .is_some()
            {
                return Err(syntax(source, line_no, format!("duplicate key '{key}'")));
            }
        }
        Self::from_sections(sections, source)
    }

    fn from_sections(sections: Vec<Table>, source: &str) -> Result<Manifest> {
        let mut experiment = None;
        let mut problem = Table::new("problem");
        let mut defaults = Table::new("defaults");
        let mut verdict = Table::new("verdict");
        let mut sweep_table = Table::new("sweep");
        let mut optimizers = Vec::new();
        for table in sections {
            match table.name.as_str() {
                "experiment" => experiment = Some(table),
                "problem" => problem = table,
                "defaults" => defaults = table,
                "verdict" => verdict = table,
                "sweep" => sweep_table = table,
                name => match name.strip_prefix("optimizer.") {
                    Some(opt) => {
                        let kind: OptimizerKind = opt
                            .parse()
                            .map_err(|_| CliError::UnknownOptimizer(opt.to_string()))?;
                        optimizers.push((kind, table));
                    }
                    None => return Err(CliError::Validation(format!("unknown section [{name}]"))),
                },
            }
        }
        let experiment =
            experiment.ok_or_else(|| CliError::Validation("missing [experiment] section".into()))?;
        experiment.check_keys(EXPERIMENT_KEYS)?;
        let kind: ExperimentKind = experiment.require("kind")?;
        problem.check_keys(kind.problem_keys())?;
        defaults.check_keys(OPTIMIZER_KEYS)?;
        for (_, t) in &optimizers {
            t.check_keys(OPTIMIZER_KEYS)?;
        }
        if optimizers.is_empty() {
            return Err(CliError::Validation("at least one [optimizer.NAME] section is required".into()));
        }
        let seeds = match experiment.get("seeds") {
            None => return Err(CliError::Validation("[experiment] is missing required key 'seeds'".into())),
            Some(v) => parse_seeds(v).map_err(|e| experiment.invalid("seeds", e))?,
        };
        if seeds.is_empty() {
            return Err(CliError::Validation("at least one seed is required".into()));
        }
        let sweep = sweep_table
            .entries
            .iter()
            .map(|(k, (v, _))| (k.clone(), split_list(v)))
            .collect();
        let id = experiment.get("id").map_or_else(|| default_id(source), str::to_string);
        if id.is_empty() || id.contains(['/', '\\']) || id.starts_with('.') {
            return Err(CliError::Validation(format!("invalid experiment id '{id}'")));
        }
        let manifest = Manifest {
            id,
            kind,
            seeds,
            experiment,
            problem,
            defaults,
            optimizers,
            sweep,
            verdict,
        };
        manifest.validate()?;
        Ok(manifest)
    }

    /// Kind-specific required fields and every optimizer configuration.
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ExperimentKind::Autoencoder => {
                let epochs: usize = self.experiment.require("epochs")?;
                if epochs == 0 {
                    return Err(self.experiment.invalid("epochs", "must be at least 1"));
                }
            }
            _ => {
                let horizon: u64 = self.experiment.require("horizon")?;
                if horizon == 0 {
                    return Err(self.experiment.invalid("horizon", "must be at least 1"));
                }
            }
        }
        if self.experiment.parse_or("log_every", 1u64)? == 0 {
            return Err(self.experiment.invalid("log_every", "must be at least 1"));
        }
        for (kind, table) in &self.optimizers {
            let cfg = self.optimizer_config(*kind, table)?;
            cfg.validate(*kind)
                .map_err(|e| CliError::Validation(format!("[{}] {e}", table.name)))?;
        }
        Ok(())
    }

    /// `[defaults]` overlaid with the optimizer's own section.
    pub fn optimizer_config(&self, kind: OptimizerKind, table: &Table) -> Result<OptimizerConfig> {
        let mut merged = self.defaults.clone();
        merged.name = format!("optimizer.{kind}");
        for (k, v) in &table.entries {
            merged.entries.insert(k.clone(), v.clone());
        }
        config_from_table(&merged)
    }

    pub fn horizon(&self) -> Result<u64> {
        self.experiment.require("horizon")
    }

    pub fn binary(&self) -> Result<bool> {
        let default = matches!(self.kind, ExperimentKind::Shubert | ExperimentKind::ClippingSlowdown);
        self.experiment.parse_or("binary", default)
    }

    pub fn log_every(&self) -> Result<u64> {
        self.experiment.parse_or("log_every", 1)
    }
}

fn default_id(source: &str) -> String {
    std::path::Path::new(source)
        .file_stem()
        .map_or_else(|| "experiment".to_string(), |s| s.to_string_lossy().into_owned())
}

pub fn config_from_table(t: &Table) -> Result<OptimizerConfig> {
    let d = OptimizerConfig::default();
    let beta1_schedule = match t.get("beta1_schedule") {
        None | Some("constant") => Beta1Schedule::Constant,
        Some("geometric") => Beta1Schedule::Geometric,
        Some("harmonic") => Beta1Schedule::Harmonic,
        Some(other) => return Err(t.invalid("beta1_schedule", format!("unknown schedule '{other}'"))),
    };
    let eta_schedule = match t.get("eta_schedule") {
        None | Some("inv_sqrt_t") => EtaSchedule::InvSqrtT,
        Some("constant") => EtaSchedule::Constant,
        Some(other) => return Err(t.invalid("eta_schedule", format!("unknown schedule '{other}'"))),
    };
    let mut rate_bounds = d.rate_bounds;
    rate_bounds.final_lr = t.parse_or("final_lr", rate_bounds.final_lr)?;
    rate_bounds.gamma = t.parse_or("rate_gamma", rate_bounds.gamma)?;
    let mut bop = d.bop;
    bop.threshold = t.parse_or("bop_threshold", bop.threshold)?;
    bop.adaptivity = t.parse_or("bop_adaptivity", bop.adaptivity)?;
    Ok(OptimizerConfig {
        eta: t.parse_or("eta", d.eta)?,
        beta1: t.parse_or("beta1", d.beta1)?,
        beta2: t.parse_or("beta2", d.beta2)?,
        beta1_schedule,
        epsilon: t.parse_or("epsilon", d.epsilon)?,
        eta_schedule,
        c_inf: t.parse("c_inf")?,
        bound_gamma: t.parse_or("bound_gamma", d.bound_gamma)?,
        unbounded: t.parse_or("unbounded", d.unbounded)?,
        bias_correction: t.parse_or("bias_correction", d.bias_correction)?,
        rate_bounds,
        bop,
    })
}

/// Where a grid parameter lands: bare names are optimizer hyper-parameters
/// applied to every optimizer, `problem.KEY` and `experiment.KEY` address
/// those sections.
pub fn apply_override(manifest: &mut Manifest, key: &str, value: &str) -> Result<()> {
    if let Some(k) = key.strip_prefix("problem.") {
        if !manifest.kind.problem_keys().contains(&k) {
            return Err(CliError::Validation(format!("unknown grid parameter '{key}'")));
        }
        manifest.problem.set(k, value);
    } else if let Some(k) = key.strip_prefix("experiment.") {
        if !["horizon", "epochs", "binary", "log_every"].contains(&k) {
            return Err(CliError::Validation(format!("grid parameter '{key}' cannot be swept")));
        }
        manifest.experiment.set(k, value);
    } else {
        if !OPTIMIZER_KEYS.contains(&key) {
            return Err(CliError::Validation(format!("unknown grid parameter '{key}'")));
        }
        for (_, table) in &mut manifest.optimizers {
            table.set(key, value);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "
[experiment]
kind = adversarial
horizon = 100
seeds = 0

[optimizer.adam]
beta1 = 0   # comment
";

    #[test]
    fn minimal_manifest() {
        let m = Manifest::parse(MINIMAL, "dir/small.manifest").unwrap();
        assert_eq!(m.id, "small");
        assert_eq!(m.kind, ExperimentKind::Adversarial);
        assert_eq!(m.seeds, vec![0]);
        assert_eq!(m.optimizers.len(), 1);
        let (kind, table) = &m.optimizers[0];
        assert_eq!(m.optimizer_config(*kind, table).unwrap().beta1, 0.0);
    }

    #[test]
    fn seeds_accept_ranges_and_lists() {
        assert_eq!(parse_seeds("0..3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("4, 7,9").unwrap(), vec![4, 7, 9]);
        assert!(parse_seeds("a..3").is_err());
    }

    #[test]
    fn errors_are_classified() {
        let unknown = MINIMAL.replace("optimizer.adam", "optimizer.adamax");
        assert!(matches!(
            Manifest::parse(&unknown, "x"),
            Err(CliError::UnknownOptimizer(name)) if name == "adamax"
        ));
        let garbage = MINIMAL.replace("horizon = 100", "horizon 100");
        assert!(matches!(Manifest::parse(&garbage, "x"), Err(CliError::Manifest { line: 4, .. })));
        let typo = MINIMAL.replace("beta1 = 0", "beta_1 = 0");
        assert!(matches!(Manifest::parse(&typo, "x"), Err(CliError::Validation(_))));
        let no_horizon = MINIMAL.replace("horizon = 100", "");
        assert!(matches!(Manifest::parse(&no_horizon, "x"), Err(CliError::Validation(_))));
        let bad_beta = MINIMAL.replace("beta1 = 0", "beta1 = 1.5");
        assert!(matches!(Manifest::parse(&bad_beta, "x"), Err(CliError::Validation(_))));
        let no_opt = "[experiment]\nkind = shubert\nhorizon = 5\nseeds = 0\n";
        assert!(matches!(Manifest::parse(no_opt, "x"), Err(CliError::Validation(_))));
    }

    #[test]
    fn overrides_reach_every_optimizer() {
        let text = format!("{MINIMAL}[optimizer.sgdm]\n");
        let mut m = Manifest::parse(&text, "x").unwrap();
        apply_override(&mut m, "eta", "0.5").unwrap();
        apply_override(&mut m, "problem.period", "7").unwrap();
        for (kind, table) in &m.optimizers {
            assert_eq!(m.optimizer_config(*kind, table).unwrap().eta, 0.5);
        }
        assert_eq!(m.problem.get("period"), Some("7"));
        assert!(apply_override(&mut m, "problem.clip", "1").is_err());
        assert!(apply_override(&mut m, "momentum", "1").is_err());
    }
}
