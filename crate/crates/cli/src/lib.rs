//! Experiment runner for the optimizer suite: manifests, sweeps, CSV output
//! and the canned recipes with their verdicts.

pub mod error;
pub mod exec;
pub mod grid;
pub mod manifest;
pub mod output;
pub mod recipes;
pub mod verdict;

use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use error::{CliError, Result};
pub use exec::{CellOutcome, Detail};
pub use manifest::Manifest;
pub use verdict::Verdict;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "BAMSPROD_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "bamsprod-runs";

#[derive(Clone, Debug)]
pub struct Settings {
    /// Each experiment writes into `out/<experiment id>/`.
    pub out: PathBuf,
    /// Worker threads; `0` means one per available core.
    pub parallel: usize,
    pub seed_offset: u64,
    /// Grid parameters added to the manifest's own `[sweep]`.
    pub grid: Vec<(String, Vec<String>)>,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            out: default_out_dir(),
            parallel: 0,
            seed_offset: 0,
            grid: Vec::new(),
        }
    }
}

pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map_or_else(|| PathBuf::from(DEFAULT_OUT_DIR), PathBuf::from)
}

#[derive(Clone, Debug)]
pub struct Report {
    pub dir: PathBuf,
    pub outcomes: Vec<CellOutcome>,
    pub verdict: Option<Verdict>,
}

impl Report {
    pub fn diverged(&self) -> Vec<&CellOutcome> {
        self.outcomes.iter().filter(|o| o.diverged.is_some()).collect()
    }
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    Manifest::parse(&text, &path.to_string_lossy())
}

/// Runs every cell of `manifest` and writes the per-cell CSVs, `summary.csv`
/// and `summary.json`. All cells are validated before the first one starts.
pub fn execute(manifest: &Manifest, settings: &Settings) -> Result<Report> {
    let cells = exec::plan(manifest, &settings.grid, settings.seed_offset)?;
    let dir = settings.out.join(&manifest.id);
    output::ensure_dir(&dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.parallel)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<CellOutcome>> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| {
                let outcome = exec::run_cell(cell)?;
                for (name, contents) in &outcome.files {
                    output::write_atomic(&dir, name, contents)?;
                }
                Ok(outcome)
            })
            .collect()
    });
    let outcomes = results.into_iter().collect::<Result<Vec<_>>>()?;
    let verdict = verdict::evaluate(manifest, &outcomes)?;
    output::write_atomic(&dir, "summary.csv", &output::summary_csv(&outcomes))?;
    output::write_atomic(
        &dir,
        "summary.json",
        &output::summary_json(&manifest.id, manifest.kind.name(), &outcomes, verdict.as_ref()),
    )?;
    Ok(Report { dir, outcomes, verdict })
}
