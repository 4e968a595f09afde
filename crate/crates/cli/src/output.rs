//! Atomic file output and the per-experiment summaries.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, Result};
use crate::exec::{CellOutcome, SUMMARY_CSV_HEADER};
use crate::verdict::Verdict;

/// Writes `contents` to `dir/name` through a temporary file and a rename, so
/// readers never observe a partial file.
pub fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let write_err = |source| CliError::Write {
        path: target.clone(),
        source,
    };
    let mut f = fs::File::create(&tmp).map_err(write_err)?;
    f.write_all(contents.as_bytes()).map_err(write_err)?;
    f.sync_all().map_err(write_err)?;
    drop(f);
    fs::rename(&tmp, &target).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        write_err(e)
    })?;
    Ok(target)
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| CliError::Write {
        path: dir.to_path_buf(),
        source,
    })
}

pub fn summary_csv(outcomes: &[CellOutcome]) -> String {
    let mut out = format!("{SUMMARY_CSV_HEADER}\n");
    for o in outcomes {
        out.push_str(&o.summary_line());
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct JsonCell<'a> {
    cell: &'a str,
    optimizer: &'a str,
    seed: u64,
    grid: serde_json::Map<String, serde_json::Value>,
    metric: &'a str,
    /// `null` when not finite.
    value: Option<f64>,
    feasible: bool,
    status: &'a str,
    diverged: Option<&'a str>,
    wall_seconds: f64,
}

#[derive(Serialize)]
struct JsonSummary<'a> {
    experiment: &'a str,
    kind: &'a str,
    cells: Vec<JsonCell<'a>>,
    verdict: Option<JsonVerdict<'a>>,
}

#[derive(Serialize)]
struct JsonVerdict<'a> {
    pass: bool,
    lines: &'a [String],
}

/// Summary for tooling. Unlike the CSVs it carries wall times, so it is not
/// reproducible byte for byte.
pub fn summary_json(id: &str, kind: &str, outcomes: &[CellOutcome], verdict: Option<&Verdict>) -> String {
    let cells = outcomes
        .iter()
        .map(|o| JsonCell {
            cell: &o.cell.name,
            optimizer: o.cell.optimizer.name(),
            seed: o.cell.seed,
            grid: o
                .cell
                .grid
                .iter()
                .map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone())))
                .collect(),
            metric: o.metric,
            value: o.value.is_finite().then_some(o.value),
            feasible: o.feasible,
            status: o.status(),
            diverged: o.diverged.as_deref(),
            wall_seconds: o.wall_seconds,
        })
        .collect();
    let summary = JsonSummary {
        experiment: id,
        kind,
        cells,
        verdict: verdict.map(|v| JsonVerdict {
            pass: v.pass,
            lines: &v.lines,
        }),
    };
    let mut s = serde_json::to_string_pretty(&summary).expect("summary serializes");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_and_leaves_no_temporaries() {
        let dir = tempfile::tempdir().unwrap();
        write_atomic(dir.path(), "a.csv", "one\n").unwrap();
        write_atomic(dir.path(), "a.csv", "two\n").unwrap();
        assert_eq!(fs::read_to_string(dir.path().join("a.csv")).unwrap(), "two\n");
        let names: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names.len(), 1);
    }

    #[test]
    fn unwritable_directory_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("absent");
        assert_eq!(write_atomic(&missing, "a.csv", "x").unwrap_err().exit_code(), 5);
    }
}
