//! Cartesian parameter grids.

use std::collections::BTreeMap;

use crate::error::{CliError, Result};
use crate::manifest::split_list;

/// One grid point: `(parameter, value)` pairs sorted by parameter name.
pub type Assignment = Vec<(String, String)>;

/// Parses a `--grid` argument of the form `name=v1,v2,…`.
pub fn parse_grid_arg(arg: &str) -> Result<(String, Vec<String>)> {
    let (k, v) = arg
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("grid argument '{arg}' is not of the form name=v1,v2")))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(CliError::Usage(format!("grid argument '{arg}' has an empty name")));
    }
    Ok((k.to_string(), split_list(v)))
}

/// Expands `params` into grid points. Parameters are ordered by name with
/// the first varying slowest; values keep their given order with duplicates
/// dropped. A later entry for the same parameter replaces an earlier one.
/// No parameters yields a single empty assignment.
pub fn expand(params: &[(String, Vec<String>)]) -> Result<Vec<Assignment>> {
    let mut by_name: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (name, values) in params {
        let mut unique: Vec<&str> = Vec::new();
        for v in values {
            if !unique.contains(&v.as_str()) {
                unique.push(v);
            }
        }
        if unique.is_empty() {
            return Err(CliError::Validation(format!("grid parameter '{name}' has no values")));
        }
        by_name.insert(name, unique);
    }
    let mut points: Vec<Assignment> = vec![Vec::new()];
    for (name, values) in by_name {
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |v| {
                    let mut next = p.clone();
                    next.push((name.to_string(), v.to_string()));
                    next
                })
            })
            .collect();
    }
    Ok(points)
}
