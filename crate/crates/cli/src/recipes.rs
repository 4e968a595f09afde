//! Canned manifests, embedded at build time. Their `[verdict]` sections hold
//! the acceptance thresholds.

use crate::error::{CliError, Result};
use crate::manifest::Manifest;

pub const RECIPES: [(&str, &str); 5] = [
    ("theorem1", include_str!("../recipes/theorem1.manifest")),
    ("theorem3", include_str!("../recipes/theorem3.manifest")),
    ("fig2", include_str!("../recipes/fig2.manifest")),
    ("shubert", include_str!("../recipes/shubert.manifest")),
    ("bound_check", include_str!("../recipes/bound_check.manifest")),
];

pub fn recipe_text(name: &str) -> Result<&'static str> {
    RECIPES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
        .ok_or_else(|| {
            let known: Vec<&str> = RECIPES.iter().map(|(n, _)| *n).collect();
            CliError::Usage(format!("unknown recipe '{name}' (known: {})", known.join(", ")))
        })
}

pub fn recipe(name: &str) -> Result<Manifest> {
    Manifest::parse(recipe_text(name)?, name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_recipe_parses_and_names_itself() {
        for (name, _) in RECIPES {
            let m = recipe(name).unwrap();
            assert_eq!(m.id, name);
            assert!(m.verdict.keys().next().is_some(), "{name} has no verdict thresholds");
        }
    }

    #[test]
    fn unknown_recipe_is_a_usage_error() {
        assert_eq!(recipe("theorem2").unwrap_err().exit_code(), 2);
    }
}
