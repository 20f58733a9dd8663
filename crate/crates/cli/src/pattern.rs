//! Sign-pattern recipes accepted on the command line and in configs.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use semigood::io::{load_pattern, PatternFile};
use semigood::{Error, Result, SenseMatrix, SignPattern};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PatternRecipe {
    /// `unsigned`, `nonnegative`, `nonpositive` or `mixed` (first half nonnegative).
    Named(String),
    Explicit(PatternFile),
}

impl PatternRecipe {
    pub fn unsigned() -> Self {
        PatternRecipe::Named("unsigned".into())
    }

    pub fn nonnegative() -> Self {
        PatternRecipe::Named("nonnegative".into())
    }

    pub fn label(&self) -> String {
        match self {
            PatternRecipe::Named(name) => canonical(name).unwrap_or(name).to_string(),
            PatternRecipe::Explicit(f) => format!(
                "plus[{}]minus[{}]",
                join(&f.p_plus),
                join(&f.p_minus)
            ),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PatternRecipe::Named(name) if canonical(name).is_none() => {
                Err(Error::Parse(format!("unknown sign pattern '{name}'")))
            }
            _ => Ok(()),
        }
    }

    /// The sets `(P+, P-)` for a matrix with `n` columns.
    pub fn sets(&self, n: usize) -> Result<(Vec<usize>, Vec<usize>)> {
        match self {
            PatternRecipe::Named(name) => match canonical(name) {
                Some("unsigned") => Ok((Vec::new(), Vec::new())),
                Some("nonnegative") => Ok(((0..n).collect(), Vec::new())),
                Some("nonpositive") => Ok((Vec::new(), (0..n).collect())),
                Some("mixed") => Ok(((0..n / 2).collect(), Vec::new())),
                _ => Err(Error::Parse(format!("unknown sign pattern '{name}'"))),
            },
            PatternRecipe::Explicit(f) => Ok((f.p_plus.clone(), f.p_minus.clone())),
        }
    }

    /// Normalized matrix (columns in `P-` negated) and the resulting pattern.
    pub fn apply(&self, a: &SenseMatrix) -> Result<(SenseMatrix, SignPattern)> {
        let (plus, minus) = self.sets(a.cols())?;
        semigood::normalize_sign_restrictions(a, &plus, &minus)
    }
}

fn canonical(name: &str) -> Option<&'static str> {
    match name.to_ascii_lowercase().as_str() {
        "unsigned" | "none" => Some("unsigned"),
        "nonnegative" | "nonneg" => Some("nonnegative"),
        "nonpositive" | "nonpos" => Some("nonpositive"),
        "mixed" => Some("mixed"),
        _ => None,
    }
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

impl fmt::Display for PatternRecipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// A named recipe, or a path to a JSON pattern file.
impl FromStr for PatternRecipe {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if canonical(s).is_some() {
            return Ok(PatternRecipe::Named(s.to_string()));
        }
        let path = Path::new(s);
        if path.exists() {
            return Ok(PatternRecipe::Explicit(load_pattern(path)?));
        }
        Err(Error::Parse(format!(
            "'{s}' is neither a pattern name (unsigned, nonnegative, nonpositive, mixed) nor a file"
        )))
    }
}
