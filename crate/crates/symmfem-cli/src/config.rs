//! Run configuration: grid-list and key-value config-file parsing, plus
//! merging of defaults, file values and command-line flags.

use std::path::PathBuf;

use symmfem::problems::ProblemKey;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("unknown key '{0}'")]
    UnknownKey(String),
    #[error("duplicate key '{0}'")]
    DuplicateKey(String),
    #[error("invalid value for '{key}': {reason}")]
    InvalidValue { key: String, reason: String },
    #[error("grid list: {0}")]
    Grids(String),
}

pub const KNOWN_KEYS: [&str; 8] = [
    "problem",
    "method",
    "grids",
    "tol",
    "threads",
    "out",
    "quad-assembly",
    "quad-error",
];

/// Parses `key = value` lines; `#` starts a comment, blank lines are
/// skipped. Keys must come from [`KNOWN_KEYS`] and appear at most once.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Syntax {
                line: i + 1,
                reason: "expected 'key = value'".into(),
            });
        };
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() || value.is_empty() {
            return Err(ConfigError::Syntax {
                line: i + 1,
                reason: "empty key or value".into(),
            });
        }
        if !KNOWN_KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey(key.to_string()));
        }
        if out.iter().any(|(k, _)| k == key) {
            return Err(ConfigError::DuplicateKey(key.to_string()));
        }
        out.push((key.to_string(), value.to_string()));
    }
    Ok(out)
}

/// Parses a comma-separated list of `n:N` pairs (fine count first, matching
/// the `n x N x N` grid labels of the experiment tables).
pub fn parse_grids(s: &str) -> Result<Vec<(usize, usize)>, ConfigError> {
    let mut grids = Vec::new();
    for item in s.split(',') {
        let item = item.trim();
        if item.is_empty() {
            return Err(ConfigError::Grids("empty grid entry".into()));
        }
        let Some((fine, coarse)) = item.split_once(':') else {
            return Err(ConfigError::Grids(format!("'{item}' is not of the form n:N")));
        };
        let fine: usize = fine
            .trim()
            .parse()
            .map_err(|_| ConfigError::Grids(format!("fine count '{fine}' is not a positive integer")))?;
        let coarse: usize = coarse
            .trim()
            .parse()
            .map_err(|_| ConfigError::Grids(format!("coarse count '{coarse}' is not a positive integer")))?;
        if fine == 0 || coarse == 0 {
            return Err(ConfigError::Grids("grid counts must be positive".into()));
        }
        grids.push((fine, coarse));
    }
    if grids.is_empty() {
        return Err(ConfigError::Grids("no grids given".into()));
    }
    Ok(grids)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodKind {
    Fem,
    TwoScale,
    SymTwoScale,
}

impl MethodKind {
    pub fn parse(s: &str) -> Option<MethodKind> {
        match s {
            "fem" => Some(MethodKind::Fem),
            "two-scale" => Some(MethodKind::TwoScale),
            "sym-two-scale" => Some(MethodKind::SymTwoScale),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            MethodKind::Fem => "fem",
            MethodKind::TwoScale => "two-scale",
            MethodKind::SymTwoScale => "sym-two-scale",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub problem: ProblemKey,
    pub method: MethodKind,
    /// `(fine, coarse)` subdivision pairs.
    pub grids: Vec<(usize, usize)>,
    pub tol: f64,
    pub threads: Option<usize>,
    pub out: PathBuf,
    pub quad_assembly: usize,
    pub quad_error: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            problem: ProblemKey::Ex1,
            method: MethodKind::SymTwoScale,
            grids: vec![(16, 4), (36, 6), (64, 8), (100, 10), (144, 12)],
            tol: 1e-10,
            threads: None,
            out: PathBuf::from("results"),
            quad_assembly: 3,
            quad_error: symmfem::analysis::DEFAULT_ERROR_QUAD_ORDER,
        }
    }
}

impl RunConfig {
    /// Applies one parsed `key = value` pair.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let invalid = |reason: &str| ConfigError::InvalidValue {
            key: key.to_string(),
            reason: reason.to_string(),
        };
        match key {
            "problem" => {
                self.problem = ProblemKey::parse(value)
                    .ok_or_else(|| invalid("expected one of ex1, ex2, ex3, poisson2d"))?;
            }
            "method" => {
                self.method = MethodKind::parse(value)
                    .ok_or_else(|| invalid("expected one of fem, two-scale, sym-two-scale"))?;
            }
            "grids" => self.grids = parse_grids(value)?,
            "tol" => {
                let tol: f64 = value.parse().map_err(|_| invalid("not a number"))?;
                if !(tol > 0.0 && tol < 1.0) {
                    return Err(invalid("must lie in (0, 1)"));
                }
                self.tol = tol;
            }
            "threads" => {
                let t: usize = value.parse().map_err(|_| invalid("not a positive integer"))?;
                if t == 0 {
                    return Err(invalid("must be positive"));
                }
                self.threads = Some(t);
            }
            "out" => self.out = PathBuf::from(value),
            "quad-assembly" => {
                let q: usize = value.parse().map_err(|_| invalid("not a positive integer"))?;
                if !(1..=16).contains(&q) {
                    return Err(invalid("must lie in 1..=16"));
                }
                self.quad_assembly = q;
            }
            "quad-error" => {
                let q: usize = value.parse().map_err(|_| invalid("not a positive integer"))?;
                if !(1..=16).contains(&q) {
                    return Err(invalid("must lie in 1..=16"));
                }
                self.quad_error = q;
            }
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Method-dependent grid validation: the two-scale drivers need
    /// `n >= 2N` and `N >= 2`.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.method != MethodKind::Fem {
            for &(n, big_n) in &self.grids {
                if big_n < 2 || n < 2 * big_n {
                    return Err(ConfigError::Grids(format!(
                        "pair {n}:{big_n} violates n >= 2N >= 4 required by two-scale methods"
                    )));
                }
            }
        } else {
            for &(n, _) in &self.grids {
                if n < 2 {
                    return Err(ConfigError::Grids(format!("fine count {n} must be at least 2")));
                }
            }
        }
        Ok(())
    }

    /// True when the pair fails the nesting assumption of the theory
    /// (non-integer `n/N`); the drivers still run, a notice is printed.
    pub fn non_nested_pairs(&self) -> Vec<(usize, usize)> {
        if self.method == MethodKind::Fem {
            return vec![];
        }
        self.grids.iter().copied().filter(|(n, big_n)| n % big_n != 0).collect()
    }
}
