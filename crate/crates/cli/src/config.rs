//! Run configuration: defaults, a flat `key = value` file, then command-line overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// Which denominator the Bergman isometry check divides by.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Convention {
    /// Manifold norm `‖A g‖_{L²(M)}` with `M` carrying Lebesgue measure.
    Thm410,
    /// Cell norm `‖A_λ g‖_{L²([0,1)^{2n})}` of the sector function.
    Prop44,
}

impl FromStr for Convention {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "thm410" => Ok(Convention::Thm410),
            "prop44" => Ok(Convention::Prop44),
            other => Err(format!("expected thm410 or prop44, got {other:?}")),
        }
    }
}

impl fmt::Display for Convention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Convention::Thm410 => "thm410",
            Convention::Prop44 => "prop44",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub n: usize,
    pub k: i64,
    pub t: f64,
    /// Base resolution per unit-cell axis; other sampling densities scale with it.
    pub grid: usize,
    /// Half-width of the boxes on which functions of `ℝⁿ` are sampled.
    pub radius: f64,
    /// Tail tolerance for lattice sums.
    pub tol: f64,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub convention: Convention,
    pub workers: usize,
    /// Restrict `verify` to these check ids; empty means all.
    pub checks: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n: 1,
            k: 1,
            t: 0.1,
            grid: 32,
            radius: 8.0,
            tol: 1e-15,
            seed: 42,
            out: None,
            convention: Convention::Prop44,
            workers: std::thread::available_parallelism().map(|p| p.get()).unwrap_or(1),
            checks: Vec::new(),
        }
    }
}

/// A rejected configuration value, naming the offending field.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config field `{}`: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        field: field.to_string(),
        message: message.into(),
    }
}

fn parse<T: FromStr>(field: &str, raw: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    raw.trim().parse().map_err(|e| err(field, format!("cannot parse {raw:?}: {e}")))
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<(), ConfigError> {
        match key {
            "n" => self.n = parse(key, raw)?,
            "k" => self.k = parse(key, raw)?,
            "t" => self.t = parse(key, raw)?,
            "grid" => self.grid = parse(key, raw)?,
            "radius" => self.radius = parse(key, raw)?,
            "tol" => self.tol = parse(key, raw)?,
            "seed" => self.seed = parse(key, raw)?,
            "out" => self.out = Some(PathBuf::from(raw.trim())),
            "convention" => self.convention = parse(key, raw)?,
            "workers" => self.workers = parse(key, raw)?,
            "checks" => {
                self.checks = raw
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect()
            }
            other => return Err(err(other, "unknown key")),
        }
        Ok(())
    }

    /// Parses a flat key/value file. Blank lines and lines starting with `#` are skipped.
    pub fn apply_file_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(&format!("line {}", i + 1), "expected key = value"))?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| err("config", format!("{}: {e}", path.display())))?;
        self.apply_file_text(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n == 0 {
            return Err(err("n", "must be positive"));
        }
        if self.k == 0 {
            return Err(err("k", "must be nonzero"));
        }
        if !(self.t > 0.0 && self.t.is_finite()) {
            return Err(err("t", "must be positive and finite"));
        }
        if self.grid < 4 {
            return Err(err("grid", "must be at least 4"));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(err("radius", "must be positive and finite"));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(err("tol", "must lie in (0, 1)"));
        }
        if self.workers == 0 {
            return Err(err("workers", "must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_override() {
        let mut c = RunConfig::default();
        c.apply_file_text("# comment\nk = 2\n\nt=0.05\nconvention = thm410\nchecks = a, b\n").unwrap();
        assert_eq!((c.k, c.t, c.convention), (2, 0.05, Convention::Thm410));
        assert_eq!(c.checks, vec!["a", "b"]);
        c.set("k", "3").unwrap();
        assert_eq!(c.k, 3);
        c.validate().unwrap();
    }

    #[test]
    fn errors_name_the_field() {
        let mut c = RunConfig::default();
        assert_eq!(c.set("t", "abc").unwrap_err().field, "t");
        assert_eq!(c.set("colour", "red").unwrap_err().field, "colour");
        assert_eq!(c.apply_file_text("k 2").unwrap_err().field, "line 1");
        c.t = -1.0;
        assert_eq!(c.validate().unwrap_err().field, "t");
        let c = RunConfig {
            grid: 2,
            ..RunConfig::default()
        };
        assert_eq!(c.validate().unwrap_err().field, "grid");
    }
}
