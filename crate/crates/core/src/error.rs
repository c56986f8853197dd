use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("frequency {index} exceeds the Nyquist limit {limit} of the grid")]
    Aliasing { index: i64, limit: usize },
    #[error("lattice sum did not converge: tail estimate {tail:e} at radius {radius}")]
    NonConvergence { tail: f64, radius: usize },
    #[error("overflow: |lambda|*t = {value} exceeds {threshold}")]
    Overflow { value: f64, threshold: f64 },
    #[error("truncation: boundary magnitude ratio {ratio:e} exceeds {limit:e}")]
    Truncation { ratio: f64, limit: f64 },
    #[error("ill-posed inversion: coefficient of multi-index {alpha:?} needs amplification {amplification:e} beyond cap {cap:e}")]
    IllPosed {
        alpha: Vec<usize>,
        amplification: f64,
        cap: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

/// Non-fatal diagnostics attached to a computed value.
#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    /// Integrand or field not decayed at the edge of its box.
    Truncation { ratio: f64 },
    /// Argument outside the range where the recurrence is known to be stable.
    Range { detail: String },
    /// Shifted samples fell outside the grid and were zero-filled.
    Resampled { lost_fraction: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Flagged<T> {
    pub value: T,
    pub warnings: Vec<Warning>,
}

impl<T> Flagged<T> {
    pub fn clean(value: T) -> Self {
        Flagged {
            value,
            warnings: Vec::new(),
        }
    }

    pub fn is_clean(&self) -> bool {
        self.warnings.is_empty()
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}
