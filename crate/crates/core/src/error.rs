use std::path::PathBuf;

/// Errors raised by the solvers, diagnostics and study harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("velocity truncation violated: {0}")]
    Truncation(String),

    #[error("time step {dt:e} exceeds the stability limit {limit:e}")]
    StepSize { dt: f64, limit: f64 },

    #[error("negative density {value:e} in cell {cell}")]
    NegativeDensity { cell: usize, value: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("energy budget violated: relative residual {residual:e} > {tol:e}")]
    EnergyBudget { residual: f64, tol: f64 },

    #[error("conservation check failed: {0}")]
    Conservation(String),

    #[error("shock monitor: characteristic crossing at t = {crossing:.4} before horizon {t_end:.4}")]
    Shock { crossing: f64, t_end: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by bad user input rather than a failed run.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}
