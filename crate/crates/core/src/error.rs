use thiserror::Error;

/// One config-file problem, carrying the line it was found on.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigIssue {
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("mesh error: {0}")]
    Mesh(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("config errors:\n{}", .0.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n"))]
    Config(Vec<ConfigIssue>),

    #[error("data condition `{condition}` violated (margin = {margin:.6e})")]
    ConditionViolated { condition: &'static str, margin: f64 },

    #[error("linear solver failed: {0}")]
    LinearSolver(String),

    #[error("eigensolver did not converge: {0}")]
    EigenSolver(String),

    #[error("fixed-point iteration exceeded {max_iters} iterations; residuals {residuals:?}")]
    PicardDiverged { max_iters: usize, residuals: Vec<f64> },

    #[error("solver failed at t = {t}: {source}")]
    StepFailed { t: f64, source: Box<Error> },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
