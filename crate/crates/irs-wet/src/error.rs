use thiserror::Error;

/// Errors produced by the simulator and the optimization routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("infeasible working set: {0}")]
    Infeasible(String),

    #[error("solver did not converge: {message} (residual {residual:.3e})")]
    Solver { message: String, residual: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("phase alignment undefined: |inner product| = {0:.3e} is below threshold")]
    AlignmentUndefined(f64),

    #[error("phase offset indeterminate: {0}")]
    PhaseIndeterminate(String),

    #[error("unsupported dimension: {0}")]
    UnsupportedDimension(String),

    #[error("config parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
