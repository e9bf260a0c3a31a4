//! Library-wide error type.

use thiserror::Error;

/// Errors produced by parameter validation, grid construction, the time
/// stepper, and file I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or configuration constraint was violated. The message
    /// names the constraint and the offending value.
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// The requested grid cannot be built (too coarse, unstable, or the
    /// parameters leave fewer than three interior points).
    #[error("grid construction failed: {0}")]
    Grid(String),

    /// The state left the divergence guard during a render.
    #[error(
        "simulation diverged at step {step}: state magnitude {magnitude:.3e} \
         exceeds {limit:.3e} (1e6 x initial scale)"
    )]
    Diverged {
        step: usize,
        magnitude: f64,
        limit: f64,
    },

    /// The per-step linear system could not be factorized.
    #[error("linear solve failed at step {step}: {detail}")]
    Singular { step: usize, detail: String },

    /// The friction or contact iteration exhausted its iteration budget.
    #[error(
        "excitation coupling failed to converge at step {step}: \
         residual {residual:.3e} after {iterations} iterations"
    )]
    NonConvergence {
        step: usize,
        residual: f64,
        iterations: usize,
    },

    /// A measurement request was degenerate (for example exclusion bands so
    /// wide that no inter-modal bins remain).
    #[error("analysis error: {0}")]
    Analysis(String),

    /// A config file failed to parse or referenced impossible settings.
    #[error("config error: {0}")]
    Config(String),

    /// A WAV file could not be encoded or decoded.
    #[error("wav error: {0}")]
    Wav(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
