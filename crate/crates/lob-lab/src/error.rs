use thiserror::Error;

/// Library-wide error type. The CLI maps variants onto process exit codes,
/// so keep the taxonomy coarse: bad inputs, iteration failures, and checks
/// that ran fine but reported a failure.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("invalid control at step {step}: {reason}")]
    InvalidControl { step: usize, reason: String },

    #[error(
        "fixed-point iteration did not converge after {iters} iterations \
         (last iterate pa={pa:.6e}, pb={pb:.6e}, residual={residual:.3e})"
    )]
    NonConvergence {
        iters: usize,
        pa: f64,
        pb: f64,
        residual: f64,
    },

    #[error("degeneracy indicator is not monotone in alpha on the scan grid: {points:?}")]
    NonMonotoneScan { points: Vec<(f64, bool)> },

    #[error("coefficient bound violated at t={t:.6}, x={x:.6}: {what}={value:.6} outside [{lo:.6}, {hi:.6}]")]
    CoefficientBound {
        what: &'static str,
        t: f64,
        x: f64,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("check failed: {0}")]
    CheckFailed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// Process exit code the CLI uses for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::InvalidControl { .. } | Error::Io(_) => 2,
            Error::NonConvergence { .. }
            | Error::NonMonotoneScan { .. }
            | Error::CoefficientBound { .. } => 3,
            Error::CheckFailed(_) => 4,
        }
    }
}
