use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value: {0}")]
    Numeric(String),

    #[error("singular system: pivot magnitude {pivot:e} below tolerance")]
    Singular { pivot: f64 },

    #[error("projected Bellman system is singular (feature matrix rank {rank})")]
    RankDeficient { rank: usize },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("training diverged at step {step}: |Q| = {magnitude:e}")]
    Divergence { step: usize, magnitude: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            actual,
        })
    }
}
