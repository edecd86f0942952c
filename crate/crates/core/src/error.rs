use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("forward path diverged at step {step}")]
    DivergedPath { step: usize },

    #[error("adjoint diverged at step {step}")]
    DivergedAdjoint { step: usize },

    #[error("step size too large: implicit matrix at step {step} has condition estimate {condition:e}")]
    StepTooLarge { step: usize, condition: f64 },

    #[error("training aborted at iteration {iteration}: {cause}")]
    TrainingAborted { iteration: usize, cause: Box<Error> },

    #[error("too many diverged samples: {excluded} of {total}")]
    TooManyExclusions { excluded: usize, total: usize },

    #[error("oracle refused: {0}")]
    OracleRefused(String),

    #[error("convergence study failed: {0}")]
    StudyFailed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
