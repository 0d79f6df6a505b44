use thiserror::Error;

/// Errors surfaced by model fitting, inference, baselines and simulation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset too small: need at least 2 instruments, got {0}")]
    DatasetTooSmall(usize),

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("numerical failure at iteration {iteration}: {what}")]
    Numerical { iteration: usize, what: String },

    #[error("degenerate inference: (V*H1 - I) is singular; inspect weights sitting at their bounds")]
    DegenerateInference,

    #[error("inference invalid: corrected variance {0:e} is not a positive finite number")]
    InferenceInvalid(f64),

    #[error("undefined estimator: {0}")]
    UndefinedEstimator(String),

    #[error("collinear instruments: exposure effects have no spread, Egger design is rank deficient")]
    CollinearInstruments,

    #[error("insufficient instruments: {got} available, {need} required")]
    InsufficientInstruments { got: usize, need: usize },

    #[error("optimization failure: {0}")]
    OptimizationFailure(String),

    #[error("no SNP passed selection at p-value threshold {0:e}")]
    EmptySelection(f64),

    #[error("oracle grid too narrow: boundary mass fraction {0:e} exceeds 1e-6")]
    GridTooNarrow(f64),

    #[error("invalid simulation spec: {0}")]
    InvalidSpec(String),
}

impl Error {
    pub(crate) fn numerical(what: impl Into<String>) -> Self {
        Error::Numerical { iteration: 0, what: what.into() }
    }

    /// Attach the surrounding fit iteration to a numerical failure.
    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        match self {
            Error::Numerical { what, .. } => Error::Numerical { iteration, what },
            other => other,
        }
    }
}
