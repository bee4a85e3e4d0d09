use thiserror::Error;

/// Errors produced by the filtering, selection and benchmarking machinery.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Every likelihood term was zero, so the innovation likelihood estimate is zero.
    #[error("degenerate likelihood: all observation likelihoods are zero")]
    DegenerateLikelihood,

    #[error("numeric overflow: non-finite state sampled for particle {particle}")]
    NumericOverflow { particle: usize },

    /// Every candidate structure scored +inf.
    #[error("no viable structure: all candidate scores are infinite")]
    NoViableStructure,

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("unknown method `{0}`")]
    UnknownMethod(String),

    #[error("belief not normalized: log-sum-exp of weights is {0:e}")]
    Unnormalized(f64),

    /// A filter error raised inside a Monte-Carlo run.
    #[error("run {run}, step {step}: {source}")]
    Run {
        run: usize,
        step: usize,
        #[source]
        source: Box<Error>,
    },

    /// A runtime check of a filter or selection invariant failed.
    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn at(self, run: usize, step: usize) -> Self {
        Error::Run {
            run,
            step,
            source: Box::new(self),
        }
    }
}
