use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("predictive success probability undefined on arm {arm}: zero pseudo-counts and no observations")]
    UndefinedPredictive { arm: char },

    #[error("parameters cannot be uniquely determined: {0}")]
    NotUniquelyDetermined(String),

    #[error("infeasible moments: {0}")]
    InfeasibleMoments(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("action table mismatch: {0}")]
    TableMismatch(String),

    #[error("memory estimate of {required} bytes exceeds the cap of {cap} bytes")]
    MemoryCap { required: u64, cap: u64 },

    #[error("numerical integrity error: {0}")]
    Numerical(String),

    #[error("action table format error: {0}")]
    Format(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Wraps the error with a human-readable context label.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context { context: context.into(), source: Box::new(self) }
    }

    /// The innermost error, skipping any context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}
