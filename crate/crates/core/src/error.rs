use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the documented domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A closed form was requested where its denominator or a factorial
    /// argument makes it undefined.
    #[error("identity out of domain (l={ell}, m={m}): {reason}")]
    IdentityDomain { ell: usize, m: i64, reason: String },

    /// A numerical self-check failed (e.g. imaginary residue of a real field).
    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("threshold {u} collides with critical value {value}")]
    ThresholdCollision { u: f64, value: f64 },

    #[error("need at least {min} samples, got {n}")]
    InsufficientSamples { n: usize, min: usize },

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
