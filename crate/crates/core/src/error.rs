use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    /// `k = 0` is absorbing: the scattering rate vanishes and the next jump
    /// time is infinite.
    #[error("zero momentum is absorbing: no jump can occur")]
    ZeroMomentum,

    #[error("{what} = {value} is outside {range}")]
    OutOfRange {
        what: &'static str,
        value: f64,
        range: String,
    },

    /// The rate function is `+∞` at `x`: it lies outside the closure of the
    /// range of `Λ'`.
    #[error("rate function is +inf at x = {x}: attainable slopes are [{lo}, {hi}]")]
    RateOutOfRange { x: f64, lo: f64, hi: f64 },

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("only {events} tail events at x = {x} (need {required})")]
    InsufficientTail { x: f64, events: u64, required: u64 },

    #[error("trajectory {index}: {source}")]
    Trajectory {
        index: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Strips ensemble index attribution.
    pub fn root(&self) -> &Error {
        match self {
            Error::Trajectory { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn is_resource_limit(&self) -> bool {
        matches!(self.root(), Error::ResourceLimit(_))
    }
}
