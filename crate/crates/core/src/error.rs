use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument fell outside the closed interval where the operation is defined.
    #[error("{what} = {value} lies outside the valid domain [{lo}, {hi}]")]
    Domain {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("construction failed for spline n = {n}: {detail}")]
    Construction { n: u32, detail: String },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("time {requested} is beyond the computed horizon {horizon}; build a deeper oscillator")]
    Range { requested: f64, horizon: f64 },

    #[error("error bound {achieved:e} exceeds requested {requested:e}; increase n-max (currently {n_max})")]
    Accuracy { requested: f64, achieved: f64, n_max: u32 },

    #[error("grid function is missing the {0} channel")]
    MissingChannel(&'static str),
}

impl Error {
    pub(crate) fn domain(what: &'static str, value: f64, lo: f64, hi: f64) -> Self {
        Error::Domain { what, value, lo, hi }
    }
}
