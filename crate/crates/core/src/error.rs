use thiserror::Error;

/// Errors raised by model construction and the numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A model parameter violates a structural assumption.
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// An argument lies outside the domain of the operation.
    #[error("{what} = {value} is outside the domain {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: String,
    },

    /// A query reached past the tabulated range of a boundary table.
    #[error("{what} = {value} lies beyond the tabulated range (limit {limit})")]
    OutOfRange {
        what: &'static str,
        value: f64,
        limit: f64,
    },

    /// A point outside the solvency region.
    #[error("state (y = {y}, z = {z}) is outside the solvency region")]
    Insolvent { y: f64, z: f64 },

    /// An iterative method failed to reach its tolerance.
    #[error("{method} did not converge: {detail}")]
    NoConvergence {
        method: &'static str,
        detail: String,
    },

    /// A numerical failure at a specific holding, e.g. while tabulating.
    #[error("boundary solve failed at y = {y}: {source}")]
    Solver {
        y: f64,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(what: &'static str, value: f64, domain: impl Into<String>) -> Self {
        Error::Domain {
            what,
            value,
            domain: domain.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidModel(msg.into())
    }
}
