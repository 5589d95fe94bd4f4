use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed instance document. The message carries the offending field and
    /// the line/column reported by the parser.
    #[error("parse error in {origin}: {message}")]
    Parse { origin: String, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("period {period} is outside 1..={n_periods}")]
    PeriodOutOfRange { period: usize, n_periods: usize },

    /// Caller broke a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("oracle too large: {count} choices exceed the enumeration cap of {cap}")]
    OracleTooLarge { count: u128, cap: u128 },

    #[error("dispatch infeasible in period {period}: load that cannot be shed is stranded at buses {buses:?}")]
    DispatchInfeasible { period: usize, buses: Vec<u32> },

    #[error("M too small in period {period}: {detail}; increase the dual bounds")]
    BigMTooSmall { period: usize, detail: String },

    #[error(
        "duality certificate failed in period {period}: adversary {adversary_eur} EUR vs dispatch {dispatch_eur} EUR"
    )]
    Certificate {
        period: usize,
        adversary_eur: f64,
        dispatch_eur: f64,
    },

    #[error(
        "oracle mismatch in period {period}: adversary {adversary_eur} EUR vs brute force {oracle_eur} EUR"
    )]
    OracleMismatch {
        period: usize,
        adversary_eur: f64,
        oracle_eur: f64,
    },

    #[error("solver backend error: {0}")]
    Backend(String),

    #[error("time limit of {limit_s} s reached")]
    TimeLimit { limit_s: f64 },

    /// The backend could not be configured (unknown option, bad value).
    #[error("solver configuration error: {message} (hint: {hint})")]
    SolverConfig { message: String, hint: String },

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        match self {
            e @ Error::AtIteration { .. } => e,
            e => Error::AtIteration {
                iteration,
                source: Box::new(e),
            },
        }
    }

    /// Strips iteration context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtIteration { source, .. } => source.root(),
            e => e,
        }
    }
}
