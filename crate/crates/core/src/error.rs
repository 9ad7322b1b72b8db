use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the solvers, builders, simulator and searches.
///
/// The `Display` form starts with the variant name so the CLI can surface
/// which check tripped.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("InvalidModel: {0}")]
    InvalidModel(String),

    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),

    /// The balance equations do not pin down a unique distribution.
    #[error("SingularChain: {0}")]
    SingularChain(String),

    /// The correlation system has no unique solution (the age is unbounded
    /// in some state).
    #[error("SingularSystem: {0}")]
    SingularSystem(String),

    #[error("BracketError: {0}")]
    BracketError(String),

    #[error("NoSignChange: difference is {f_lo:e} at {lo} and {f_hi:e} at {hi}")]
    NoSignChange {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    #[error("MultipleCrossings: {count} sign changes found in [{lo}, {hi}]")]
    MultipleCrossings { lo: f64, hi: f64, count: usize },
}
