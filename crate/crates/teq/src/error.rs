//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty group")]
    EmptyGroup,

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("transform/table size mismatch: table has {table} entries, group has {group}")]
    TableSize { table: usize, group: usize },

    #[error("degenerate statistic in combination")]
    DegenerateStatistic,

    #[error("{count} assignments exceed enumeration cap {cap}; use Monte-Carlo mode")]
    EnumerationCap { count: u128, cap: u128 },

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("budget k={k} infeasible: at most {max} slots available")]
    InfeasibleBudget { k: usize, max: usize },

    #[error("inversion failed above candidate range")]
    InversionFailed,

    #[error("linear program: {0}")]
    LinearProgram(String),

    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
