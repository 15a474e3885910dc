use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("group {group} has no agents")]
    EmptyGroup { group: usize },

    #[error("{groups} groups cannot host {k} facilities (need m >= k)")]
    TooFewGroups { groups: usize, k: usize },

    #[error("facility count {k} is below the minimum of 2")]
    TooFewFacilities { k: usize },

    #[error("position of agent ({group}, {index}) is not finite")]
    NonFinitePosition { group: usize, index: usize },

    #[error("symmetrized group size {size} exceeds cap {cap}")]
    SizeOverflow { size: u128, cap: u128 },

    #[error("solution is not a feasible multiset of reported positions: {0}")]
    InfeasibleSolution(String),

    #[error("optimal cost is zero but the solution costs {cost}")]
    ZeroOptimumMismatch { cost: f64 },

    #[error("rank pair ({l_rank}, {r_rank}) is not strictly increasing for m = {m}")]
    InvalidParamPair { l_rank: usize, r_rank: usize, m: usize },

    #[error("rank {rank} is outside [1, {len}]")]
    RankOutOfRange { rank: usize, len: usize },

    #[error("mechanism expects k = {expected}, instance has k = {actual}")]
    FacilityCountMismatch { expected: usize, actual: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("enumeration of {size} candidate solutions exceeds cap {cap}")]
    EnumerationTooLarge { size: u128, cap: u128 },

    #[error("no feasible interior fill for endpoints ({low}, {high})")]
    NoFeasibleFill { low: f64, high: f64 },

    #[error("invalid family parameters: {0}")]
    InvalidFamilyParams(String),

    #[error("invalid mechanism spec: {0}")]
    InvalidSpec(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True for errors raised while validating instance contents.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::EmptyGroup { .. }
                | Error::TooFewGroups { .. }
                | Error::TooFewFacilities { .. }
                | Error::NonFinitePosition { .. }
        )
    }

    /// True for errors that can only come from a logic bug inside this crate.
    pub fn is_internal(&self) -> bool {
        matches!(
            self,
            Error::ZeroOptimumMismatch { .. } | Error::NoFeasibleFill { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            return Error::Io(e.to_string());
        }
        Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}
