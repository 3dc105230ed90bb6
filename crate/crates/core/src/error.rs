use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("customer {customer} has demand {demand} exceeding vehicle capacity {capacity}")]
    DemandExceedsCapacity {
        customer: u32,
        demand: f64,
        capacity: f64,
    },

    #[error("no metadata (fleet size / depot limit) for raw instance `{0}`")]
    MissingMetadata(String),

    #[error("invalid solution: {0}")]
    InvalidSolution(String),

    #[error("neighborhood id {0} is outside 1..=7")]
    InvalidNeighborhood(usize),

    #[error("every neighborhood has already been tried in this state")]
    NoUntriedAction,

    #[error("penalty adjustment requested but no counter is saturated")]
    PenaltyNotSaturated,

    #[error("comparison set is empty")]
    EmptyComparisonSet,

    #[error("instance has {customers} customers but {vehicles} vehicles must each serve at least one")]
    TooFewCustomers { customers: usize, vehicles: usize },

    #[error("local search exceeded the cap of {0} accepted moves")]
    MoveCapExceeded(usize),

    #[error("no feasible solution could be constructed")]
    NoFeasibleSolution,

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
