use thiserror::Error;

/// Errors raised by chain validation, cycle handling, simulation and the
/// exact and statistical checks.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix must be square: row {row} has {len} entries, expected {expected}")]
    NotSquare {
        row: usize,
        len: usize,
        expected: usize,
    },
    #[error("a chain needs at least 2 states, got {0}")]
    TooFewStates(usize),
    #[error("at most {max} states are supported, got {got}")]
    TooManyStates { got: usize, max: usize },
    #[error("state labels do not match matrix size: {labels} labels for {size} states")]
    LabelCountMismatch { labels: usize, size: usize },
    #[error("duplicate state label `{0}`")]
    DuplicateLabel(String),
    #[error("entry ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("row {row} sums to {sum}, expected 1")]
    NonStochasticRow { row: usize, sum: f64 },
    #[error("entry ({row}, {col}) is a negative probability: {value}")]
    NegativeProbability { row: usize, col: usize, value: f64 },
    #[error("off-diagonal entry ({row}, {col}) is a negative rate: {value}")]
    NegativeRate { row: usize, col: usize, value: f64 },
    #[error("diagonal of row {row} is {diagonal}, expected {expected}")]
    BadDiagonal {
        row: usize,
        diagonal: f64,
        expected: f64,
    },
    #[error("chain is reducible: state {state} and state 0 are not mutually reachable")]
    Reducible { state: usize },
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("state index {index} out of range for {size} states")]
    StateOutOfRange { index: usize, size: usize },
    #[error("cycle repeats state {0}")]
    DuplicateState(usize),
    #[error("cycle is empty")]
    EmptyCycle,
    #[error("cannot parse cycle `{0}`")]
    BadCycle(String),
    #[error("cycle has zero strength, affinity undefined")]
    ZeroForwardStrength,
    #[error("state {0} is absorbing")]
    AbsorbingState(usize),
    #[error("horizon {requested} exceeds recorded horizon {recorded}")]
    HorizonExceeded { requested: f64, recorded: f64 },
    #[error("cycles share no common state")]
    NoCommonState,
    #[error("start state {start} is not on every cycle of the family")]
    StartNotCommon { start: usize },
    #[error("cycles {0} and {1} are not similar")]
    NotSimilar(String, String),
    #[error("state {0} lies in the taboo set")]
    StateInTaboo(usize),
    #[error("cycle {0} has infinite affinity")]
    InfiniteAffinity(String),
    #[error("exp(lambda . count) overflows for the configured caps")]
    Overflow,
    #[error("grid is empty")]
    EmptyGrid,
    #[error("transition {from} -> {to} has no reverse rate; entropy production is infinite")]
    InfiniteEntropyProduction { from: usize, to: usize },
    #[error("linear system is singular")]
    Singular,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
