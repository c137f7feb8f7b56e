use thiserror::Error;

/// Errors produced by the external-memory simulator and the algorithms on
/// top of it. `Config` maps to operator mistakes (infeasible tile sizes,
/// budgets below two blocks), `BudgetExceeded` to a pin request that would
/// break the memory-budget invariant, which always indicates a wrong tile
/// size upstream.
#[derive(Debug, Error)]
pub enum EmError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("memory budget exceeded: request of {requested} bytes with {pinned} already pinned against a budget of {budget}")]
    BudgetExceeded {
        requested: u64,
        pinned: u64,
        budget: u64,
    },

    #[error("out of bounds: {0}")]
    OutOfBounds(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("invariant breach: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EmError>;
