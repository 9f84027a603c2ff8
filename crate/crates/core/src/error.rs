use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no closed form for this split-vector kind; request Monte Carlo samples")]
    ClosedFormUnavailable,

    #[error("vertex count exceeded the cap of {cap}")]
    ResourceLimit { cap: usize },

    #[error("split vectors were not recorded during generation")]
    RecordingDisabled,

    #[error("edge mask has {mask} entries but the tree has {vertices} vertices")]
    ShapeMismatch { mask: usize, vertices: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("empty sample")]
    EmptySample,

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("{edges} edges exceed the enumeration limit of {max}")]
    TooLarge { edges: usize, max: usize },

    #[error("regular tree with d^h = {size} exceeds the budget of {budget}")]
    BudgetExceeded { size: u128, budget: u128 },

    #[error("malformed tree dump at line {line}: {reason}")]
    Dump { line: usize, reason: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by the caller's parameters rather than the run itself.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_) | Error::Config(_) | Error::Domain(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
