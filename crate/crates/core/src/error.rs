use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid offspring law: {0}")]
    InvalidLaw(String),

    #[error("degenerate law: mean offspring number is zero")]
    DegenerateLaw,

    #[error("invalid environment model: {0}")]
    InvalidModel(String),

    #[error("not supercritical: E[X] = {0}")]
    NotSupercritical(f64),

    #[error("no negative increments: the critical tilt is undefined")]
    NoNegativeIncrements,

    #[error("closed form requires linear-fractional laws in every state")]
    NotLinearFractional,

    #[error("no extinction possible: P(Z_1 = 0) = 0, use the monotone-case formula")]
    NoExtinction,

    #[error("raise truncation degree: coefficient {requested} requested from a series of degree {degree}")]
    DegreeTooSmall { requested: usize, degree: usize },

    #[error("degree overflow: degree {required} exceeds the hard cap {cap}")]
    DegreeOverflow { required: usize, cap: usize },

    #[error("enumeration budget exceeded: {sequences} sequences > {budget}; use the Monte Carlo path")]
    BudgetExceeded { sequences: f64, budget: u64 },

    #[error("explosive trajectory: population {population} exceeds cap {cap} at generation {generation}")]
    Explosive { population: u64, cap: u64, generation: usize },

    #[error("conditioning on a null event: {0}")]
    NullEvent(String),

    #[error("no survivors at generation {0}")]
    NoSurvivors(usize),

    #[error("MRCA undefined for a forest: {0} roots have descendants at the last generation")]
    Forest(usize),

    #[error("zero accepted replicates after {proposed} proposals")]
    NoAccepted { proposed: u64 },

    #[error("root bracketing failed: {0}")]
    Bracket(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("malformed model file: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by exceeding a computational budget rather than
    /// by invalid input.
    pub fn is_budget(&self) -> bool {
        matches!(
            self,
            Error::BudgetExceeded { .. } | Error::DegreeOverflow { .. } | Error::Explosive { .. }
        )
    }
}
