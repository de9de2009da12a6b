use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("simplex failed to converge: {0}")]
    NumericalFailure(String),
    #[error("problem is infeasible")]
    Infeasible,
    #[error("problem is unbounded")]
    Unbounded,
    #[error("branch-and-bound node limit of {0} reached")]
    NodeLimit(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("integer state column {0} has no finite range")]
    UnboundedInteger(usize),
    #[error("instance too large for exact enumeration: {0}")]
    TooLarge(String),
    #[error("lower bound {lower} exceeds subproblem value {value}")]
    BadBound { lower: f64, value: f64 },
    #[error("radius evaluates to {0} < 0")]
    NegativeRadius(f64),
    #[error("cut-generating system has no feasible dual solution")]
    DualInfeasible,
    #[error("disjunct {0} is empty")]
    EmptyDisjunct(usize),
    #[error("hierarchy level needs {0} lifted disjuncts (cap 10000)")]
    TooManyDisjuncts(usize),
    #[error("bad grid: {0}")]
    BadGrid(String),
    #[error("degenerate geometry: a facility coincides with a demand point")]
    DegenerateGeometry,
    #[error("invalid model at `{field}`: {msg}")]
    InvalidModel { field: String, msg: String },
    #[error("stage {stage} subproblem {status} (scenario {scenario})")]
    StageFailure { stage: usize, scenario: usize, status: &'static str },
    #[error("unknown variant `{0}`")]
    UnknownVariant(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::InvalidModel { field: field.into(), msg: msg.into() }
    }

    /// True for errors caused by the instance rather than by limits or I/O.
    pub fn is_model_error(&self) -> bool {
        !matches!(self, Error::Io(_) | Error::NodeLimit(_) | Error::NumericalFailure(_))
    }
}
