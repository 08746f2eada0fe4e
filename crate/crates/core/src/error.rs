use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("missing key `{0}`")]
    MissingKey(String),
    #[error("coefficient `{0}` must be strictly positive")]
    NonPositiveCoefficient(String),
    #[error("antiangiogenic schedule is negative ({value}) in segment starting at t={start}")]
    NegativeSchedule { start: f64, value: f64 },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid initial condition: {0}")]
    InvalidInitial(String),
    #[error("field boundary kind does not match the operator")]
    BcMismatch,
    #[error("shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("no convergence after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("linear solver diverged (relative residual {residual:e})")]
    SolverDivergence { residual: f64 },
    #[error("time step {dt} exceeds the stability limit {dt_max}")]
    CflViolation { dt: f64, dt_max: f64 },
    #[error("fit window too short")]
    WindowTooShort,
    #[error("series underflows the floor {floor:e} inside the fit window")]
    SeriesUnderflow { floor: f64 },
    #[error("decay condition not met (margin {margin})")]
    ConditionNotMet { margin: f64 },
    #[error("run too short: need t_end >= {required}, got {actual}")]
    RunTooShort { required: f64, actual: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("malformed file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by the input document rather than the numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Parse(_)
                | Error::MissingKey(_)
                | Error::NonPositiveCoefficient(_)
                | Error::NegativeSchedule { .. }
                | Error::InvalidConfig(_)
                | Error::InvalidInitial(_)
                | Error::ShapeMismatch { .. }
                | Error::Malformed(_)
        )
    }
}
