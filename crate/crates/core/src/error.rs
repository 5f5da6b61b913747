use thiserror::Error;

/// Errors raised while ingesting and validating event data.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("row {row}: {message}")]
    MalformedRow { row: usize, message: String },
    #[error("row {row}: negative time {time}")]
    NegativeTime { row: usize, time: f64 },
    #[error("row {row}: self-loop on actor `{actor}`")]
    SelfLoop { row: usize, actor: String },
    #[error("unknown column `{0}` (expected sender, receiver, time)")]
    UnknownColumn(String),
    #[error("missing column `{0}`")]
    MissingColumn(&'static str),
    #[error("actor id {id} out of range for {n_actors} actors")]
    ActorOutOfRange { id: usize, n_actors: usize },
    #[error("event {index} at time {time} is earlier than the clock {clock}")]
    TimeRegression { index: usize, time: f64, clock: f64 },
    #[error("event times must be finite")]
    NonFiniteTime,
    #[error("{kept} events left after preprocessing, need at least {required}")]
    TooFewEvents { kept: usize, required: usize },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum StrataError {
    #[error("dyad ({0}, {0}) is a self-loop")]
    SelfDyad(usize),
}

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("dyad rate overflow: rate({sender}->{receiver}) is not finite")]
    RateOverflow { sender: usize, receiver: usize },
}

#[derive(Debug, Error)]
pub enum EstimationError {
    #[error("invalid model input: {0}")]
    InvalidInput(String),
    #[error("non-finite log partial likelihood")]
    NonFinite,
    #[error("random-effects block of the negated Hessian is not positive definite")]
    NotPositiveDefinite,
    #[error("inner Newton solver did not converge (max |gradient| = {grad_norm:e})")]
    InnerNotConverged { grad_norm: f64 },
}

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("no Spontaneous curve available for the hazard ratio summary")]
    MissingReference,
    #[error("invalid spline configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
