use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("node budget exceeded: {required} nodes needed, budget is {budget}")]
    Budget { required: u64, budget: u64 },

    #[error("time step too large: dt*L = {product:.4} must be < 1; use at least {min_steps} steps")]
    StepTooLarge { product: f64, min_steps: usize },

    #[error("non-finite value from {what} at {location}")]
    NonFinite { what: &'static str, location: String },

    #[error("CFL condition violated: dt = {dt:.3e} exceeds stable bound {bound:.3e}")]
    Cfl { dt: f64, bound: f64 },

    #[error("diffusion is degenerate or state dependent: {0}")]
    DegenerateDiffusion(String),

    #[error("discrete maximum principle violated at step {step}: {detail}")]
    MaximumPrinciple { step: usize, detail: String },

    #[error("value field does not match the requested tree: {0}")]
    ProvenanceMismatch(String),

    #[error("unknown problem key `{0}`")]
    UnknownProblem(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
