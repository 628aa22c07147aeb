use thiserror::Error;

/// Everything that can go wrong between building a curve and writing a CSV.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("ordering violation on {field}: {detail}")]
    OrderingViolation { field: &'static str, detail: String },

    #[error("lambda6 is not real: imaginary part {im:e}")]
    NonRealLambda { im: f64 },

    #[error("phi = {phi} is outside the branch interval (radicand {radicand:e})")]
    DomainError { phi: f64, radicand: f64 },

    #[error("K~({phi}) = {value:e} is too close to a branch point for the closed-form derivative")]
    NearBranchError { phi: f64, value: f64 },

    #[error("component {component} sits on a branch point (K~ = {value:e})")]
    BranchSingular { component: usize, value: f64 },

    #[error("components {a} and {b} coincide (|sin(phi_a - phi_b)| = {value:e})")]
    CollisionSingular { a: usize, b: usize, value: f64 },

    #[error("triple collision at s = {s}")]
    TripleCollision { s: f64 },

    #[error("collision chart failed: {0}")]
    ExpansionDiverged(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("config error in `{field}`: {detail}")]
    Config { field: String, detail: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
