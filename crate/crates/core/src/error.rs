use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("singular element-local system (pivot {pivot:e})")]
    SingularLocalSystem { pivot: f64 },
    #[error("element {element} out of range (mesh has {count})")]
    UnknownElement { element: usize, count: usize },
    #[error("{what} must be positive, got {value}")]
    NonPositive { what: &'static str, value: f64 },
    #[error("free surface at or below bathymetry at x = {x} (depth {depth:e})")]
    DegenerateDepth { x: f64, depth: f64 },
    #[error("flux {flux} is not defined on face class {class}")]
    WrongFaceClass { flux: &'static str, class: String },
    #[error("missing input: {0}")]
    Missing(&'static str),
    #[error("instability at step {step}: |coefficient| = {value:e} exceeds {limit:e}")]
    Unstable { step: usize, value: f64, limit: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
