use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter lies outside the domain where the quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("field contains non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("field length {got} does not match grid size {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("spectral input is not Hermitian: imaginary/real norm ratio {ratio:.3e}")]
    NonHermitianInput { ratio: f64 },

    #[error("field is zero")]
    ZeroField,

    #[error("field is not on the Nehari manifold: |N(u)| / ||u||^2 = {ratio:.3e}")]
    NotOnManifold { ratio: f64 },

    #[error("profile does not decay: boundary/peak ratio {ratio:.3e} exceeds 1e-3")]
    NoDecay { ratio: f64 },

    #[error("solver diverged at iteration {iteration}: energy {energy:.6e}")]
    Diverged { iteration: usize, energy: f64 },

    #[error("iterate collapsed to the zero field: {0}")]
    DegenerateIterate(String),

    #[error("group assumption violated: {0}")]
    AssumptionViolated(String),

    #[error("radius {radius} exceeds half the box length {half_box}")]
    RadiusTooLarge { radius: f64, half_box: f64 },

    #[error("delta {delta} outside (0, {total})")]
    DeltaOutOfRange { delta: f64, total: f64 },

    #[error("format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
