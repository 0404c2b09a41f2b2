use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid direction: {0}")]
    InvalidDirection(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid environment: {0}")]
    InvalidEnvironment(String),

    #[error("invalid law: {0}")]
    InvalidLaw(String),

    #[error("no root of E[rho^k] = 1: {0}")]
    NoRoot(String),

    #[error("ellipticity violated: kernel({direction}) = {prob} < kappa = {kappa}")]
    EllipticityViolation {
        direction: usize,
        prob: f64,
        kappa: f64,
    },

    #[error("pattern length {len} is not a multiple of |u|_1 = {p}")]
    PatternLength { len: usize, p: i64 },

    #[error("pattern prefix of length {prefix} leaves the cone")]
    ConeViolation { prefix: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("enumeration too large: {0}")]
    SizeGuard(String),

    #[error("absorbing defect: {0}")]
    AbsorbingDefect(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
