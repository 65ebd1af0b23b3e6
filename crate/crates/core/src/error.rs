use thiserror::Error;

/// Every failure the laboratory can report.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("alpha = {0} outside the supported range [1, 2)")]
    AlphaOutOfRange(f64),
    #[error("domain length and final time must be positive (got L = {length}, T = {time})")]
    NonPositiveDomain { length: f64, time: f64 },
    #[error("epsilon schedule is empty")]
    EmptyEpsilonSchedule,
    #[error("epsilon schedule must be strictly decreasing inside (0, 1]: {0:?}")]
    InvalidEpsilonSchedule(Vec<f64>),
    #[error("cross section bounds violated: nu1 = {nu1}, nu2 = {nu2}")]
    CrossSectionBoundsViolated { nu1: f64, nu2: f64 },
    #[error("solvers only support dimension 1 (got {0})")]
    UnsupportedDimension(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("velocity grid needs an even node count (got {0})")]
    OddNodeCount(usize),
    #[error("velocity grid extent must be positive (got {0})")]
    NonPositiveExtent(f64),
    #[error("profiles live on different velocity grids")]
    GridMismatch,

    #[error("profile passed as equilibrium does not solve T(F) = 0 (residual {0:e})")]
    NonEquilibriumF(f64),
    #[error("power iteration stalled: eigenvalue estimate {eigenvalue} after {sweeps} sweeps")]
    PowerIterationStalled { eigenvalue: f64, sweeps: usize },
    #[error("equilibrium lost positivity (min entry {0:e})")]
    NegativeEntries(f64),
    #[error("linear system for lambda is singular")]
    SingularSystem,

    #[error("kappa closed form {closed_form} and quadrature {quadrature} disagree")]
    QuadratureMismatch { closed_form: f64, quadrature: f64 },
    #[error("drift matrix D diverges at alpha = 1; the critical case uses mu(E)")]
    TailDivergence,

    #[error("cannot advance backwards in time (now {now}, requested {until})")]
    NonMonotoneTime { now: f64, until: f64 },
    #[error("advection CFL violated: dt = {dt} exceeds {limit}")]
    StabilityViolation { dt: f64, limit: f64 },
    #[error("configuration does not match the requested regime: {0}")]
    ConfigRegimeMismatch(String),

    #[error("i/o failure: {0}")]
    Io(String),
    #[error("malformed configuration: {0}")]
    Config(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
