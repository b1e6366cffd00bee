use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("integration diverged at t = {time} s")]
    IntegrationDiverged { time: f64 },
    #[error("zero-order-hold discretization produced a non-finite value")]
    DiscretizationFailed,
    #[error("Riccati iteration did not converge after {iterations} iterations")]
    RiccatiNoConvergence { iterations: usize },
    #[error("designed closed loop is unstable (spectral radius {spectral_radius})")]
    UnstableDesign { spectral_radius: f64 },
    #[error("eigenvalue computation did not converge")]
    Numeric,
    #[error("blocklength {blocklength} symbols is shorter than one symbol")]
    BlocklengthTooShort { blocklength: f64 },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("no feasible grid point in sweep")]
    NoFeasiblePoint,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
