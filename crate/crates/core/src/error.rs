use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-physical state: minimum eigenvalue {min_eigenvalue:e}")]
    NonPhysicalState { min_eigenvalue: f64 },

    #[error("invalid temperature {0}: must be finite and > 0")]
    InvalidTemperature(f64),

    #[error("degenerate energy scale: Omega = sqrt(omega^2 + J^2) is zero")]
    DegenerateScale,

    #[error("cycle map is not contracting (spectral radius {spectral_radius})")]
    NoContraction { spectral_radius: f64 },

    #[error("invalid noise amplitude sigma = {sigma}: {reason}")]
    InvalidSigma { sigma: f64, reason: String },

    #[error("infeasible schedule: {0}")]
    InfeasibleSchedule(String),

    #[error("timescale undefined: {0}")]
    UndefinedTimescale(String),

    #[error("imaginary residue {residue:e} in projection onto the operator basis")]
    ImaginaryResidue { residue: f64 },

    #[error("superoperator does not close on the operator basis (residual {residual:e})")]
    NotClosed { residual: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
}

impl Error {
    /// Short variant name, used in CLI diagnostics.
    pub fn name(&self) -> &'static str {
        match self {
            Error::NonPhysicalState { .. } => "NonPhysicalState",
            Error::InvalidTemperature(_) => "InvalidTemperature",
            Error::DegenerateScale => "DegenerateScale",
            Error::NoContraction { .. } => "NoContraction",
            Error::InvalidSigma { .. } => "InvalidSigma",
            Error::InfeasibleSchedule(_) => "InfeasibleSchedule",
            Error::UndefinedTimescale(_) => "UndefinedTimescale",
            Error::ImaginaryResidue { .. } => "ImaginaryResidue",
            Error::NotClosed { .. } => "NotClosed",
            Error::InvalidParameter { .. } => "InvalidParameter",
        }
    }

    /// Whether the error stems from invalid input rather than a numerical
    /// breakdown.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidTemperature(_)
                | Error::InvalidSigma { .. }
                | Error::InfeasibleSchedule(_)
                | Error::InvalidParameter { .. }
        )
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
