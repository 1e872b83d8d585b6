use thiserror::Error;

/// Errors produced by the modelling and analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("wavelength {value} {unit} outside valid range [{min}, {max}] {unit}")]
    OutOfRange {
        value: f64,
        min: f64,
        max: f64,
        unit: &'static str,
    },

    #[error("domain error in {op}: {reason}")]
    Domain { op: &'static str, reason: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("HE11 root not found at lambda = {lambda_um} um, d = {diameter_um} um (scan resolution {resolution:e})")]
    NoModeFound {
        lambda_um: f64,
        diameter_um: f64,
        resolution: f64,
    },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("overflow evaluating {what}; saturated to {saturated:e}")]
    Overflow { what: String, saturated: f64 },

    #[error("CAR undefined: accidental rate is zero")]
    UndefinedCar,
}

impl Error {
    pub(crate) fn domain(op: &'static str, reason: impl Into<String>) -> Self {
        Error::Domain {
            op,
            reason: reason.into(),
        }
    }

    /// True for errors that originate in a solver or root finder rather than
    /// in user input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Numerical(_) | Error::NoModeFound { .. } | Error::Fit(_) | Error::UndefinedCar
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
