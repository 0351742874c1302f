use thiserror::Error;

pub type Result<T> = std::result::Result<T, SimError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    /// An input violated a documented precondition.
    #[error("invalid input `{field}`: {reason}")]
    InvalidInput { field: &'static str, reason: String },

    /// NV–spin separation below the singularity guard.
    #[error("NV-spin separation {distance_nm:.4} nm is below the {guard_nm} nm guard")]
    SingularSeparation { distance_nm: f64, guard_nm: f64 },

    #[error("quadrature did not converge (estimated residual {residual:.3e}, tolerance {tolerance:.3e})")]
    Quadrature { residual: f64, tolerance: f64 },

    #[error("tiling reached coverage {achieved:.4} of requested {requested:.4}")]
    Tiling { achieved: f64, requested: f64 },

    #[error("fit did not converge: {reason}")]
    FitNonConvergence {
        reason: String,
        /// Best parameter vector seen before giving up.
        best: Vec<f64>,
    },

    #[error("degenerate fit input: {0}")]
    DegenerateFit(String),

    #[error("numerical failure: {0}")]
    Numeric(String),
}

impl SimError {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        SimError::InvalidInput { field, reason: reason.into() }
    }
}
