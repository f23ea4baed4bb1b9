use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("ordering violation: {0}")]
    OrderingViolation(String),
    #[error("non-positive dimension: {0}")]
    NonpositiveDimension(String),
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: String, reason: String },
    #[error("grid spacing {spacing_um} um too coarse (must be <= {limit_um} um)")]
    ResolutionTooCoarse { spacing_um: f64, limit_um: f64 },
    #[error("solver diverged: relative residual {residual:e}")]
    SolverDiverged { residual: f64 },
    #[error("point ({x_um}, {y_um}) um is outside the fluid region")]
    PointOutsideFluid { x_um: f64, y_um: f64 },
    #[error("particle released outside the fluid region at ({x_um}, {y_um}) um")]
    ReleaseOutsideFluid { x_um: f64, y_um: f64 },
    #[error("time step {dt_s:e} s exceeds stability limit {limit_s:e} s (tau/10)")]
    StepUnstable { dt_s: f64, limit_s: f64 },
    #[error("species list is empty")]
    EmptySpeciesList,
    #[error("no particle crossed the electrode plane")]
    NoCrossings,
    #[error("all sweep rows failed")]
    AllRowsFailed,
    #[error("frequency lists differ")]
    FrequencyMismatch,
    #[error("no frequency of the spectrum lies inside the band")]
    EmptyBand,
    #[error("no threshold given and no labeled calibration data for both classes")]
    NoCalibration,
}

impl Error {
    pub(crate) fn invalid(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    /// True for failures of a numerical solve, as opposed to bad input.
    pub fn is_solver_failure(&self) -> bool {
        matches!(self, Error::SolverDiverged { .. })
    }
}
