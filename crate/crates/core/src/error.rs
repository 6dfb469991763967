use thiserror::Error;

/// Errors surfaced by grid construction, spectral operators, the stepper,
/// and the analysis routines.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("invalid parameters: {0}")]
    Params(String),

    #[error("invalid step plan: {0}")]
    Plan(String),

    #[error("derivative order {order} exceeds the supported cap {cap}")]
    DerivativeOrder { order: usize, cap: usize },

    #[error(
        "resample leaves the reliable region: dilated target reaches |s*x| = {reach:.4}, \
         allowed 0.9*L = {limit:.4}"
    )]
    ResampleRange { reach: f64, limit: f64 },

    #[error(
        "quadratic phase under-resolved on this grid: b*L*h/(2(1+bt)) = {value:.4} > pi/4; \
         refine the grid or reduce b"
    )]
    PhaseResolution { value: f64 },

    #[error("time {t} outside [0, 1/b) for b = {b}")]
    TimePastSingularity { t: f64, b: f64 },

    #[error("field became non-finite at t = {t:.6e}")]
    NonFinite { t: f64 },

    #[error(
        "|v| fell to {min:.3e} (< {floor:.1e}) at t = {t:.6e}; \
         pointwise amplitude quantities are unreliable past this point"
    )]
    MagnitudeFloor { t: f64, min: f64, floor: f64 },

    #[error("{0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
