use thiserror::Error;

/// Errors produced by the numerical core.
///
/// Payloads are stored as `f64` regardless of the scalar type the failing
/// routine was instantiated with.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("no real characteristic roots at c = {c} (minimum of chi0 is {min_value:e}); c is below the critical speed")]
    NoRealRoots { c: f64, min_value: f64 },

    #[error("initial condition does not match the grid: {0}")]
    SpecMismatch(String),

    #[error("blow-up at t = {t}: max |u| = {max_abs:e} exceeds {threshold:e}")]
    BlowUp { t: f64, max_abs: f64, threshold: f64 },

    #[error("numerical failure at t = {t}: {reason}")]
    NumericalFailure { t: f64, reason: String },

    #[error("profile relaxation did not converge after t = {t} (last change {last_change:e})")]
    NoConvergence { t: f64, last_change: f64 },

    #[error("front keeps drifting at rate {drift:e} in the co-moving frame; speed {c} is not admissible")]
    SpeedMismatch { c: f64, drift: f64 },

    #[error("tail fit unreliable: {0}")]
    TailFitUnreliable(String),

    #[error("no crossing of level {level} in snapshot at t = {t}")]
    NoCrossing { t: f64, level: f64 },

    #[error("field is not strictly positive at x = {x}")]
    NonPositiveField { x: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("series contains non-positive values")]
    NonPositiveValues,

    #[error("minimum lies on the bracket boundary [{lo}, {hi}]")]
    NoMinimumInBracket { lo: f64, hi: f64 },

    #[error("no admissible (delta*, gamma*, q) found: {0}")]
    NoAdmissibleParams(String),

    #[error("parameter out of budget: {0}")]
    ParameterOutOfBudget(String),

    #[error("degenerate profile: {0}")]
    DegenerateProfile(String),

    #[error("initial data leaves the envelope by {violation:e} at s = {s}, z = {z}")]
    InitialDataOutsideEnvelope { violation: f64, s: f64, z: f64 },

    #[error("certification failed: {0}")]
    CertificationFailed(String),
}

pub type Result<T> = std::result::Result<T, Error>;
