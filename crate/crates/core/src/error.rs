use thiserror::Error;

/// Errors produced by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("atoms {i} and {j} are closer than {min_distance} wavelengths (distance {distance:e})")]
    CoincidentAtoms {
        i: usize,
        j: usize,
        distance: f64,
        min_distance: f64,
    },

    #[error("zero displacement passed to the dyadic Green function")]
    ZeroDisplacement,

    #[error("diffraction order ({m},{n}) is within {tolerance:e} of grazing (|g|/k0 = {ratio})")]
    GrazingOrder {
        m: i64,
        n: i64,
        ratio: f64,
        tolerance: f64,
    },

    #[error("lattice constant range [{lo}, {hi}] lies outside the single-shell window ({window_lo}, {window_hi})")]
    OutsideValidityWindow {
        lo: f64,
        hi: f64,
        window_lo: f64,
        window_hi: f64,
    },

    #[error("layer matrix is not at a critical configuration: max |Re G| = {max_real:e}")]
    NotCritical { max_real: f64 },

    #[error("eigendecomposition failed: {0}")]
    Eigendecomposition(String),

    #[error("collective mode {index} is ill-conditioned: |v.v| = {norm:e}")]
    IllConditionedMode { index: usize, norm: f64 },

    #[error("collective mode {index} is not decaying: Im(lambda) = {imag:e}")]
    NonDecayingMode { index: usize, imag: f64 },

    #[error("collective modes are incomplete: |sum v v^T - I| = {error:e}")]
    IncompleteModes { error: f64 },

    #[error("linear response system is singular at detuning {detuning} (relative residual {residual:e})")]
    SingularSystem { detuning: f64, residual: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("matrix and mode vector are expressed in different bases")]
    BasisMismatch,

    #[error("spin wave is not normalized: |s| = {norm}")]
    UnnormalizedSpinWave { norm: f64 },

    #[error("objective returned a non-finite value at {point:?}")]
    NonFiniteObjective { point: Vec<f64> },

    #[error("power-law fit needs {needed} points with positive values: {reason}")]
    InvalidFitData { needed: usize, reason: String },

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
