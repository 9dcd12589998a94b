use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unsupported nuclear spin I = {0}")]
    UnsupportedSpin(String),

    #[error("matrix is not Hermitian (deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("matrix trace is {0:.15} instead of 1")]
    BadTrace(f64),

    #[error("density matrix has negative eigenvalue {0:.3e}")]
    NotPositive(f64),

    #[error("matrix dimension {got} does not match system dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("polarization must lie in [0, 1), got {0}")]
    BadPolarization(f64),

    #[error("invalid direction vector")]
    BadDirection,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("time step {dt:.3e} s violates the stability guard; need dt <= {required:.3e} s")]
    StepTooLarge { dt: f64, required: f64 },

    #[error("trace drifted by {drift:.3e} at t = {time:.6e} s")]
    TraceDrift { time: f64, drift: f64 },

    #[error("multipole entry L={l} M={m} F={f} F'={fp} is missing or out of range")]
    MissingMultipole { l: i32, m: i32, f: String, fp: String },

    #[error("eigen-decomposition failed: {0}")]
    Decomposition(String),

    #[error("incomplete susceptibility weight table: {0}")]
    IncompleteWeights(String),

    #[error("vanishing reference amplitude: {0}")]
    VanishingAmplitude(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}
