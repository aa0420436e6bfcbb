//! Error type shared by every module in the crate.

use thiserror::Error;

/// Errors surfaced by the numerics kernel, model construction, and
/// experiment orchestration.
///
/// The CLI maps these onto process exit codes: configuration problems
/// ([`Error::InvalidConfig`], [`Error::InvalidParameter`]) are user errors,
/// everything else signals an internal numerical failure.
#[derive(Debug, Error)]
pub enum Error {
    /// A matrix expected to be Hermitian deviated from its conjugate
    /// transpose by more than the construction tolerance.
    #[error("matrix is not Hermitian: max |H - H^H| entry = {max_deviation:.3e}")]
    NotHermitian { max_deviation: f64 },

    /// The eigenvalue solver did not converge.
    #[error("eigendecomposition failed to converge for a {dim}x{dim} matrix")]
    EigenFailed { dim: usize },

    /// An eigenvalue is too negative to be attributed to roundoff, so the
    /// matrix has no positive-semidefinite square root.
    #[error(
        "matrix is not positive semidefinite: eigenvalue {eigenvalue:.6e} \
         (largest eigenvalue {max_eigenvalue:.6e})"
    )]
    NotPositiveSemidefinite { eigenvalue: f64, max_eigenvalue: f64 },

    /// Two operands disagree on dimension.
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// A scalar or structured parameter failed validation at construction.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// An experiment configuration field failed validation.
    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    /// Calibration could not bracket the target percentile inside the
    /// search interval.
    #[error(
        "calibration failed to bracket the target percentile: \
         at rho_constant={lo:.3e} the percentile is {lo_db:.2} dB, \
         at rho_constant={hi:.3e} it is {hi_db:.2} dB"
    )]
    CalibrationBracket { lo: f64, hi: f64, lo_db: f64, hi_db: f64 },

    /// A fading realization produced a zero channel column, making the
    /// SINR undefined (probability-zero event; signals an upstream bug).
    #[error("channel column for terminal {terminal} has zero norm; SINR undefined")]
    ZeroChannelColumn { terminal: usize },

    /// A closed-form special case was requested for a scenario that does
    /// not satisfy its restrictions.
    #[error("special case `{case}` not applicable: {reason}")]
    SpecialCaseMismatch { case: &'static str, reason: String },
}
