//! Numeric thresholds used across the crate.
//!
//! All tolerances live here so that tests and library code agree on a single
//! value for each guard.

/// Elementwise equality tolerance for float-mode measure operations.
///
/// Rational mode compares exactly and ignores this value.
pub const FLOAT_MODE: f64 = 1e-12;

/// Gram-diagonal jitter before factorization, scaled by `trace / dim`.
pub const GRAM_JITTER_SCALE: f64 = 1e-10;

/// Observation-variance floor below which a coordinate counts as deterministic.
pub const OBS_VAR_FLOOR: f64 = 1e-12;

/// Allowed gap between a deterministic prediction and its observation.
pub const DETERMINISTIC_OBS_TOL: f64 = 1e-6;

/// Relative mean agreement between batch and recursive GP predictives.
pub const GP_MEAN_REL: f64 = 1e-8;

/// Absolute covariance-entry agreement between batch and recursive GP predictives.
pub const GP_COV_ABS: f64 = 1e-6;

/// Permitted asymmetry in a stored covariance matrix.
pub const COV_SYMMETRY: f64 = 1e-10;

/// Eigenvalue floor for posterior covariances, scaled by the trace.
pub const PSD_EIGEN_SCALE: f64 = 1e-8;

/// Agreement between a conditioning step and the reference Kalman form.
pub const KALMAN_GAIN_TOL: f64 = 1e-10;

/// GP predictive-consistency (marginalization) tolerance.
pub const GP_MARGINAL_TOL: f64 = 1e-10;

/// Recursive-result drift allowed under training-stream permutation.
pub const GP_ORDER_TOL: f64 = 1e-8;

/// Diagonal jitter for copula correlation matrices before factorization.
pub const CORR_JITTER: f64 = 1e-10;

/// Distance under which two real-valued observation atoms merge.
pub const REAL_ATOM_MERGE: f64 = 1e-12;
