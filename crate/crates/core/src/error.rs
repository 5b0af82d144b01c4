//! Error type shared across the toolkit.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BifError {
    /// Bad user input: unknown parameter names, malformed ranges, inconsistent seeds.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input outside a routine's mathematical domain (e.g. fold-curve oracle off its branch).
    #[error("domain error: {0}")]
    Domain(String),

    /// Normal-form constants violate their defining constraints.
    #[error("invalid normal-form constants: {0}")]
    InvalidConstants(String),

    /// Bordered matrix too close to singular for a reliable solve.
    #[error("bordered system is numerically singular (rcond ~ {rcond:.3e})")]
    BorderDegeneracy { rcond: f64 },

    /// Extended Jacobian lost rank: the curve has a singular point here.
    #[error("tangent degeneracy: extended Jacobian is rank-deficient (relative sigma_min {sigma_min:.3e})")]
    TangentDegeneracy { sigma_min: f64 },

    /// Parameter-plane projection of a curve tangent too short to normalize.
    #[error("degenerate parameter-plane tangent (norm {norm:.3e})")]
    DegenerateTangent { norm: f64 },

    /// Newton corrector did not converge.
    #[error("corrector did not converge within {max_iter} iterations (last residual {residual:.3e})")]
    NoConvergence { max_iter: usize, residual: f64 },

    /// Analytic and finite-difference derivatives disagree.
    #[error("derivative mismatch in `{block}`: max relative discrepancy {discrepancy:.3e} exceeds tol {tol:.3e}")]
    DerivativeMismatch {
        block: &'static str,
        discrepancy: f64,
        tol: f64,
    },

    /// Evaluation would difference across the maintenance-rate kink.
    #[error("state component {component} = {value:.6e} is within {margin:.3e} of the rhs kink at {location:.6e}; refusing to straddle it")]
    KinkStraddle {
        component: usize,
        value: f64,
        location: f64,
        margin: f64,
    },

    /// Test-zero localization lost its bracket or its corrector.
    #[error("localization of `{test}` failed: {reason}")]
    Localization { test: String, reason: String },

    /// Adaptive integrator step size underflow.
    #[error("integrator step underflow at t = {t:.6e} (h = {h:.3e})")]
    StepUnderflow { t: f64, h: f64 },

    /// Seed data do not satisfy the preconditions of a continuation run.
    #[error("bad seed: {0}")]
    BadSeed(String),
}

pub type Result<T> = std::result::Result<T, BifError>;
