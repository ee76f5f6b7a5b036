//! Error types shared across the library.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManakovError {
    #[error("moduli a[{i}] and a[{j}] coincide; the coefficient matrix is undefined")]
    DuplicateModulus { i: usize, j: usize },

    #[error("coefficient matrix is not symmetric at ({i},{j})")]
    AsymmetricCoefficients { i: usize, j: usize },

    #[error("index {0} out of range (expected 1..=4 with distinct pair members)")]
    IndexOutOfRange(usize),

    #[error("state became non-finite during integration at t = {t}")]
    NonFiniteState { t: f64 },

    #[error("degenerate integral levels: h1^2 = 4 h0^2, quartic undefined")]
    DegenerateLevel,

    #[error("repeated quartic root (separation {sep:.3e} below threshold)")]
    RepeatedRoot { sep: f64 },

    #[error("no square-root branch annihilates f(s_p) (best residual {residual:.3e})")]
    BranchSelectionFailed { residual: f64 },

    #[error("vanishing minor Delta_{j}^(3) = {value:.3e}; coefficients undefined")]
    VanishingDelta { j: usize, value: f64 },

    #[error("the two reciprocal modulus formulas disagree (product deviates by {deviation:.3e})")]
    InconsistentModulus { deviation: f64 },

    #[error("normal-form model fit residual too large: {residual:.3e}")]
    FitResidualTooLarge { residual: f64 },

    #[error("divisor points coincide (|z1 - z2| = {sep:.3e})")]
    DiagonalDivisor { sep: f64 },

    #[error("divisor recovery did not converge (multistart exhausted)")]
    NoConvergence,

    #[error("branch points too close: |{a:?} - {b:?}| = {sep:.3e}")]
    BranchPointCollision { a: (f64, f64), b: (f64, f64), sep: f64 },

    #[error("cycle quadrature failed to converge (last change {change:.3e})")]
    QuadratureFailure { change: f64 },

    #[error("calibration ratio spread {spread:.3e} exceeds tolerance for label {label}")]
    CalibrationSpreadTooLarge { label: String, spread: f64 },

    #[error("theta denominator vanishes (|theta| = {value:.3e})")]
    ThetaZeroDenominator { value: f64 },

    #[error("branch discontinuity between adjacent samples (jump {jump:.3e})")]
    BranchDiscontinuity { jump: f64 },

    #[error("config validation failed: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
