//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("weight matrix is numerically singular (sigma_min/sigma_max = {rcond:.3e})")]
    SingularWeight { rcond: f64 },

    #[error("weight matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("invalid norm exponent p = {p}; require p in [1, inf]")]
    InvalidExponent { p: f64 },

    #[error("invalid signal exponent q = {q}; require q in [1, inf]")]
    InvalidSignalExponent { q: f64 },

    #[error("pairing kind {kind} requires {requirement}, got p = {p}")]
    IncompatiblePairing {
        kind: &'static str,
        requirement: &'static str,
        p: String,
    },

    #[error("time grid needs at least {needed} points, got {got}")]
    GridTooShort { needed: usize, got: usize },

    #[error("time grid must be strictly increasing at index {index}")]
    GridNotIncreasing { index: usize },

    #[error("signal has {got} samples but the time grid has {expected}")]
    SignalLengthMismatch { expected: usize, got: usize },

    #[error("trajectory needs at least {needed} samples, got {got}")]
    TrajectoryTooShort { needed: usize, got: usize },

    #[error("trajectory grids do not match (lengths {left} vs {right}, or differing steps)")]
    TrajectoryGridMismatch { left: usize, right: usize },

    #[error("parse error at byte {position}: {message}")]
    Parse { position: usize, message: String },

    #[error("division by zero while evaluating component {component}")]
    DivisionByZero { component: usize },

    #[error("expected {expected} expressions, found {found}")]
    ComponentCountMismatch { expected: usize, found: usize },

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not Metzler: entry ({i},{j}) = {value:.3e} is negative")]
    NotMetzler { i: usize, j: usize, value: f64 },

    #[error("matrix is reducible; a positive epsilon is required")]
    ReducibleNeedsEpsilon,

    #[error("diagonal-weight LMI verification failed: max eigenvalue {residual:.3e}; shrink the irreducibility perturbation")]
    LmiVerificationFailed { residual: f64 },

    #[error("Perron iteration did not converge (last change {change:.3e})")]
    PerronNotConverged { change: f64 },

    #[error("x* is not an equilibrium: |f(t, x*)| = {residual:.3e} at t = {t}")]
    NotEquilibrium { residual: f64, t: f64 },

    #[error("no contraction guarantee: perturbation bound d = {d} >= rate c = {c} (gap {gap:.3e})")]
    NoContractionMargin { c: f64, d: f64, gap: f64 },

    #[error("projector kernel is not invariant: residual {residual:.3e} exceeds {threshold:.3e}")]
    KernelNotInvariant { residual: f64, threshold: f64 },

    #[error("flow does not preserve the x* + kernel subspace: semi-norm residual {residual:.3e}")]
    KernelFlowViolation { residual: f64 },

    #[error("projector is rank deficient (sigma_min/sigma_max = {rcond:.3e})")]
    RankDeficientProjector { rcond: f64 },

    #[error("equilibrium search exhausted horizon T = {horizon}: residual {residual:.3e}")]
    EquilibriumNotFound { horizon: f64, residual: f64 },

    #[error("probe input signal has zero norm")]
    ZeroProbe,

    #[error("region bounds invalid: lower must be strictly below upper in every coordinate")]
    InvalidRegion,

    #[error("need at least {needed} samples")]
    TooFewSamples { needed: usize },

    #[error("model has no factorization f(t,x) = A(t,x)(x - x*)")]
    NoFactorization,

    #[error("subsystem block dimensions are inconsistent: {message}")]
    BlockMismatch { message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
