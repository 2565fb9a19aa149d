use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("delay must be positive, got tau = {0}")]
    NonPositiveDelay(f64),

    #[error("segment count k must be at least 1")]
    ZeroSegments,

    #[error("state has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("history argument s = {s} outside [0, {tau}]")]
    HistoryOutOfRange { s: f64, tau: f64 },

    #[error("time t = {t} outside valid range ({lo}, {hi}]")]
    TimeOutOfRange { t: f64, lo: f64, hi: f64 },

    #[error("diffusion coefficient not strictly positive on the domain (min g = {min_g})")]
    EllipticityViolation { min_g: f64 },

    #[error("transition density vanished where it must be strictly positive: {0}")]
    PositivityViolation(String),

    #[error("advection CFL violated: dt = {dt} exceeds bound {bound}")]
    CflViolation { dt: f64, bound: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("covariance matrix is not symmetric positive-definite")]
    CovarianceNotSpd,

    #[error("moment kernel requires additive noise (s1 = s2 = 0)")]
    NonAdditiveNoise,

    #[error("total grid dimension {0} exceeds the solver cap of 3")]
    DimensionCap(usize),

    #[error("point {0:?} lies outside the grid interior")]
    PointOutsideGrid(Vec<f64>),

    #[error("grid axis invalid: min = {min}, max = {max}, n = {n} (need min < max, n >= {min_n})")]
    InvalidAxis { min: f64, max: f64, n: usize, min_n: usize },

    #[error("quadrature grid must have {expected} axes, got {got}")]
    AxisCountMismatch { expected: usize, got: usize },

    #[error("delay tau = {tau} is not an integer multiple of dt = {dt}")]
    DelayNotMultipleOfStep { tau: f64, dt: f64 },

    #[error("time {0} is not on the simulation step grid")]
    TimeOffGrid(f64),

    #[error("Monte Carlo kernel queried at a conditioning point it was not built for")]
    ConditioningMismatch,

    #[error("histogram window is empty or inverted")]
    EmptyWindow,

    #[error("need at least {min} samples, got {got}")]
    TooFewSamples { min: usize, got: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
