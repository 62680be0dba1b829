use thiserror::Error;

/// Errors raised by the geometric kernels, the flow engine and the monitors.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("unsupported dimension {0} (expected 1 or 2)")]
    UnsupportedDimension(usize),
    #[error("vector is not timelike (Minkowski square {0})")]
    NotTimelike(f64),
    #[error("boundary is not timelike at {at}: {reason}")]
    BoundaryNotTimelike { at: f64, reason: String },
    #[error("profile invariant violated at z = {z}: {reason}")]
    ProfileInvariant { z: f64, reason: String },
    #[error("lapse {lapse} below threshold {threshold}")]
    LapseDegenerate { lapse: f64, threshold: f64 },
    #[error("point outside the chart image: {0}")]
    OutsideChart(String),
    #[error("root not bracketed on [{lo}, {hi}]")]
    RootNotBracketed { lo: f64, hi: f64 },
    #[error("leaf at lambda = {0} is not spacelike")]
    LeafNotSpacelike(f64),
    #[error("spacelike guard tripped at t = {t}: max |Du|^2 = {value} at node {node}")]
    GuardTripped { t: f64, node: usize, value: f64 },
    #[error("boundary incidence solve failed: {0}")]
    NewtonFailure(String),
    #[error("time step underflow: dt = {dt} at t = {t}")]
    TimeStepUnderflow { t: f64, dt: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("stability hypothesis fails: A(nu,nu) = {value} <= 0 at boundary node {node}")]
    HypothesisFailed { node: usize, value: f64 },
    #[error("insufficient stored states: need {need}, have {have}")]
    InsufficientStates { need: usize, have: usize },
    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
