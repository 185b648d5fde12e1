use thiserror::Error;

use crate::model::Regime;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("breakpoints must be strictly increasing (index {index})")]
    NonIncreasingBreakpoints { index: usize },
    #[error("slope pair {index} is (0,0)")]
    ZeroSlopePair { index: usize },
    #[error("non-finite entry in {field}")]
    NonFiniteEntry { field: &'static str },
    #[error("expected {expected} slope pairs for {breakpoints} breakpoints, got {got}")]
    SlopeCountMismatch {
        expected: usize,
        breakpoints: usize,
        got: usize,
    },
    #[error("direction map {map} is undefined at alpha={alpha}")]
    DomainViolation { map: &'static str, alpha: f64 },
    #[error("step size underflow at s={s} (|p|={p_norm})")]
    StepSizeUnderflow { s: f64, p_norm: f64 },
    #[error("invalid stop conditions: {0}")]
    InvalidStopConditions(String),
    #[error("anchor index {index} out of range for {len} samples")]
    AnchorOutOfRange { index: usize, len: usize },
    #[error("regime mismatch: operation requires {expected}, spec is {found:?}")]
    RegimeMismatch { expected: String, found: Regime },
    #[error("orbit left its invariant box at x={x} p=({p1}, {p2})")]
    InvariantBoxViolation { x: f64, p1: f64, p2: f64 },
    #[error("datum ({p1}, {p2}) is outside the admissible family: {reason}")]
    DatumOutsideFamily { p1: f64, p2: f64, reason: String },
    #[error("construction failed to converge: {0}")]
    ConvergenceFailure(String),
    #[error("stable and unstable orbits do not intersect")]
    NoIntersection,
    #[error("precondition violated: {0}")]
    PreconditionViolation(String),
    #[error("closed-loop trajectory left the profiled window at x={x}")]
    WindowEscape { x: f64 },
    #[error("horizon must be positive, got {0}")]
    InvalidHorizon(f64),
    #[error("empty trajectory")]
    EmptyTrajectory,
    #[error("value iteration did not converge after {iterations} sweeps (last change {last_change})")]
    NonConvergence { iterations: usize, last_change: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("malformed artifact: {0}")]
    Artifact(String),
}
