//! Admissible solutions of the Hamilton-Jacobi system for scalar two-player
//! discounted differential games with piecewise-linear running costs.
//!
//! The phase-plane layers ([`model`], [`phase`], [`orbit`]) are generic over
//! the scalar type; solution building and Nash verification work in `f64`.

pub mod error;
pub mod model;
pub mod nash;
pub mod ode;
pub mod orbit;
pub mod phase;
pub mod real;
pub mod solution;

pub use error::{Error, Result};
pub use model::{
    classify_regime, classify_sector, validate_spec, ConfigError, CostSpec, Player, RawCostSpec, Regime, RegimeReport,
    Sector,
};
pub use orbit::{
    find_intersection, integrate, reconstruct_x, shoot_stable, shoot_unstable, Direction, Orbit, Side,
    StopConditions, Termination,
};
pub use phase::{capital_delta, direction_map, linearization, vector_field, DirectionMap, EigenData, PhaseState};
pub use nash::{
    best_response, deviation_gap, evaluate_cost, simulate_closed_loop, ClosedLoopRun, DeviationReport, GridParams, ValueTable,
};
pub use real::Real;
pub use solution::{check_admissibility, reconstruct_values, AdmissibleSolution, Tolerances};

pub type CostSpecF64 = CostSpec<f64>;
pub type CostSpecF32 = CostSpec<f32>;
pub type OrbitF64 = Orbit<f64>;
pub type OrbitF32 = Orbit<f32>;
pub type PhaseStateF64 = PhaseState<f64>;
pub type PhaseStateF32 = PhaseState<f32>;
pub type EigenDataF64 = EigenData<f64>;
pub type EigenDataF32 = EigenData<f32>;
pub type StopConditionsF64 = StopConditions<f64>;
pub type StopConditionsF32 = StopConditions<f32>;
