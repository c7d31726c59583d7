//! Parallel-in-time integration with Parareal over a desk-scale rotating
//! shallow-water + tracer model.
//!
//! * [`state`]: grid, model state and the exact diff/add algebra.
//! * [`solver`]: right-hand side, Adams-Bashforth stepping, CFL bound.
//! * [`propagator`]: coarse/fine propagators, checkpoints, subprocess runs.
//! * [`parareal`]: the Parareal driver.
//! * [`metrics`]: error norms, speedup model, runtime ratios.

pub mod metrics;
pub mod parareal;
pub mod propagator;
pub mod solver;
pub mod state;

pub use parareal::{run_parareal, BlowUpPolicy, PararealConfig, PararealResult, Termination};
pub use propagator::{ModelPropagator, PropagatorSpec, RestartPolicy, SliceLayout};
pub use solver::{ModelParams, StepHistory};
pub use state::{FieldName, Grid, ModelState};
