//! Step-size bound and the steps-per-day discipline.

use super::{ModelParams, SolverError};
use crate::state::{FieldName, ModelState, StateError};

pub const SECONDS_PER_DAY: u64 = 86_400;

/// Default Courant number for [`cfl_max_dt`].
pub const DEFAULT_COURANT: f64 = 0.5;

pub fn is_day_divisor(n: u64) -> bool {
    n > 0 && SECONDS_PER_DAY.is_multiple_of(n)
}

/// All divisors of 86400 in ascending order.
pub fn day_divisors() -> Vec<u64> {
    (1..=SECONDS_PER_DAY).filter(|&d| SECONDS_PER_DAY.is_multiple_of(d)).collect()
}

/// Raw (unrounded) bound `C min(dx, dy) / (sqrt(g H) + max(|u|, |v|))`.
pub fn cfl_bound(s: &ModelState, p: &ModelParams, courant: f64) -> f64 {
    let grid = s.grid();
    let vmax = [FieldName::U, FieldName::V]
        .iter()
        .flat_map(|&f| s.field(f).iter())
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    courant * grid.dx().min(grid.dy()) / (p.wave_speed() + vmax)
}

/// Largest integer divisor of 86400 not exceeding the CFL bound.
pub fn cfl_max_dt(s: &ModelState, p: &ModelParams, courant: f64) -> Result<u64, SolverError> {
    if let Some((field, index)) = s.fields().first_non_finite() {
        return Err(StateError::NonFinite { field, index }.into());
    }
    let bound = cfl_bound(s, p, courant);
    if !(bound >= 1.0) {
        return Err(SolverError::CflImpossible { bound });
    }
    let dt = day_divisors()
        .into_iter()
        .rev()
        .find(|&d| d as f64 <= bound)
        .expect("1 always divides 86400");
    Ok(dt)
}
