#![allow(dead_code)]

use parareal_core::state::{FieldName, FieldSet, Grid, ModelState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_state(grid: Grid, seed: u64, time: u64) -> ModelState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arrays = std::array::from_fn(|k| {
        let (mean, amp) = match FieldName::ALL[k] {
            FieldName::U | FieldName::V => (0.0, 0.5),
            FieldName::Eta => (0.0, 1.0),
            FieldName::T => (15.0, 3.0),
            FieldName::S => (35.0, 0.5),
        };
        (0..grid.len())
            .map(|_| mean + amp * rng.random_range(-1.0..1.0))
            .collect()
    });
    ModelState::new(grid, FieldSet::from_arrays(arrays), time).unwrap()
}

/// Integer-valued entries in [-1000, 1000].
pub fn integer_state(grid: Grid, seed: u64) -> ModelState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arrays = std::array::from_fn(|_| (0..grid.len()).map(|_| rng.random_range(-1000..=1000) as f64).collect());
    ModelState::new(grid, FieldSet::from_arrays(arrays), 0).unwrap()
}

/// Smooth low-mode state on a fine-enough grid to exercise every term.
pub fn smooth_state(grid: Grid) -> ModelState {
    let mut s = ModelState::rest(grid, 15.0, 35.0, 0);
    let (lx, ly) = (grid.length_x(), grid.length_y());
    let tau = std::f64::consts::TAU;
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            let x = (i as f64 + 0.5) * grid.dx();
            let y = (j as f64 + 0.5) * grid.dy();
            let c = grid.index(i, j);
            s.field_mut(FieldName::U)[c] = 0.2 * (tau * y / ly).sin() + 0.05 * (tau * 2.0 * x / lx).cos();
            s.field_mut(FieldName::V)[c] = 0.15 * (tau * x / lx).cos();
            s.field_mut(FieldName::Eta)[c] = 0.5 * (tau * (x / lx + y / ly)).sin();
            s.field_mut(FieldName::T)[c] = 15.0 + 2.0 * (tau * x / lx).sin() * (tau * y / ly).cos();
            s.field_mut(FieldName::S)[c] = 35.0 + 0.3 * (tau * 3.0 * y / ly).sin();
        }
    }
    s
}
