//! Fixtures shared by the benchmarks.

use std::f64::consts::TAU;

use parareal_core::{FieldName, Grid, ModelParams, ModelPropagator, ModelState, PropagatorSpec};

/// Square periodic grid with the default 50 km spacing.
pub fn grid(n: usize) -> Grid {
    Grid::new(n, n, 5e4, 5e4).expect("valid grid")
}

/// Smooth low-mode state with every tendency term active.
pub fn smooth_state(grid: Grid) -> ModelState {
    let mut s = ModelState::rest(grid, 15.0, 35.0, 0);
    let (lx, ly) = (grid.length_x(), grid.length_y());
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            let x = (i as f64 + 0.5) * grid.dx() / lx;
            let y = (j as f64 + 0.5) * grid.dy() / ly;
            let c = grid.index(i, j);
            s.field_mut(FieldName::U)[c] = 0.2 * (TAU * y).sin();
            s.field_mut(FieldName::V)[c] = 0.15 * (TAU * x).cos();
            s.field_mut(FieldName::Eta)[c] = 0.5 * (TAU * (x + y)).sin();
            s.field_mut(FieldName::T)[c] = 15.0 + 2.0 * (TAU * x).sin() * (TAU * y).cos();
            s.field_mut(FieldName::S)[c] = 35.0 + 0.3 * (3.0 * TAU * y).sin();
        }
    }
    s
}

pub fn propagator(spd: u32, grid: Grid) -> ModelPropagator {
    ModelPropagator::internal(PropagatorSpec::internal(spd).expect("day divisor"), ModelParams::default(), grid)
}
