//! Rotating shallow-water momentum with flux-form advected tracers on a
//! doubly periodic grid.
//!
//! Continuous system, discretised with second-order centered differences:
//!
//! ```text
//! du/dt   =  f0 v - (u du/dx + v du/dy) - g deta/dx + nu_h lap(u) + Fx(y)
//! dv/dt   = -f0 u - (u dv/dx + v dv/dy) - g deta/dy + nu_h lap(v)
//! deta/dt = -H (du/dx + dv/dy)
//! dT/dt   = -d(uT)/dx - d(vT)/dy + kappa lap(T)        (same for S)
//! ```
//!
//! `Fx(y) = forcing_amp * sin(2 pi k (j + 1/2) / ny)` is a steady zonal wind
//! analog. Time stepping lives in [`multistep`], the step-size bound in [`cfl`].

pub mod cfl;
pub mod multistep;

use std::f64::consts::PI;

use thiserror::Error;

use crate::state::{BlowUpReport, FieldName, FieldSet, ModelState, StateError, DEFAULT_VELOCITY_CAP};

pub use cfl::{cfl_max_dt, day_divisors, is_day_divisor, DEFAULT_COURANT, SECONDS_PER_DAY};
pub use multistep::{ab3_step, ab_coefficients, ab_update, integrate, integrate_history, integrate_observed, StepHistory};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error(transparent)]
    State(#[from] StateError),
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("blow-up at step {step} (t = {time} s): {report}")]
    BlowUp {
        step: usize,
        time: u64,
        report: BlowUpReport,
    },
    #[error("step mismatch: {0}")]
    StepMismatch(String),
    #[error("step history mismatch: {0}")]
    HistoryMismatch(String),
    #[error("CFL bound {bound:.3e} s is below one second")]
    CflImpossible { bound: f64 },
}

/// Physical parameters of the shallow-water analog.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Coriolis parameter (1/s).
    pub f0: f64,
    /// Gravity (m/s^2). The desk-scale default is a reduced gravity.
    pub g: f64,
    /// Mean layer depth (m).
    pub depth: f64,
    /// Horizontal viscosity (m^2/s).
    pub nu_h: f64,
    /// Tracer diffusivity (m^2/s).
    pub kappa: f64,
    /// Zonal wind-forcing amplitude (m/s^2).
    pub forcing_amp: f64,
    /// Meridional wavenumber of the wind forcing.
    pub forcing_wavenumber: u32,
    /// Velocity cap used by the blow-up predicate (m/s).
    pub velocity_cap: f64,
}

impl Default for ModelParams {
    /// Desk-scale defaults: with a 50 km grid the gravity-wave speed
    /// `sqrt(g H) ~ 8.9 m/s` puts the CFL limit at 2700 s, just above the
    /// 36 steps-per-day coarse step.
    fn default() -> Self {
        Self {
            f0: 1e-4,
            g: 1.0,
            depth: 80.0,
            nu_h: 100.0,
            kappa: 50.0,
            forcing_amp: 1e-7,
            forcing_wavenumber: 1,
            velocity_cap: DEFAULT_VELOCITY_CAP,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<(), SolverError> {
        let finite = [
            self.f0,
            self.g,
            self.depth,
            self.nu_h,
            self.kappa,
            self.forcing_amp,
            self.velocity_cap,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(SolverError::InvalidParams("all parameters must be finite".into()));
        }
        if self.depth <= 0.0 || self.g <= 0.0 {
            return Err(SolverError::InvalidParams(format!(
                "need H > 0 and g > 0, got H={}, g={}",
                self.depth, self.g
            )));
        }
        if self.nu_h < 0.0 || self.kappa < 0.0 {
            return Err(SolverError::InvalidParams(format!(
                "need nu_h >= 0 and kappa >= 0, got nu_h={}, kappa={}",
                self.nu_h, self.kappa
            )));
        }
        if self.velocity_cap <= 0.0 {
            return Err(SolverError::InvalidParams("velocity_cap must be positive".into()));
        }
        Ok(())
    }

    /// Gravity-wave phase speed `sqrt(g H)`.
    pub fn wave_speed(&self) -> f64 {
        (self.g * self.depth).sqrt()
    }
}

/// Time derivative of every prognostic field.
#[derive(Debug, Clone, PartialEq)]
pub struct Tendency(pub FieldSet);

impl Tendency {
    pub fn field(&self, name: FieldName) -> &[f64] {
        self.0.field(name)
    }

    pub fn fields(&self) -> &FieldSet {
        &self.0
    }
}

/// Steady zonal forcing profile, one value per grid row.
pub fn forcing_profile(ny: usize, p: &ModelParams) -> Vec<f64> {
    (0..ny)
        .map(|j| {
            let y = (j as f64 + 0.5) / ny as f64;
            p.forcing_amp * (2.0 * PI * p.forcing_wavenumber as f64 * y).sin()
        })
        .collect()
}

/// Right-hand side of the shallow-water + tracer system.
pub fn rhs(s: &ModelState, p: &ModelParams) -> Result<Tendency, SolverError> {
    if let Some((field, index)) = s.fields().first_non_finite() {
        return Err(StateError::NonFinite { field, index }.into());
    }
    let grid = s.grid();
    let (nx, ny) = (grid.nx(), grid.ny());
    let ix2 = 0.5 / grid.dx();
    let iy2 = 0.5 / grid.dy();
    let ixx = 1.0 / (grid.dx() * grid.dx());
    let iyy = 1.0 / (grid.dy() * grid.dy());
    let forcing = forcing_profile(ny, p);

    let u = s.field(FieldName::U);
    let v = s.field(FieldName::V);
    let eta = s.field(FieldName::Eta);
    let temp = s.field(FieldName::T);
    let salt = s.field(FieldName::S);

    let n = grid.len();
    let mut du = vec![0.0; n];
    let mut dv = vec![0.0; n];
    let mut deta = vec![0.0; n];
    let mut dtemp = vec![0.0; n];
    let mut dsalt = vec![0.0; n];

    let lap = |q: &[f64], c: usize, e: usize, w: usize, no: usize, so: usize| {
        (q[e] - 2.0 * q[c] + q[w]) * ixx + (q[no] - 2.0 * q[c] + q[so]) * iyy
    };

    for j in 0..ny {
        let row = j * nx;
        let row_n = ((j + 1) % ny) * nx;
        let row_s = ((j + ny - 1) % ny) * nx;
        for i in 0..nx {
            let ie = if i + 1 == nx { 0 } else { i + 1 };
            let iw = if i == 0 { nx - 1 } else { i - 1 };
            let c = row + i;
            let e = row + ie;
            let w = row + iw;
            let no = row_n + i;
            let so = row_s + i;

            let uc = u[c];
            let vc = v[c];
            let dudx = (u[e] - u[w]) * ix2;
            let dudy = (u[no] - u[so]) * iy2;
            let dvdx = (v[e] - v[w]) * ix2;
            let dvdy = (v[no] - v[so]) * iy2;

            du[c] = p.f0 * vc - (uc * dudx + vc * dudy) - p.g * (eta[e] - eta[w]) * ix2
                + p.nu_h * lap(u, c, e, w, no, so)
                + forcing[j];
            dv[c] = -p.f0 * uc - (uc * dvdx + vc * dvdy) - p.g * (eta[no] - eta[so]) * iy2
                + p.nu_h * lap(v, c, e, w, no, so);
            deta[c] = -p.depth * (dudx + dvdy);

            for (q, dq) in [(temp, &mut dtemp), (salt, &mut dsalt)] {
                let flux_x = (u[e] * q[e] - u[w] * q[w]) * ix2;
                let flux_y = (v[no] * q[no] - v[so] * q[so]) * iy2;
                dq[c] = -(flux_x + flux_y) + p.kappa * lap(q, c, e, w, no, so);
            }
        }
    }

    Ok(Tendency(FieldSet::from_arrays([du, dv, deta, dtemp, dsalt])))
}

/// Domain-integrated kinetic energy per unit density, `0.5 H sum(u^2 + v^2) dx dy`.
pub fn kinetic_energy(s: &ModelState, p: &ModelParams) -> f64 {
    let area = s.grid().dx() * s.grid().dy();
    let sum: f64 = s
        .field(FieldName::U)
        .iter()
        .zip(s.field(FieldName::V))
        .map(|(u, v)| u * u + v * v)
        .sum();
    0.5 * p.depth * area * sum
}
