//! Relative error norms, the Parareal speedup model and runtime-ratio
//! measurement.

use std::time::{Duration, Instant};

use thiserror::Error;

use crate::propagator::{ModelPropagator, PropagatorSpec, SliceLayout};
use crate::solver::{integrate, integrate_observed, ModelParams, SolverError, StepHistory};
use crate::state::{FieldName, FieldSet, ModelState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("reference field has zero norm; relative error undefined")]
    ZeroReference,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),
    #[error("runtime measurement needs internal propagators")]
    NotInternal,
    #[error("workload too small: coarse run below timer resolution after {reps} repetitions")]
    WorkloadTooSmall { reps: usize },
    #[error(transparent)]
    Solver(#[from] SolverError),
}

fn check_lengths(approx: &[f64], reference: &[f64]) -> Result<(), MetricsError> {
    if approx.len() != reference.len() {
        return Err(MetricsError::LengthMismatch(approx.len(), reference.len()));
    }
    Ok(())
}

/// `max|a - r| / max|r|`.
pub fn rel_max_norm(approx: &[f64], reference: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(approx, reference)?;
    let denom = reference.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
    if denom == 0.0 {
        return Err(MetricsError::ZeroReference);
    }
    let num = approx
        .iter()
        .zip(reference)
        .fold(0.0_f64, |m, (a, r)| m.max((a - r).abs()));
    Ok(num / denom)
}

/// Scaled Euclidean norm; scaling by the largest magnitude avoids overflow
/// and keeps the ratio exact for simultaneous rescaling.
fn l2(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let scale = values.clone().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let sum: f64 = values.map(|v| (v / scale) * (v / scale)).sum();
    scale * sum.sqrt()
}

/// `||a - r||_2 / ||r||_2`.
pub fn rel_l2_norm(approx: &[f64], reference: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(approx, reference)?;
    let denom = l2(reference.iter().copied());
    if denom == 0.0 {
        return Err(MetricsError::ZeroReference);
    }
    let num = l2(approx.iter().zip(reference).map(|(a, r)| a - r));
    Ok(num / denom)
}

/// Both relative norms for one field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldError {
    pub field: FieldName,
    pub e_inf: f64,
    pub e_2: f64,
}

pub fn field_errors(
    approx: &ModelState,
    reference: &ModelState,
    fields: &[FieldName],
) -> Result<Vec<FieldError>, MetricsError> {
    fields
        .iter()
        .map(|&field| {
            Ok(FieldError {
                field,
                e_inf: rel_max_norm(approx.field(field), reference.field(field))?,
                e_2: rel_l2_norm(approx.field(field), reference.field(field))?,
            })
        })
        .collect()
}

/// Runtime model of one Parareal run: fine cost is `m` times coarse cost per slice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedupModel {
    pub n_slices: usize,
    pub runtime_ratio: f64,
    pub tau_coarse: Option<f64>,
}

impl SpeedupModel {
    pub fn new(n_slices: usize, runtime_ratio: f64) -> Self {
        assert!(n_slices >= 1, "need at least one slice");
        assert!(runtime_ratio > 0.0, "runtime ratio must be positive");
        Self {
            n_slices,
            runtime_ratio,
            tau_coarse: None,
        }
    }

    /// Serial fine runtime in units of `tau_G`: `N_t m`.
    pub fn serial_runtime(&self) -> f64 {
        self.n_slices as f64 * self.runtime_ratio
    }

    /// Parareal runtime in units of `tau_G` after `k` iterations:
    /// `(k + 1) N_t + k m`.
    pub fn parareal_runtime(&self, k: usize) -> f64 {
        (k as f64 + 1.0) * self.n_slices as f64 + k as f64 * self.runtime_ratio
    }

    pub fn estimate(&self, k: usize) -> f64 {
        speedup_estimate(k, self.n_slices, self.runtime_ratio)
    }

    pub fn bound(&self, k: usize) -> f64 {
        speedup_bound(k, self.n_slices, self.runtime_ratio)
    }

    pub fn max_profitable_iterations(&self) -> usize {
        max_profitable_iterations(self.runtime_ratio, self.n_slices)
    }
}

/// `S(k, N_t, m) = 1 / ((k + 1)/m + k/N_t)`.
pub fn speedup_estimate(k: usize, n_slices: usize, m: f64) -> f64 {
    1.0 / ((k as f64 + 1.0) / m + k as f64 / n_slices as f64)
}

/// `min{ m/(k + 1), N_t/k }`; `N_t/0` is taken as infinite.
pub fn speedup_bound(k: usize, n_slices: usize, m: f64) -> f64 {
    let by_ratio = m / (k as f64 + 1.0);
    if k == 0 {
        by_ratio
    } else {
        by_ratio.min(n_slices as f64 / k as f64)
    }
}

/// Largest `k >= 0` with `speedup_bound(k) > 1`, or 0 when none.
pub fn max_profitable_iterations(m: f64, n_slices: usize) -> usize {
    // both terms of the bound decrease in k, and k = N_t gives N_t/k = 1
    (0..n_slices)
        .take_while(|&k| speedup_bound(k, n_slices, m) > 1.0)
        .last()
        .unwrap_or(0)
}

/// Median wall-time ratio with spread.
#[derive(Debug, Clone, PartialEq)]
pub struct RuntimeRatio {
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub repetitions: usize,
    /// Inner repetitions per timed sample.
    pub batch: usize,
    pub coarse_median: Duration,
}

/// Fixed one-slice workload for runtime measurement.
#[derive(Debug, Clone)]
pub struct Workload {
    pub state: ModelState,
    pub params: ModelParams,
    pub slice_length: u64,
}

const TIMER_FLOOR: Duration = Duration::from_millis(2);

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Times both propagators over one slice, interleaved, and returns the
/// median of the per-sample ratios `tau_F / tau_G`. Each sample repeats the
/// run until the coarse time clears a small timer floor.
///
/// Timed sections must not share the process with other heavy work.
pub fn measure_runtime_ratio(
    coarse: &PropagatorSpec,
    fine: &PropagatorSpec,
    workload: &Workload,
    repetitions: usize,
) -> Result<RuntimeRatio, MetricsError> {
    if !coarse.is_internal() || !fine.is_internal() {
        return Err(MetricsError::NotInternal);
    }
    let repetitions = repetitions.max(5);
    let t_end = workload.state.time() + workload.slice_length;
    let run = |spec: &PropagatorSpec, batch: usize| -> Result<Duration, MetricsError> {
        let start = Instant::now();
        for _ in 0..batch {
            std::hint::black_box(integrate(&workload.state, t_end, spec.dt(), &workload.params)?);
        }
        Ok(start.elapsed())
    };

    // warm-up and batch calibration on the cheaper run
    run(coarse, 1)?;
    run(fine, 1)?;
    let mut batch = 1;
    loop {
        if run(coarse, batch)? >= TIMER_FLOOR {
            break;
        }
        if batch >= 1 << 16 {
            return Err(MetricsError::WorkloadTooSmall { reps: batch });
        }
        batch *= 2;
    }

    let mut ratios = Vec::with_capacity(repetitions);
    let mut coarse_times = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let tc = run(coarse, batch)?;
        let tf = run(fine, batch)?;
        ratios.push(tf.as_secs_f64() / tc.as_secs_f64());
        coarse_times.push(tc.as_secs_f64() / batch as f64);
    }
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let max = ratios.iter().copied().fold(0.0, f64::max);
    Ok(RuntimeRatio {
        median: median(&mut ratios),
        min,
        max,
        repetitions,
        batch,
        coarse_median: Duration::from_secs_f64(median(&mut coarse_times)),
    })
}

/// Serial run that keeps, for every slice, the mean over its post-step states.
#[derive(Debug, Clone)]
pub struct AveragedRun {
    pub spd: u32,
    pub layout: SliceLayout,
    pub slice_means: Vec<FieldSet>,
}

/// Restarted serial run (cold or warm per the propagator's policy)
/// collecting per-slice time means.
pub fn averaged_serial_run(
    propagator: &ModelPropagator,
    u0: &ModelState,
    layout: &SliceLayout,
) -> Result<AveragedRun, MetricsError> {
    let spec = propagator.spec();
    layout
        .check_spec(spec)
        .map_err(|e| MetricsError::LayoutMismatch(e.to_string()))?;
    let n_cells = u0.grid().len();
    let mut means = Vec::with_capacity(layout.n_slices());
    let mut h = StepHistory::cold(u0.clone());
    for n in 0..layout.n_slices() {
        let mut sum = FieldSet::zeros(n_cells);
        let mut count = 0usize;
        let start = match spec.restart_policy {
            crate::propagator::RestartPolicy::Warm => h,
            crate::propagator::RestartPolicy::Cold => StepHistory::cold(h.into_current()),
        };
        h = integrate_observed(start, layout.boundary(n + 1), spec.dt(), propagator.params(), |s| {
            for field in FieldName::ALL {
                for (acc, v) in sum.field_mut(field).iter_mut().zip(s.field(field)) {
                    *acc += v;
                }
            }
            count += 1;
        })?;
        for field in FieldName::ALL {
            for acc in sum.field_mut(field) {
                *acc /= count as f64;
            }
        }
        means.push(sum);
    }
    Ok(AveragedRun {
        spd: spec.spd(),
        layout: *layout,
        slice_means: means,
    })
}

/// Per-slice relative max-norm of slice-averaged `field` against the reference run.
pub fn time_averaged_error_series(
    run: &AveragedRun,
    reference: &AveragedRun,
    field: FieldName,
) -> Result<Vec<f64>, MetricsError> {
    if run.layout != reference.layout {
        return Err(MetricsError::LayoutMismatch(format!(
            "run layout {:?} vs reference {:?}",
            run.layout, reference.layout
        )));
    }
    run.slice_means
        .iter()
        .zip(&reference.slice_means)
        .map(|(a, r)| rel_max_norm(a.field(field), r.field(field)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_arrays_have_zero_error() {
        let r = [1.0, -2.0, 3.5];
        assert_eq!(rel_max_norm(&r, &r).unwrap(), 0.0);
        assert_eq!(rel_l2_norm(&r, &r).unwrap(), 0.0);
    }

    #[test]
    fn constant_shift() {
        let r = [1.0, -4.0, 2.0, 0.5];
        let a: Vec<f64> = r.iter().map(|v| v + 0.25).collect();
        assert_eq!(rel_max_norm(&a, &r).unwrap(), 0.25 / 4.0);
    }

    #[test]
    fn single_element_l2() {
        assert_eq!(rel_l2_norm(&[3.0], &[2.0]).unwrap(), 0.5);
        assert_eq!(rel_l2_norm(&[-1.0], &[-4.0]).unwrap(), 0.75);
    }

    #[test]
    fn zero_reference_is_undefined() {
        assert_eq!(rel_max_norm(&[1.0, 2.0], &[0.0, 0.0]), Err(MetricsError::ZeroReference));
        assert_eq!(rel_l2_norm(&[1.0], &[0.0]), Err(MetricsError::ZeroReference));
        assert!(matches!(rel_l2_norm(&[1.0], &[1.0, 2.0]), Err(MetricsError::LengthMismatch(1, 2))));
    }

    #[test]
    fn profitable_limits_for_twelve_slices() {
        let s = speedup_estimate(1, 12, 2.0);
        assert!((s - 12.0 / 13.0).abs() < 1e-15);
        assert!(s < 1.0);
        let s = speedup_estimate(6, 12, 8.0);
        assert!((s - 8.0 / 11.0).abs() < 1e-15);
        assert!((speedup_bound(6, 12, 8.0) - 8.0 / 7.0).abs() < 1e-15);
        assert_eq!(speedup_bound(1, 12, 2.0), 1.0);
    }

    #[test]
    fn estimate_matches_runtime_ratio_chain() {
        let model = SpeedupModel::new(12, 8.0);
        for k in 1..=12 {
            let ratio = model.serial_runtime() / model.parareal_runtime(k);
            assert!((ratio - model.estimate(k)).abs() < 1e-14);
        }
    }

    #[test]
    fn estimate_tends_to_slices_over_k() {
        let s = speedup_estimate(3, 12, 1e12);
        assert!((s - 4.0).abs() < 1e-9);
    }

    #[test]
    fn profitable_iteration_limits() {
        assert_eq!(max_profitable_iterations(2.0, 12), 0);
        assert_eq!(max_profitable_iterations(4.0, 12), 2);
        assert_eq!(max_profitable_iterations(8.0, 12), 6);
        assert_eq!(max_profitable_iterations(1.0, 12), 0);
        assert_eq!(max_profitable_iterations(64.0, 12), 11);
        assert_eq!(max_profitable_iterations(64.0, 1), 0);
    }

    #[test]
    fn series_layout_mismatch() {
        let a = AveragedRun {
            spd: 36,
            layout: SliceLayout::new(0, 2400, 2).unwrap(),
            slice_means: vec![],
        };
        let b = AveragedRun {
            layout: SliceLayout::new(0, 2400, 3).unwrap(),
            ..a.clone()
        };
        assert!(matches!(
            time_averaged_error_series(&a, &b, FieldName::T),
            Err(MetricsError::LayoutMismatch(_))
        ));
    }
}
