//! Third-order Adams-Bashforth stepping with an Euler / AB2 bootstrap.

use super::{rhs, ModelParams, SolverError, Tendency, SECONDS_PER_DAY};
use crate::state::{validate_state, FieldName, FieldSet, ModelState};

/// Maximum number of stored tendencies.
pub const MAX_HISTORY: usize = 3;

/// Adams-Bashforth weights for a step that has `prior` earlier tendencies
/// available, newest first: Euler, AB2, AB3.
pub fn ab_coefficients(prior: usize) -> &'static [f64] {
    const EULER: [f64; 1] = [1.0];
    const AB2: [f64; 2] = [3.0 / 2.0, -1.0 / 2.0];
    const AB3: [f64; 3] = [23.0 / 12.0, -16.0 / 12.0, 5.0 / 12.0];
    match prior {
        0 => &EULER,
        1 => &AB2,
        _ => &AB3,
    }
}

/// `y + dt * sum_j c_j f_j` with tendencies given newest first. The number of
/// tendencies selects the scheme.
pub fn ab_update(y: &[f64], dt: f64, tendencies: &[&[f64]]) -> Vec<f64> {
    assert!(!tendencies.is_empty(), "at least the current tendency is required");
    let coeffs = ab_coefficients(tendencies.len() - 1);
    y.iter()
        .enumerate()
        .map(|(i, &yi)| {
            let incr = coeffs
                .iter()
                .zip(tendencies)
                .fold(0.0, |acc, (c, f)| acc + c * f[i]);
            yi + dt * incr
        })
        .collect()
}

/// Current state plus the most recent right-hand-side evaluations.
///
/// `tendencies[j]` was evaluated at `current.time - (j + 1) * dt`, so the
/// newest entry belongs to the state one step back.
#[derive(Debug, Clone, PartialEq)]
pub struct StepHistory {
    current: ModelState,
    tendencies: Vec<Tendency>,
    dt: Option<u64>,
}

impl StepHistory {
    /// History-free start; the next step is forward Euler.
    pub fn cold(current: ModelState) -> Self {
        Self {
            current,
            tendencies: Vec::new(),
            dt: None,
        }
    }

    /// Rebuilds a history from stored tendencies (newest first). The step
    /// size is unknown until the next step binds it.
    pub fn from_parts(current: ModelState, tendencies: Vec<Tendency>) -> Result<Self, SolverError> {
        if tendencies.len() > MAX_HISTORY {
            return Err(SolverError::HistoryMismatch(format!(
                "{} tendencies stored, at most {MAX_HISTORY} allowed",
                tendencies.len()
            )));
        }
        let n = current.grid().len();
        if let Some(bad) = tendencies.iter().find(|t| t.fields().len() != n) {
            return Err(SolverError::HistoryMismatch(format!(
                "tendency has {} cells, state has {n}",
                bad.fields().len()
            )));
        }
        Ok(Self {
            current,
            tendencies,
            dt: None,
        })
    }

    /// Like [`from_parts`](Self::from_parts) with the spacing pinned.
    pub fn with_spacing(current: ModelState, tendencies: Vec<Tendency>, dt: u64) -> Result<Self, SolverError> {
        let mut h = Self::from_parts(current, tendencies)?;
        h.dt = Some(dt);
        h.check_times()?;
        Ok(h)
    }

    pub fn current(&self) -> &ModelState {
        &self.current
    }

    pub fn into_current(self) -> ModelState {
        self.current
    }

    pub fn tendencies(&self) -> &[Tendency] {
        &self.tendencies
    }

    pub fn len(&self) -> usize {
        self.tendencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tendencies.is_empty()
    }

    pub fn spacing(&self) -> Option<u64> {
        self.dt
    }

    /// Time stamps of the stored tendencies, oldest first.
    pub fn tendency_times(&self) -> Option<Vec<u64>> {
        let dt = self.dt?;
        let t = self.current.time();
        Some(
            (1..=self.tendencies.len() as u64)
                .rev()
                .map(|j| t - j * dt)
                .collect(),
        )
    }

    fn check_times(&self) -> Result<(), SolverError> {
        if let Some(dt) = self.dt {
            let span = dt * self.tendencies.len() as u64;
            if span > self.current.time() {
                return Err(SolverError::HistoryMismatch(format!(
                    "history spans {span} s before t = {}",
                    self.current.time()
                )));
            }
        }
        Ok(())
    }
}

/// One multistep step. The scheme follows the history length: forward Euler
/// with no prior tendency, AB2 with one, AB3 with two or more.
pub fn ab3_step(h: &StepHistory, dt: u64, p: &ModelParams) -> Result<StepHistory, SolverError> {
    step_at(h, dt, p, 0)
}

fn step_at(h: &StepHistory, dt: u64, p: &ModelParams, step: usize) -> Result<StepHistory, SolverError> {
    if dt == 0 {
        return Err(SolverError::StepMismatch("dt must be positive".into()));
    }
    if let Some(spacing) = h.dt {
        if spacing != dt && !h.tendencies.is_empty() {
            return Err(SolverError::HistoryMismatch(format!(
                "history spacing {spacing} s does not match dt = {dt} s"
            )));
        }
    }
    let current = rhs(&h.current, p)?;
    let dt_f = dt as f64;
    let arrays = std::array::from_fn(|k| {
        let field = FieldName::ALL[k];
        let mut fs: Vec<&[f64]> = Vec::with_capacity(MAX_HISTORY);
        fs.push(current.field(field));
        fs.extend(h.tendencies.iter().take(2).map(|t| t.field(field)));
        ab_update(h.current.field(field), dt_f, &fs)
    });
    let time = h.current.time() + dt;
    let next = ModelState::new_unchecked_values(*h.current.grid(), FieldSet::from_arrays(arrays), time)?;
    if let Err(report) = validate_state(&next, p.velocity_cap) {
        return Err(SolverError::BlowUp { step, time, report });
    }
    let mut tendencies = Vec::with_capacity(MAX_HISTORY);
    tendencies.push(current);
    tendencies.extend(h.tendencies.iter().take(MAX_HISTORY - 1).cloned());
    Ok(StepHistory {
        current: next,
        tendencies,
        dt: Some(dt),
    })
}

fn check_steps(start: u64, t_end: u64, dt: u64) -> Result<usize, SolverError> {
    if dt == 0 || !SECONDS_PER_DAY.is_multiple_of(dt) {
        return Err(SolverError::StepMismatch(format!(
            "dt = {dt} s is not an integer divisor of {SECONDS_PER_DAY}"
        )));
    }
    if t_end <= start {
        return Err(SolverError::StepMismatch(format!(
            "t_end = {t_end} s must exceed start time {start} s"
        )));
    }
    let span = t_end - start;
    if !span.is_multiple_of(dt) {
        return Err(SolverError::StepMismatch(format!(
            "interval {span} s is not a multiple of dt = {dt} s"
        )));
    }
    Ok((span / dt) as usize)
}

/// Cold-start integration: history is discarded and the run bootstraps
/// with Euler, then AB2, then AB3.
pub fn integrate(s: &ModelState, t_end: u64, dt: u64, p: &ModelParams) -> Result<ModelState, SolverError> {
    integrate_history(StepHistory::cold(s.clone()), t_end, dt, p).map(StepHistory::into_current)
}

/// Integration carrying the supplied history (warm start).
pub fn integrate_history(h: StepHistory, t_end: u64, dt: u64, p: &ModelParams) -> Result<StepHistory, SolverError> {
    integrate_observed(h, t_end, dt, p, |_| {})
}

/// [`integrate_history`] with a callback on every post-step state.
pub fn integrate_observed(
    mut h: StepHistory,
    t_end: u64,
    dt: u64,
    p: &ModelParams,
    mut observe: impl FnMut(&ModelState),
) -> Result<StepHistory, SolverError> {
    let steps = check_steps(h.current.time(), t_end, dt)?;
    for step in 0..steps {
        h = step_at(&h, dt, p, step)?;
        observe(&h.current);
    }
    Ok(h)
}
