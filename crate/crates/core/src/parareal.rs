//! Parareal driver: coarse initialization sweep, parallel fine phase and
//! sequential correction sweep.
//!
//! Index conventions follow the usual presentation: `U[k][n]` is the
//! iterate at boundary `t_n` after iteration `k`, `F[k][n + 1]` the fine
//! solution of slice `n` started from `U[k - 1][n]`, and `G[k][n + 1]` the
//! coarse solution started from `U[k][n]`. Iteration `k` only revisits
//! slices `n >= k - 1`; everything before is already fine-exact.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use thiserror::Error;

use crate::propagator::{PropagateError, Propagator, Role, SliceLayout, SliceTask};
use crate::state::{state_add, state_diff, ModelState, StateError};

/// The two state operations the correction step is allowed to use.
pub trait SliceState: Clone + Send + Sync {
    /// `fine - coarse`.
    fn correction(fine: &Self, coarse: &Self) -> Result<Self, StateError>;
    /// `coarse + delta`.
    fn apply(coarse: &Self, delta: &Self) -> Result<Self, StateError>;
    fn same_bits(&self, other: &Self) -> bool;
}

impl SliceState for ModelState {
    fn correction(fine: &Self, coarse: &Self) -> Result<Self, StateError> {
        state_diff(fine, coarse)
    }

    fn apply(coarse: &Self, delta: &Self) -> Result<Self, StateError> {
        state_add(coarse, delta)
    }

    fn same_bits(&self, other: &Self) -> bool {
        self.bit_eq(other)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BlowUpPolicy {
    Abort,
    /// A failed fine slice contributes no correction: the coarse value is
    /// used unchanged and the slice is flagged.
    #[default]
    ContinueUncorrected,
}

impl std::str::FromStr for BlowUpPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "abort" => Ok(BlowUpPolicy::Abort),
            "continue_uncorrected" | "continue" => Ok(BlowUpPolicy::ContinueUncorrected),
            other => Err(format!(
                "unknown blow-up policy '{other}' (expected abort or continue_uncorrected)"
            )),
        }
    }
}

impl std::fmt::Display for BlowUpPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BlowUpPolicy::Abort => "abort",
            BlowUpPolicy::ContinueUncorrected => "continue_uncorrected",
        })
    }
}

pub const DEFAULT_EPSILON: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq)]
pub struct PararealConfig {
    pub layout: SliceLayout,
    /// `K <= N_t`.
    pub max_iterations: usize,
    pub epsilon: f64,
    pub on_blow_up: BlowUpPolicy,
    pub max_parallel_fine: usize,
    /// Permit `G == F` resolutions. Only meaningful for tests.
    pub allow_equal_resolution: bool,
}

impl PararealConfig {
    pub fn new(layout: SliceLayout) -> Self {
        Self {
            layout,
            max_iterations: layout.n_slices(),
            epsilon: DEFAULT_EPSILON,
            on_blow_up: BlowUpPolicy::default(),
            max_parallel_fine: layout.n_slices(),
            allow_equal_resolution: false,
        }
    }

    pub fn validate(&self, coarse_spd: u32, fine_spd: u32) -> Result<(), PararealError> {
        let invalid = |m: String| Err(PararealError::InvalidConfig(m));
        if fine_spd < coarse_spd || (fine_spd == coarse_spd && !self.allow_equal_resolution) {
            return invalid(format!(
                "fine propagator ({fine_spd} spd) must be strictly finer than coarse ({coarse_spd} spd)"
            ));
        }
        if self.max_iterations > self.layout.n_slices() {
            return invalid(format!(
                "max_iterations = {} exceeds the {} slices",
                self.max_iterations,
                self.layout.n_slices()
            ));
        }
        if self.max_parallel_fine == 0 {
            return invalid("max_parallel_fine must be at least 1".into());
        }
        if !(self.epsilon > 0.0) {
            return invalid(format!("epsilon must be positive, got {}", self.epsilon));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum PararealError {
    #[error("invalid Parareal configuration: {0}")]
    InvalidConfig(String),
    #[error("state algebra failed: {0}")]
    Algebra(#[from] StateError),
    #[error(transparent)]
    Propagation(PropagateError),
    #[error("iteration observer failed: {0}")]
    Observer(String),
}

/// What happened on one slice during one iteration.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SliceStatus {
    /// Fine run failed; the slice was continued with its coarse value.
    pub fine_failure: Option<String>,
    /// Both correction inputs were unchanged, so the fine value was taken
    /// verbatim instead of `G + (F - G)`.
    pub fine_exact: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IterationTimings {
    /// Initialization sweep for `k = 0`, correction sweep otherwise.
    pub coarse_sweep: Duration,
    pub fine_phase: Duration,
}

/// Everything produced by iteration `k`.
#[derive(Debug, Clone)]
pub struct IterationRecord<S> {
    pub k: usize,
    /// `U[k][0..=N]`.
    pub iterate: Vec<Arc<S>>,
    /// `G[k][n]`, index 0 unused.
    pub coarse: Vec<Option<Arc<S>>>,
    /// `F[k][n]`, index 0 unused; only slices revisited this iteration.
    pub fine: Vec<Option<Arc<S>>>,
    /// `F[k][n] - G[k - 1][n]` where a fine value exists.
    pub delta: Vec<Option<Arc<S>>>,
    /// Per slice (length `N`).
    pub slices: Vec<SliceStatus>,
    pub timings: IterationTimings,
}

impl<S> IterationRecord<S> {
    pub fn final_state(&self) -> &S {
        self.iterate.last().expect("iterate is never empty")
    }

    pub fn failed_slices(&self) -> Vec<usize> {
        self.slices
            .iter()
            .enumerate()
            .filter(|(_, s)| s.fine_failure.is_some())
            .map(|(n, _)| n)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    /// The observer reported convergence after iteration `k`.
    Converged { k: usize },
    MaxIterations,
    /// A blow-up that could not be stepped over.
    Aborted {
        k: usize,
        slice: usize,
        role: Role,
        detail: String,
    },
}

#[derive(Debug, Clone)]
pub struct PararealResult<S> {
    /// Records for `k = 0 ..= last completed iteration`.
    pub records: Vec<IterationRecord<S>>,
    pub termination: Termination,
}

impl<S> PararealResult<S> {
    pub fn last(&self) -> &IterationRecord<S> {
        self.records.last().expect("records contain at least the initialization")
    }

    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn aborted(&self) -> bool {
        matches!(self.termination, Termination::Aborted { .. })
    }
}

/// Verdict of an [`IterationObserver`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Converged,
}

/// Hook called after each completed iteration (including `k = 0`).
pub trait IterationObserver<S> {
    fn observe(&mut self, record: &IterationRecord<S>) -> Result<Control, String>;
}

/// Observer that never stops the run.
pub struct RunToEnd;

impl<S> IterationObserver<S> for RunToEnd {
    fn observe(&mut self, _record: &IterationRecord<S>) -> Result<Control, String> {
        Ok(Control::Continue)
    }
}

impl<S, F> IterationObserver<S> for F
where
    F: FnMut(&IterationRecord<S>) -> Result<Control, String>,
{
    fn observe(&mut self, record: &IterationRecord<S>) -> Result<Control, String> {
        self(record)
    }
}

enum Sweep<S> {
    Done(IterationRecord<S>),
    Aborted(Termination),
}

struct Driver<'a, S> {
    cfg: &'a PararealConfig,
    coarse: &'a dyn Propagator<S>,
    fine: &'a dyn Propagator<S>,
    pool: rayon::ThreadPool,
}

impl<S: SliceState> Driver<'_, S> {
    fn n(&self) -> usize {
        self.cfg.layout.n_slices()
    }

    fn task(&self, n: usize, k: usize, role: Role) -> SliceTask {
        SliceTask::new(&self.cfg.layout, n, k as i32, role)
    }

    fn coarse_init_sweep(&self, u0: &S) -> Result<Sweep<S>, PararealError> {
        let n_slices = self.n();
        let start = Instant::now();
        let mut iterate = Vec::with_capacity(n_slices + 1);
        let mut coarse = vec![None; n_slices + 1];
        iterate.push(Arc::new(u0.clone()));
        for n in 0..n_slices {
            let g = match self.coarse.propagate(&iterate[n], &self.task(n, 0, Role::Coarse)) {
                Ok(g) => Arc::new(g),
                Err(e) if e.is_slice_failure() => {
                    return Ok(Sweep::Aborted(Termination::Aborted {
                        k: 0,
                        slice: n,
                        role: Role::Coarse,
                        detail: e.to_string(),
                    }))
                }
                Err(e) => return Err(PararealError::Propagation(e)),
            };
            coarse[n + 1] = Some(g.clone());
            iterate.push(g);
        }
        Ok(Sweep::Done(IterationRecord {
            k: 0,
            iterate,
            coarse,
            fine: vec![None; n_slices + 1],
            delta: vec![None; n_slices + 1],
            slices: vec![SliceStatus::default(); n_slices],
            timings: IterationTimings {
                coarse_sweep: start.elapsed(),
                fine_phase: Duration::ZERO,
            },
        }))
    }

    /// Fine solutions `F[k][n + 1]` for `n = k - 1 .. N - 1`, from `U[k - 1]`.
    fn fine_parallel_phase(
        &self,
        prev: &IterationRecord<S>,
        k: usize,
    ) -> Vec<(usize, Result<S, PropagateError>)> {
        let slices: Vec<usize> = (k - 1..self.n()).collect();
        self.pool.install(|| {
            slices
                .par_iter()
                .map(|&n| {
                    let task = self.task(n, k, Role::Fine);
                    (n, self.fine.propagate(&prev.iterate[n], &task))
                })
                .collect()
        })
    }

    fn iteration(&self, prev: &IterationRecord<S>, k: usize) -> Result<Sweep<S>, PararealError> {
        let n_slices = self.n();
        let mut fine = vec![None; n_slices + 1];
        let mut delta = vec![None; n_slices + 1];
        let mut slices = vec![SliceStatus::default(); n_slices];

        let fine_start = Instant::now();
        for (n, outcome) in self.fine_parallel_phase(prev, k) {
            match outcome {
                Ok(f) => {
                    let g_prev = prev.coarse[n + 1]
                        .as_ref()
                        .expect("coarse value retained for every revisited slice");
                    delta[n + 1] = Some(Arc::new(S::correction(&f, g_prev)?));
                    fine[n + 1] = Some(Arc::new(f));
                }
                Err(e) if e.is_slice_failure() => {
                    if self.cfg.on_blow_up == BlowUpPolicy::Abort {
                        return Ok(Sweep::Aborted(Termination::Aborted {
                            k,
                            slice: n,
                            role: Role::Fine,
                            detail: e.to_string(),
                        }));
                    }
                    slices[n].fine_failure = Some(e.to_string());
                }
                Err(e) => return Err(PararealError::Propagation(e)),
            }
        }
        let fine_phase = fine_start.elapsed();

        let sweep_start = Instant::now();
        let mut iterate: Vec<Arc<S>> = prev.iterate[..k].to_vec();
        let mut coarse: Vec<Option<Arc<S>>> = prev.coarse[..k].to_vec();
        coarse.resize(n_slices + 1, None);
        for n in k - 1..n_slices {
            let input = iterate[n].clone();
            let unchanged = Arc::ptr_eq(&input, &prev.iterate[n]) || input.same_bits(&prev.iterate[n]);
            if unchanged {
                if let Some(f) = &fine[n + 1] {
                    // G(U[k][n]) == G[k - 1][n + 1] exactly, so the update is F.
                    coarse[n + 1] = prev.coarse[n + 1].clone();
                    iterate.push(f.clone());
                    slices[n].fine_exact = true;
                    continue;
                }
            }
            let g = match self.coarse.propagate(&input, &self.task(n, k, Role::Coarse)) {
                Ok(g) => Arc::new(g),
                Err(e) if e.is_slice_failure() => {
                    return Ok(Sweep::Aborted(Termination::Aborted {
                        k,
                        slice: n,
                        role: Role::Coarse,
                        detail: e.to_string(),
                    }))
                }
                Err(e) => return Err(PararealError::Propagation(e)),
            };
            let next = match &delta[n + 1] {
                Some(d) => Arc::new(S::apply(&g, d)?),
                None => g.clone(),
            };
            coarse[n + 1] = Some(g);
            iterate.push(next);
        }

        Ok(Sweep::Done(IterationRecord {
            k,
            iterate,
            coarse,
            fine,
            delta,
            slices,
            timings: IterationTimings {
                coarse_sweep: sweep_start.elapsed(),
                fine_phase,
            },
        }))
    }
}

/// Runs Parareal from `u0` until the observer reports convergence, the
/// iteration cap is reached, or an unrecoverable blow-up occurs.
pub fn run_parareal<S: SliceState>(
    u0: &S,
    cfg: &PararealConfig,
    coarse: &dyn Propagator<S>,
    fine: &dyn Propagator<S>,
    observer: &mut dyn IterationObserver<S>,
) -> Result<PararealResult<S>, PararealError> {
    cfg.validate(coarse.steps_per_day(), fine.steps_per_day())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.max_parallel_fine)
        .build()
        .map_err(|e| PararealError::InvalidConfig(format!("cannot build worker pool: {e}")))?;
    let driver = Driver {
        cfg,
        coarse,
        fine,
        pool,
    };

    let mut records = Vec::with_capacity(cfg.max_iterations + 1);
    let init = match driver.coarse_init_sweep(u0)? {
        Sweep::Done(r) => r,
        Sweep::Aborted(termination) => {
            return Ok(PararealResult {
                records,
                termination,
            })
        }
    };
    let control = observer.observe(&init).map_err(PararealError::Observer)?;
    records.push(init);
    if control == Control::Converged {
        return Ok(PararealResult {
            records,
            termination: Termination::Converged { k: 0 },
        });
    }

    for k in 1..=cfg.max_iterations {
        let record = match driver.iteration(records.last().unwrap(), k)? {
            Sweep::Done(r) => r,
            Sweep::Aborted(termination) => {
                return Ok(PararealResult {
                    records,
                    termination,
                })
            }
        };
        let control = observer.observe(&record).map_err(PararealError::Observer)?;
        records.push(record);
        if control == Control::Converged {
            return Ok(PararealResult {
                records,
                termination: Termination::Converged { k },
            });
        }
    }
    Ok(PararealResult {
        records,
        termination: Termination::MaxIterations,
    })
}

/// Initialization sweep alone: `U[0][n + 1] = G(U[0][n])`.
pub fn coarse_init_sweep<S: SliceState>(
    u0: &S,
    cfg: &PararealConfig,
    coarse: &dyn Propagator<S>,
) -> Result<Vec<S>, PararealError> {
    let result = run_parareal(
        u0,
        &PararealConfig {
            max_iterations: 0,
            allow_equal_resolution: true,
            ..cfg.clone()
        },
        coarse,
        coarse,
        &mut RunToEnd,
    )?;
    match result.termination {
        Termination::Aborted { detail, .. } => Err(PararealError::Propagation(PropagateError::BlowUp {
            slice: 0,
            iteration: 0,
            detail,
        })),
        _ => Ok(result.records[0].iterate.iter().map(|s| (**s).clone()).collect()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Scalar test state with an explicit time stamp.
    #[derive(Debug, Clone, Copy, PartialEq)]
    struct Scalar(f64);

    impl SliceState for Scalar {
        fn correction(fine: &Self, coarse: &Self) -> Result<Self, StateError> {
            Ok(Scalar(fine.0 - coarse.0))
        }

        fn apply(coarse: &Self, delta: &Self) -> Result<Self, StateError> {
            Ok(Scalar(coarse.0 + delta.0))
        }

        fn same_bits(&self, other: &Self) -> bool {
            self.0.to_bits() == other.0.to_bits()
        }
    }

    /// Exact flow of `y' = rate * y` over the slice, optionally failing on one slice.
    struct Decay {
        rate: f64,
        spd: u32,
        fail_on: Option<(usize, i32)>,
    }

    impl Propagator<Scalar> for Decay {
        fn steps_per_day(&self) -> u32 {
            self.spd
        }

        fn propagate(&self, s: &Scalar, task: &SliceTask) -> Result<Scalar, PropagateError> {
            if self.fail_on.is_some_and(|(n, k)| n == task.slice && (k < 0 || k == task.iteration)) {
                return Err(PropagateError::BlowUp {
                    slice: task.slice,
                    iteration: task.iteration,
                    detail: "injected".into(),
                });
            }
            let dt = (task.t_end - task.t_start) as f64;
            Ok(Scalar(s.0 * (self.rate * dt).exp()))
        }
    }

    fn layout(n: usize) -> SliceLayout {
        SliceLayout::new(0, 1, n).unwrap()
    }

    fn decay_pair() -> (Decay, Decay) {
        (
            Decay { rate: -0.8, spd: 1, fail_on: None },
            Decay { rate: -1.0, spd: 2, fail_on: None },
        )
    }

    /// Direct recurrence with the same update order as the driver.
    fn recurrence(u0: f64, n: usize, k_max: usize, g: f64, f: f64) -> Vec<Vec<f64>> {
        let mut u = vec![vec![u0; n + 1]];
        let mut gk = vec![0.0; n + 1];
        for i in 0..n {
            gk[i + 1] = u[0][i] * g;
            u[0][i + 1] = gk[i + 1];
        }
        for k in 1..=k_max {
            let prev = u[k - 1].clone();
            let gprev = gk.clone();
            let mut next = prev.clone();
            for i in k - 1..n {
                let fval = prev[i] * f;
                let d = fval - gprev[i + 1];
                if next[i].to_bits() == prev[i].to_bits() {
                    next[i + 1] = fval;
                } else {
                    let gval = next[i] * g;
                    gk[i + 1] = gval;
                    next[i + 1] = gval + d;
                }
            }
            u.push(next);
        }
        u
    }

    #[test]
    fn scalar_iterates_match_recurrence() {
        let (g, f) = decay_pair();
        let cfg = PararealConfig::new(layout(6));
        let res = run_parareal(&Scalar(1.3), &cfg, &g, &f, &mut RunToEnd).unwrap();
        let oracle = recurrence(1.3, 6, 6, (-0.8f64).exp(), (-1.0f64).exp());
        assert_eq!(res.records.len(), 7);
        for (rec, expect) in res.records.iter().zip(&oracle) {
            let got: Vec<f64> = rec.iterate.iter().map(|s| s.0).collect();
            assert_eq!(&got, expect, "k = {}", rec.k);
        }
    }

    #[test]
    fn textbook_update_on_later_slices() {
        // k = 1, slice 1: U = G(U1[1]) + F(U0[1]) - G(U0[1]) where U1[1] = F(u0).
        let (g, f) = decay_pair();
        let cfg = PararealConfig {
            max_iterations: 1,
            ..PararealConfig::new(layout(3))
        };
        let res = run_parareal(&Scalar(2.0), &cfg, &g, &f, &mut RunToEnd).unwrap();
        let (eg, ef) = ((-0.8f64).exp(), (-1.0f64).exp());
        let u0 = [2.0, 2.0 * eg, 2.0 * eg * eg];
        let u1_1 = 2.0 * ef;
        let expect = u1_1 * eg + (u0[1] * ef - u0[1] * eg);
        assert_eq!(res.records[1].iterate[2].0, expect);
        assert!(res.records[1].slices[0].fine_exact);
        assert!(!res.records[1].slices[1].fine_exact);
    }

    #[test]
    fn exactness_propagates() {
        let (g, f) = decay_pair();
        let n = 8;
        let cfg = PararealConfig::new(layout(n));
        let res = run_parareal(&Scalar(1.0), &cfg, &g, &f, &mut RunToEnd).unwrap();
        let mut serial = vec![Scalar(1.0)];
        for i in 0..n {
            let task = SliceTask::new(&cfg.layout, i, -1, Role::Serial);
            serial.push(f.propagate(&serial[i], &task).unwrap());
        }
        for rec in &res.records {
            for i in 0..=rec.k.min(n) {
                assert_eq!(rec.iterate[i].0.to_bits(), serial[i].0.to_bits(), "k={} n={i}", rec.k);
            }
        }
        assert_eq!(res.termination, Termination::MaxIterations);
    }

    #[test]
    fn last_iteration_revisits_one_slice() {
        let (g, f) = decay_pair();
        let cfg = PararealConfig::new(layout(5));
        let res = run_parareal(&Scalar(1.0), &cfg, &g, &f, &mut RunToEnd).unwrap();
        let last = res.last();
        assert_eq!(last.k, 5);
        assert_eq!(last.fine.iter().filter(|x| x.is_some()).count(), 1);
        assert!(last.fine[5].is_some());
    }

    #[test]
    fn single_slice_layout() {
        let (g, f) = decay_pair();
        let cfg = PararealConfig::new(layout(1));
        let init = coarse_init_sweep(&Scalar(3.0), &cfg, &g).unwrap();
        assert_eq!(init.len(), 2);
        assert_eq!(init[1].0, 3.0 * (-0.8f64).exp());
        let res = run_parareal(&Scalar(3.0), &cfg, &g, &f, &mut RunToEnd).unwrap();
        assert_eq!(res.last().final_state().0, 3.0 * (-1.0f64).exp());
    }

    #[test]
    fn equal_propagators_converge_in_one_iteration() {
        let f = Decay { rate: -1.0, spd: 2, fail_on: None };
        let f2 = Decay { rate: -1.0, spd: 2, fail_on: None };
        let cfg = PararealConfig {
            allow_equal_resolution: true,
            ..PararealConfig::new(layout(4))
        };
        let res = run_parareal(&Scalar(1.0), &cfg, &f, &f2, &mut RunToEnd).unwrap();
        let init: Vec<u64> = res.records[0].iterate.iter().map(|s| s.0.to_bits()).collect();
        let one: Vec<u64> = res.records[1].iterate.iter().map(|s| s.0.to_bits()).collect();
        assert_eq!(init, one);
    }

    #[test]
    fn zero_correction_gives_coarse_sweep() {
        let g = Decay { rate: -0.5, spd: 1, fail_on: None };
        let g2 = Decay { rate: -0.5, spd: 2, fail_on: None };
        let cfg = PararealConfig::new(layout(4));
        let res = run_parareal(&Scalar(1.0), &cfg, &g, &g2, &mut RunToEnd).unwrap();
        for rec in &res.records[1..] {
            for d in rec.delta.iter().flatten() {
                assert_eq!(d.0, 0.0);
            }
            for (a, b) in rec.iterate.iter().zip(&res.records[0].iterate) {
                assert_eq!(a.0, b.0);
            }
        }
    }

    #[test]
    fn fine_failure_continues_uncorrected() {
        let g = Decay { rate: -0.8, spd: 1, fail_on: None };
        let f = Decay { rate: -1.0, spd: 2, fail_on: Some((3, 1)) };
        let cfg = PararealConfig {
            max_iterations: 1,
            ..PararealConfig::new(layout(6))
        };
        let res = run_parareal(&Scalar(1.0), &cfg, &g, &f, &mut RunToEnd).unwrap();
        let rec = &res.records[1];
        assert_eq!(rec.failed_slices(), vec![3]);
        assert!(rec.delta[4].is_none());
        let g_val = rec.coarse[4].as_ref().unwrap().0;
        assert_eq!(rec.iterate[4].0, g_val);
        assert_eq!(res.termination, Termination::MaxIterations);
    }

    #[test]
    fn fine_failure_aborts_when_asked() {
        let g = Decay { rate: -0.8, spd: 1, fail_on: None };
        let f = Decay { rate: -1.0, spd: 2, fail_on: Some((2, -1)) };
        let cfg = PararealConfig {
            on_blow_up: BlowUpPolicy::Abort,
            ..PararealConfig::new(layout(4))
        };
        let res = run_parareal(&Scalar(1.0), &cfg, &g, &f, &mut RunToEnd).unwrap();
        assert!(matches!(
            res.termination,
            Termination::Aborted { k: 1, slice: 2, role: Role::Fine, .. }
        ));
        assert_eq!(res.records.len(), 1);
    }

    #[test]
    fn coarse_failure_in_init_aborts() {
        let g = Decay { rate: -0.8, spd: 1, fail_on: Some((1, 0)) };
        let (_, f) = decay_pair();
        let cfg = PararealConfig::new(layout(4));
        let res = run_parareal(&Scalar(1.0), &cfg, &g, &f, &mut RunToEnd).unwrap();
        assert!(matches!(res.termination, Termination::Aborted { k: 0, slice: 1, .. }));
        assert!(res.records.is_empty());
    }

    #[test]
    fn observer_can_stop_early() {
        let (g, f) = decay_pair();
        let cfg = PararealConfig::new(layout(6));
        let mut stop_at_two = |r: &IterationRecord<Scalar>| {
            Ok(if r.k == 2 { Control::Converged } else { Control::Continue })
        };
        let res = run_parareal(&Scalar(1.0), &cfg, &g, &f, &mut stop_at_two).unwrap();
        assert_eq!(res.termination, Termination::Converged { k: 2 });
        assert_eq!(res.iterations(), 2);
    }

    #[test]
    fn config_validation() {
        let (g, f) = decay_pair();
        let mut cfg = PararealConfig::new(layout(4));
        cfg.max_iterations = 5;
        assert!(run_parareal(&Scalar(1.0), &cfg, &g, &f, &mut RunToEnd).is_err());
        let cfg = PararealConfig::new(layout(4));
        assert!(run_parareal(&Scalar(1.0), &cfg, &f, &g, &mut RunToEnd).is_err());
        let cfg = PararealConfig {
            max_parallel_fine: 0,
            ..PararealConfig::new(layout(4))
        };
        assert!(run_parareal(&Scalar(1.0), &cfg, &g, &f, &mut RunToEnd).is_err());
    }

    #[test]
    fn scheduling_does_not_change_bits() {
        let (g, f) = decay_pair();
        let serial = PararealConfig {
            max_parallel_fine: 1,
            ..PararealConfig::new(layout(7))
        };
        let wide = PararealConfig {
            max_parallel_fine: 7,
            ..PararealConfig::new(layout(7))
        };
        let a = run_parareal(&Scalar(0.7), &serial, &g, &f, &mut RunToEnd).unwrap();
        let b = run_parareal(&Scalar(0.7), &wide, &g, &f, &mut RunToEnd).unwrap();
        for (ra, rb) in a.records.iter().zip(&b.records) {
            for (x, y) in ra.iterate.iter().zip(&rb.iterate) {
                assert_eq!(x.0.to_bits(), y.0.to_bits());
            }
        }
    }
}
