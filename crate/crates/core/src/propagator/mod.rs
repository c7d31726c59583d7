//! Uniform propagator abstraction over the built-in solver and external
//! simulators, plus the checkpoint protocol that carries state between them.

pub mod checkpoint;
pub mod external;
pub mod spec;

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Duration;

use thiserror::Error;

use crate::solver::{integrate_history, ModelParams, SolverError, StepHistory};
use crate::state::{Grid, ModelState};

pub use checkpoint::{read_checkpoint, read_state, write_checkpoint, write_state, Checkpoint, CheckpointError, ClockRecord};
pub use external::{run_external, ExitReport, ExternalError};
pub use spec::{ExecutionMode, PropagatorSpec, RestartPolicy, SliceLayout, DEFAULT_WORKDIR_TEMPLATE};

pub const INPUT_FILE: &str = "in.prcp";
pub const OUTPUT_FILE: &str = "out.prcp";

#[derive(Debug, Error)]
pub enum PropagateError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("blow-up on slice {slice} (iteration {iteration}): {detail}")]
    BlowUp {
        slice: usize,
        iteration: i32,
        detail: String,
    },
    #[error("slice {slice} (iteration {iteration}) exceeded the {limit:?} wall limit")]
    Timeout {
        slice: usize,
        iteration: i32,
        limit: Duration,
    },
    #[error(transparent)]
    Solver(SolverError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    External(ExternalError),
}

impl PropagateError {
    /// Failures a Parareal driver may step over (divergence, missing output,
    /// time-outs), as opposed to configuration or I/O faults.
    pub fn is_slice_failure(&self) -> bool {
        matches!(self, PropagateError::BlowUp { .. } | PropagateError::Timeout { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Coarse,
    Fine,
    Serial,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Coarse => "coarse",
            Role::Fine => "fine",
            Role::Serial => "serial",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One propagator application: evolve the slice-`slice` initial state from
/// `t_start` to `t_end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SliceTask {
    pub slice: usize,
    /// Parareal iteration, `-1` outside a Parareal run.
    pub iteration: i32,
    pub role: Role,
    pub t_start: u64,
    pub t_end: u64,
}

impl SliceTask {
    pub fn new(layout: &SliceLayout, slice: usize, iteration: i32, role: Role) -> Self {
        let (t_start, t_end) = layout.slice(slice);
        Self {
            slice,
            iteration,
            role,
            t_start,
            t_end,
        }
    }

    fn check(&self, time: u64, dt: u64) -> Result<(), PropagateError> {
        if time != self.t_start {
            return Err(PropagateError::Precondition(format!(
                "state time {time} s does not match slice start {} s",
                self.t_start
            )));
        }
        if self.t_end <= self.t_start {
            return Err(PropagateError::Precondition(format!(
                "empty slice [{}, {}]",
                self.t_start, self.t_end
            )));
        }
        if !(self.t_end - self.t_start).is_multiple_of(dt) {
            return Err(PropagateError::Precondition(format!(
                "slice length {} s is not a multiple of dt = {dt} s",
                self.t_end - self.t_start
            )));
        }
        Ok(())
    }

    fn blow_up(&self, detail: impl Into<String>) -> PropagateError {
        PropagateError::BlowUp {
            slice: self.slice,
            iteration: self.iteration,
            detail: detail.into(),
        }
    }
}

/// Maps a slice-initial state to the slice-final state.
pub trait Propagator<S>: Sync {
    fn steps_per_day(&self) -> u32;

    fn propagate(&self, state: &S, task: &SliceTask) -> Result<S, PropagateError>;
}

/// Where external runs put their work directories.
#[derive(Debug, Clone, PartialEq)]
pub struct RunContext {
    pub runs_root: PathBuf,
    pub run_id: String,
    pub timeout: Option<Duration>,
    pub env: Vec<(String, String)>,
}

impl RunContext {
    pub fn new(runs_root: impl Into<PathBuf>, run_id: impl Into<String>) -> Self {
        Self {
            runs_root: runs_root.into(),
            run_id: run_id.into(),
            timeout: None,
            env: Vec::new(),
        }
    }

    /// `runs/<run_id>` for this context.
    pub fn run_dir(&self) -> PathBuf {
        self.runs_root.join(&self.run_id)
    }
}

/// Expands a work-directory template for one task.
pub fn workdir_for(template: &str, ctx: &RunContext, task: &SliceTask) -> PathBuf {
    let k = if task.iteration < 0 {
        "serial".to_string()
    } else {
        task.iteration.to_string()
    };
    let rel = template
        .replace("{run}", &ctx.run_id)
        .replace("{k}", &k)
        .replace("{n}", &task.slice.to_string())
        .replace("{role}", task.role.as_str());
    ctx.runs_root.join(rel)
}

/// A [`PropagatorSpec`] bound to model parameters, grid and run context.
#[derive(Debug, Clone)]
pub struct ModelPropagator {
    spec: PropagatorSpec,
    params: ModelParams,
    grid: Grid,
    ctx: RunContext,
}

impl ModelPropagator {
    pub fn new(spec: PropagatorSpec, params: ModelParams, grid: Grid, ctx: RunContext) -> Self {
        Self {
            spec,
            params,
            grid,
            ctx,
        }
    }

    /// Internal-mode propagator; no run directory is ever touched.
    pub fn internal(spec: PropagatorSpec, params: ModelParams, grid: Grid) -> Self {
        Self::new(spec, params, grid, RunContext::new(".", "internal"))
    }

    pub fn spec(&self) -> &PropagatorSpec {
        &self.spec
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Propagation honouring the restart policy: the incoming history is
    /// used under `Warm` and dropped under `Cold`. The returned history is
    /// always the one left by the run itself.
    pub fn propagate_history(&self, h: StepHistory, task: &SliceTask) -> Result<StepHistory, PropagateError> {
        task.check(h.current().time(), self.spec.dt())?;
        let h = match self.spec.restart_policy {
            RestartPolicy::Warm => h,
            RestartPolicy::Cold => StepHistory::cold(h.into_current()),
        };
        match &self.spec.mode {
            ExecutionMode::Internal => self.run_internal(h, task),
            ExecutionMode::External {
                command,
                workdir_template,
            } => self.run_subprocess(command, workdir_template, h, task),
        }
    }

    fn run_internal(&self, h: StepHistory, task: &SliceTask) -> Result<StepHistory, PropagateError> {
        integrate_history(h, task.t_end, self.spec.dt(), &self.params).map_err(|e| match e {
            SolverError::BlowUp { .. } => task.blow_up(e.to_string()),
            other => PropagateError::Solver(other),
        })
    }

    fn run_subprocess(
        &self,
        command: &[String],
        template: &str,
        h: StepHistory,
        task: &SliceTask,
    ) -> Result<StepHistory, PropagateError> {
        let workdir = workdir_for(template, &self.ctx, task);
        let workdir = absolute(&workdir);
        let input = workdir.join(INPUT_FILE);
        let output = workdir.join(OUTPUT_FILE);
        let history = (!h.is_empty()).then_some(&h);
        write_state(&input, h.current(), history, task.slice as i32, task.iteration)?;
        if output.exists() {
            std::fs::remove_file(&output).map_err(|source| CheckpointError::Io {
                path: output.clone(),
                source,
            })?;
        }

        let mut argv = command.to_vec();
        argv.extend([
            "--in".to_string(),
            input.display().to_string(),
            "--out".to_string(),
            output.display().to_string(),
            "--t-end".to_string(),
            task.t_end.to_string(),
            "--spd".to_string(),
            self.spec.spd().to_string(),
        ]);
        let report = match run_external(&argv, &workdir, &self.ctx.env, self.ctx.timeout) {
            Ok(report) => report,
            Err(ExternalError::Timeout { limit, .. }) => {
                return Err(PropagateError::Timeout {
                    slice: task.slice,
                    iteration: task.iteration,
                    limit,
                })
            }
            Err(e) => return Err(PropagateError::External(e)),
        };
        if !report.success() {
            return Err(task.blow_up(format!(
                "external run exited with {:?} (log: {})",
                report.code(),
                report.log_path.display()
            )));
        }
        if !output.exists() {
            return Err(task.blow_up(format!("external run produced no {}", output.display())));
        }
        let (state, history, _) = read_state(&output, self.grid).map_err(|e| task.blow_up(e.to_string()))?;
        if state.time() != task.t_end {
            return Err(task.blow_up(format!(
                "external run stopped at t = {} s instead of {} s",
                state.time(),
                task.t_end
            )));
        }
        Ok(history.unwrap_or_else(|| StepHistory::cold(state)))
    }
}

fn absolute(path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        std::env::current_dir().map(|d| d.join(path)).unwrap_or_else(|_| path.to_path_buf())
    }
}

impl Propagator<ModelState> for ModelPropagator {
    fn steps_per_day(&self) -> u32 {
        self.spec.spd()
    }

    /// A bare state carries no history, so this is always a cold start.
    fn propagate(&self, state: &ModelState, task: &SliceTask) -> Result<ModelState, PropagateError> {
        let mut cold = self.clone();
        cold.spec.restart_policy = RestartPolicy::Cold;
        cold.propagate_history(StepHistory::cold(state.clone()), task)
            .map(StepHistory::into_current)
    }
}

/// Serial chain over every slice of `layout`, restarting at each boundary
/// under the propagator's restart policy. Returns the boundary states
/// `u(t_0) .. u(t_N)`.
pub fn serial_trajectory(
    propagator: &ModelPropagator,
    u0: &ModelState,
    layout: &SliceLayout,
) -> Result<Vec<ModelState>, PropagateError> {
    let mut out = Vec::with_capacity(layout.n_slices() + 1);
    out.push(u0.clone());
    let mut h = StepHistory::cold(u0.clone());
    for n in 0..layout.n_slices() {
        let task = SliceTask::new(layout, n, -1, Role::Serial);
        h = propagator.propagate_history(h, &task)?;
        out.push(h.current().clone());
    }
    Ok(out)
}
