use std::fmt;

use super::PropagateError;
use crate::solver::SECONDS_PER_DAY;

/// Whether multistep history survives a propagator restart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RestartPolicy {
    /// History dropped: every call bootstraps Euler -> AB2 -> AB3.
    #[default]
    Cold,
    /// History carried through checkpoints.
    Warm,
}

impl fmt::Display for RestartPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RestartPolicy::Cold => "cold",
            RestartPolicy::Warm => "warm",
        })
    }
}

impl std::str::FromStr for RestartPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "cold" => Ok(RestartPolicy::Cold),
            "warm" => Ok(RestartPolicy::Warm),
            other => Err(format!("unknown restart policy '{other}' (expected cold or warm)")),
        }
    }
}

/// Default per-run work directory, relative to the runs root.
pub const DEFAULT_WORKDIR_TEMPLATE: &str = "{run}/k{k}/slice{n}/{role}";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExecutionMode {
    Internal,
    /// Subprocess invoked as `<command> --in <path> --out <path> --t-end <s> --spd <n>`.
    /// The template may use `{run}`, `{k}`, `{n}` and `{role}`.
    External {
        command: Vec<String>,
        workdir_template: String,
    },
}

/// A coarse or fine time integrator, defined by its steps per day.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PropagatorSpec {
    spd: u32,
    pub mode: ExecutionMode,
    pub restart_policy: RestartPolicy,
}

impl PropagatorSpec {
    pub fn new(spd: u32, mode: ExecutionMode, restart_policy: RestartPolicy) -> Result<Self, PropagateError> {
        if spd == 0 || !SECONDS_PER_DAY.is_multiple_of(spd as u64) {
            return Err(PropagateError::Precondition(format!(
                "{spd} steps per day is not an integer divisor of {SECONDS_PER_DAY}"
            )));
        }
        if let ExecutionMode::External { command, .. } = &mode {
            if command.is_empty() {
                return Err(PropagateError::Precondition("external command is empty".into()));
            }
        }
        Ok(Self {
            spd,
            mode,
            restart_policy,
        })
    }

    pub fn internal(spd: u32) -> Result<Self, PropagateError> {
        Self::new(spd, ExecutionMode::Internal, RestartPolicy::Cold)
    }

    pub fn spd(&self) -> u32 {
        self.spd
    }

    /// Step size in seconds.
    pub fn dt(&self) -> u64 {
        SECONDS_PER_DAY / self.spd as u64
    }

    pub fn is_internal(&self) -> bool {
        matches!(self.mode, ExecutionMode::Internal)
    }
}

/// Partition of `[t0, t0 + n_slices * slice_length]` into equal slices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SliceLayout {
    t0: u64,
    slice_length: u64,
    n_slices: usize,
}

impl SliceLayout {
    pub fn new(t0: u64, slice_length: u64, n_slices: usize) -> Result<Self, PropagateError> {
        if slice_length == 0 {
            return Err(PropagateError::Precondition("slice length must be positive".into()));
        }
        if n_slices == 0 {
            return Err(PropagateError::Precondition("need at least one slice".into()));
        }
        Ok(Self {
            t0,
            slice_length,
            n_slices,
        })
    }

    pub fn t0(&self) -> u64 {
        self.t0
    }

    pub fn slice_length(&self) -> u64 {
        self.slice_length
    }

    pub fn n_slices(&self) -> usize {
        self.n_slices
    }

    /// Horizon length `T = n_slices * slice_length`.
    pub fn total(&self) -> u64 {
        self.slice_length * self.n_slices as u64
    }

    pub fn t_end(&self) -> u64 {
        self.t0 + self.total()
    }

    /// Boundary time `t_n`, `0 <= n <= n_slices`.
    pub fn boundary(&self, n: usize) -> u64 {
        self.t0 + self.slice_length * n as u64
    }

    /// `[t_n, t_{n+1}]` for slice `n`.
    pub fn slice(&self, n: usize) -> (u64, u64) {
        (self.boundary(n), self.boundary(n + 1))
    }

    /// The slice must hold a whole number of the propagator's steps.
    pub fn check_spec(&self, spec: &PropagatorSpec) -> Result<(), PropagateError> {
        if !self.slice_length.is_multiple_of(spec.dt()) {
            return Err(PropagateError::Precondition(format!(
                "slice length {} s is not a multiple of the {} spd step ({} s)",
                self.slice_length,
                spec.spd(),
                spec.dt()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spd_must_divide_a_day() {
        assert!(PropagatorSpec::internal(36).is_ok());
        assert!(PropagatorSpec::internal(1440).is_ok());
        assert!(PropagatorSpec::internal(77).is_err());
        assert!(PropagatorSpec::internal(0).is_err());
        assert_eq!(PropagatorSpec::internal(36).unwrap().dt(), 2400);
    }

    #[test]
    fn layout_arithmetic() {
        let l = SliceLayout::new(0, 2400, 12).unwrap();
        assert_eq!(l.total(), 8 * 3600);
        assert_eq!(l.slice(3), (7200, 9600));
        assert!(l.check_spec(&PropagatorSpec::internal(36).unwrap()).is_ok());
        assert!(l.check_spec(&PropagatorSpec::internal(288).unwrap()).is_ok());
        assert!(l.check_spec(&PropagatorSpec::internal(32).unwrap()).is_err());
        assert!(SliceLayout::new(0, 0, 12).is_err());
        assert!(SliceLayout::new(0, 10, 0).is_err());
    }

    #[test]
    fn empty_external_command_rejected() {
        let mode = ExecutionMode::External {
            command: vec![],
            workdir_template: DEFAULT_WORKDIR_TEMPLATE.into(),
        };
        assert!(PropagatorSpec::new(36, mode, RestartPolicy::Cold).is_err());
    }
}
