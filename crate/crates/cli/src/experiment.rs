//! Experiment runner: serial references, Parareal against them, and the
//! restart-consistency and time-averaged error studies.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use parareal_core::metrics::{
    averaged_serial_run, max_profitable_iterations, rel_l2_norm, rel_max_norm, speedup_bound, speedup_estimate,
    time_averaged_error_series,
};
use parareal_core::parareal::{Control, IterationRecord};
use parareal_core::propagator::checkpoint::{read_state, write_state};
use parareal_core::propagator::{serial_trajectory, ExecutionMode, RunContext};
use parareal_core::{
    run_parareal, FieldName, ModelPropagator, ModelState, PararealConfig, PropagatorSpec, RestartPolicy, SliceLayout,
    Termination,
};

use crate::config::{Execution, ExperimentConfig};
use crate::report::{BlowUpEvent, FieldNorms, FineRun, IterationSummary, RunReport, SpeedupRow};
use crate::spinup::initial_state;

/// Where a run puts its files and which binary serves external propagators.
#[derive(Debug, Clone)]
pub struct RunEnv {
    pub runs_root: PathBuf,
    /// Binary providing the `single-shot` subcommand.
    pub engine: Option<PathBuf>,
    /// Write every iterate to `runs/<run>/k<k>/slice<n>/iterate.prcp`.
    pub checkpoint_iterates: bool,
}

impl RunEnv {
    pub fn new(runs_root: impl Into<PathBuf>) -> Self {
        Self {
            runs_root: runs_root.into(),
            engine: None,
            checkpoint_iterates: true,
        }
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.runs_root.join("cache")
    }
}

fn internal(cfg: &ExperimentConfig, spd: u32) -> anyhow::Result<ModelPropagator> {
    let spec = PropagatorSpec::new(spd, ExecutionMode::Internal, cfg.restart_policy)?;
    Ok(ModelPropagator::internal(spec, cfg.params, cfg.grid))
}

/// Propagator as configured: internal, or a subprocess per slice.
fn configured(
    cfg: &ExperimentConfig,
    env: &RunEnv,
    run_id: &str,
    spd: u32,
    fine: bool,
    config_path: &Path,
) -> anyhow::Result<ModelPropagator> {
    let Execution::External {
        coarse_command,
        fine_command,
        workdir_template,
        timeout,
    } = &cfg.execution
    else {
        return internal(cfg, spd);
    };
    let explicit = if fine { fine_command } else { coarse_command };
    let command = match explicit {
        Some(c) => c.clone(),
        None => {
            let engine = env
                .engine
                .clone()
                .context("external execution needs the engine binary for single-shot runs")?;
            vec![
                engine.display().to_string(),
                "single-shot".into(),
                "--config".into(),
                config_path.display().to_string(),
            ]
        }
    };
    let spec = PropagatorSpec::new(
        spd,
        ExecutionMode::External {
            command,
            workdir_template: workdir_template.clone(),
        },
        cfg.restart_policy,
    )?;
    let mut ctx = RunContext::new(env.runs_root.clone(), run_id);
    ctx.timeout = *timeout;
    Ok(ModelPropagator::new(spec, cfg.params, cfg.grid, ctx))
}

/// Restarted serial fine run over the configured layout, as boundary states,
/// cached under the reference hash.
pub fn serial_reference(
    cfg: &ExperimentConfig,
    u0: &ModelState,
    spd: u32,
    env: &RunEnv,
) -> anyhow::Result<Vec<ModelState>> {
    let dir = env
        .cache_dir()
        .join(format!("ref-{}-spd{spd}", &cfg.reference_hash()[..16]));
    let n = cfg.layout.n_slices();
    let path = |i: usize| dir.join(format!("boundary{i}.prcp"));
    if (0..=n).all(|i| path(i).exists()) {
        let cached: Result<Vec<ModelState>, _> = (0..=n).map(|i| read_state(&path(i), cfg.grid).map(|r| r.0)).collect();
        if let Ok(states) = cached {
            if states[0].bit_eq(u0) {
                return Ok(states);
            }
        }
    }
    let states = serial_trajectory(&internal(cfg, spd)?, u0, &cfg.layout)?;
    for (i, s) in states.iter().enumerate() {
        write_state(&path(i), s, None, i as i32, -1)?;
    }
    Ok(states)
}

fn norms(a: &ModelState, r: &ModelState, fields: &[FieldName]) -> Vec<FieldNorms> {
    fields
        .iter()
        .map(|&f| FieldNorms {
            field: f.as_str().to_string(),
            e_inf: rel_max_norm(a.field(f), r.field(f)).ok(),
            e_2: rel_l2_norm(a.field(f), r.field(f)).ok(),
        })
        .collect()
}

pub fn speedup_table(n_slices: usize, m: f64) -> Vec<SpeedupRow> {
    (0..=n_slices)
        .map(|k| SpeedupRow {
            k,
            estimate: speedup_estimate(k, n_slices, m),
            bound: speedup_bound(k, n_slices, m),
        })
        .collect()
}

/// First `k >= 1` whose `E_2` is at most `epsilon`; `k = 0` is coarse only.
pub fn first_crossing(iterations: &[IterationSummary], field: &str, epsilon: f64) -> Option<usize> {
    iterations
        .iter()
        .filter(|it| it.k >= 1)
        .find(|it| {
            it.errors
                .iter()
                .any(|e| e.field == field && e.e_2.is_some_and(|v| v <= epsilon))
        })
        .map(|it| it.k)
}

fn crossing_flags(run: &FineRun) -> Vec<String> {
    let Some(u) = run.first_crossing.get("U") else {
        return Vec::new();
    };
    let as_rank = |k: &Option<usize>| k.unwrap_or(usize::MAX);
    ["T", "S"]
        .iter()
        .filter_map(|f| {
            let k = run.first_crossing.get(*f)?;
            (as_rank(k) > as_rank(u)).then(|| {
                format!(
                    "anomaly: {f} reaches epsilon after U ({} > {})",
                    k.map_or("never".into(), |k| k.to_string()),
                    u.map_or("never".into(), |k| k.to_string())
                )
            })
        })
        .collect()
}

/// Flags where the longer-slice report crosses epsilon for U earlier than
/// the shorter-slice one at the same fine resolution.
pub fn compare_slice_lengths(short: &RunReport, long: &RunReport) -> Vec<String> {
    let mut flags = Vec::new();
    for a in &short.runs {
        let Some(b) = long.runs.iter().find(|b| b.fine_spd == a.fine_spd) else {
            continue;
        };
        let ka = a.first_crossing.get("U").copied().flatten().unwrap_or(usize::MAX);
        let kb = b.first_crossing.get("U").copied().flatten().unwrap_or(usize::MAX);
        if kb < ka {
            flags.push(format!(
                "anomaly: N_F = {}: U crosses epsilon at k = {kb} with dT = {} s but k = {ka} with dT = {} s",
                a.fine_spd, long.slice_length, short.slice_length
            ));
        }
    }
    flags
}

fn write_iterates(env: &RunEnv, run_id: &str, record: &IterationRecord<ModelState>) -> Result<(), String> {
    for (n, state) in record.iterate.iter().enumerate() {
        let path = env
            .runs_root
            .join(run_id)
            .join(format!("k{}", record.k))
            .join(format!("slice{n}"))
            .join("iterate.prcp");
        write_state(&path, state, None, n as i32, record.k as i32).map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn run_one(
    cfg: &ExperimentConfig,
    env: &RunEnv,
    u0: &ModelState,
    fine_spd: u32,
    config_path: &Path,
) -> anyhow::Result<FineRun> {
    let run_id = format!("{}-nf{fine_spd}", cfg.run_id);
    let reference = serial_reference(cfg, u0, fine_spd, env)?;
    let n = cfg.layout.n_slices();
    let coarse = configured(cfg, env, &run_id, cfg.coarse_spd, false, config_path)?;
    let fine = configured(cfg, env, &run_id, fine_spd, true, config_path)?;
    let mut pcfg = PararealConfig::new(cfg.layout);
    pcfg.max_iterations = cfg.max_iterations;
    pcfg.epsilon = cfg.epsilon;
    pcfg.on_blow_up = cfg.on_blow_up;
    pcfg.max_parallel_fine = cfg.max_parallel_fine;

    let mut iterations = Vec::new();
    let mut blow_ups = Vec::new();
    let mut flags = Vec::new();
    let mut observer = |record: &IterationRecord<ModelState>| -> Result<Control, String> {
        let k = record.k;
        let exact_prefix = (0..=k.min(n)).all(|i| record.iterate[i].bit_eq(&reference[i]));
        if !exact_prefix {
            flags.push(format!("boundaries 0..={k} differ from the reference at k = {k}"));
        }
        for (slice, status) in record.slices.iter().enumerate() {
            if let Some(detail) = &status.fine_failure {
                blow_ups.push(BlowUpEvent {
                    k,
                    slice,
                    role: "fine".into(),
                    action: "continued uncorrected".into(),
                    detail: detail.clone(),
                });
            }
        }
        iterations.push(IterationSummary {
            k,
            errors: norms(record.final_state(), &reference[n], &cfg.monitored),
            exact_prefix,
            uncorrected_slices: record.failed_slices(),
            wall_coarse_s: record.timings.coarse_sweep.as_secs_f64(),
            wall_fine_s: record.timings.fine_phase.as_secs_f64(),
        });
        if env.checkpoint_iterates {
            write_iterates(env, &run_id, record)?;
        }
        Ok(Control::Continue)
    };
    let result = run_parareal(u0, &pcfg, &coarse, &fine, &mut observer)?;

    let (termination, completed) = match &result.termination {
        Termination::Converged { k } => (format!("converged at k = {k}"), true),
        Termination::MaxIterations => ("max iterations".to_string(), true),
        Termination::Aborted { k, slice, role, detail } => {
            blow_ups.push(BlowUpEvent {
                k: *k,
                slice: *slice,
                role: role.to_string(),
                action: "aborted".into(),
                detail: detail.clone(),
            });
            (format!("aborted at k = {k}, slice {slice} ({role})"), false)
        }
    };
    if let Some(last) = iterations.iter().find(|it| it.k == n) {
        let worst = last
            .errors
            .iter()
            .filter_map(|e| e.e_inf)
            .fold(0.0, f64::max);
        if worst > 1e-12 {
            flags.push(format!("final iterate deviates from the reference by {worst:e}"));
        }
    }

    let m = fine_spd as f64 / cfg.coarse_spd as f64;
    let first: BTreeMap<String, Option<usize>> = cfg
        .monitored
        .iter()
        .map(|f| (f.as_str().to_string(), first_crossing(&iterations, f.as_str(), cfg.epsilon)))
        .collect();
    let mut run = FineRun {
        run_id,
        fine_spd,
        nominal_ratio: m,
        iterations,
        first_crossing: first,
        termination,
        completed,
        speedup: speedup_table(n, m),
        max_profitable_iterations: max_profitable_iterations(m, n),
        blow_ups,
        flags,
    };
    let anomalies = crossing_flags(&run);
    run.flags.extend(anomalies);
    Ok(run)
}

/// Runs every configured fine resolution and assembles the report. Files
/// are written by the caller; the echoed config goes to the run directory
/// because external propagators read it.
pub fn run_experiment(cfg: &ExperimentConfig, env: &RunEnv) -> anyhow::Result<RunReport> {
    let u0 = initial_state(cfg, &env.cache_dir())?;
    let run_dir = env.runs_root.join(&cfg.run_id);
    std::fs::create_dir_all(&run_dir).with_context(|| format!("creating {}", run_dir.display()))?;
    let config_path = std::path::absolute(run_dir.join("config.conf"))?;
    std::fs::write(&config_path, cfg.to_text())?;

    let mut runs = Vec::new();
    for &spd in &cfg.fine_spd {
        runs.push(run_one(cfg, env, &u0, spd, &config_path)?);
    }
    let mut flags = cfg.warnings.iter().map(|w| format!("warning: {w}")).collect::<Vec<_>>();
    let unbounded = runs
        .iter()
        .flat_map(|r| &r.speedup)
        .any(|row| row.bound < row.estimate * (1.0 - 1e-12));
    if unbounded {
        flags.push("speedup estimate exceeds its bound".into());
    }
    Ok(RunReport {
        run_id: cfg.run_id.clone(),
        config_hash: cfg.reference_hash(),
        config: cfg.to_text(),
        slice_length: cfg.layout.slice_length(),
        n_slices: cfg.layout.n_slices(),
        coarse_spd: cfg.coarse_spd,
        epsilon: cfg.epsilon,
        monitored: cfg.monitored.iter().map(|f| f.as_str().to_string()).collect(),
        runs,
        flags,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestartRow {
    pub slices: usize,
    pub cold: f64,
    pub warm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestartStudy {
    pub spd: u32,
    pub horizon: u64,
    pub rows: Vec<RestartRow>,
    pub flags: Vec<String>,
}

impl RestartStudy {
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "restart consistency at {} spd over {} s (max relative deviation over all fields)\n{:>7} {:>14} {:>14}\n",
            self.spd, self.horizon, "slices", "cold", "warm"
        );
        for r in &self.rows {
            out.push_str(&format!("{:>7} {:>14.6e} {:>14.6e}\n", r.slices, r.cold, r.warm));
        }
        for f in &self.flags {
            out.push_str(&format!("flag: {f}\n"));
        }
        out
    }
}

fn max_deviation(a: &ModelState, b: &ModelState) -> f64 {
    FieldName::ALL
        .iter()
        .filter_map(|&f| rel_max_norm(a.field(f), b.field(f)).ok())
        .fold(0.0, f64::max)
}

/// Deviation of split runs from the consecutive run, for both restart
/// policies and every slice count (each must divide `horizon` into whole steps).
pub fn restart_consistency_study(
    cfg: &ExperimentConfig,
    u0: &ModelState,
    spd: u32,
    horizon: u64,
    slice_counts: &[usize],
) -> anyhow::Result<RestartStudy> {
    let consecutive = serial_trajectory(&internal(cfg, spd)?, u0, &SliceLayout::new(u0.time(), horizon, 1)?)?
        .pop()
        .expect("trajectory has an end state");
    let mut rows = Vec::new();
    for &count in slice_counts {
        anyhow::ensure!(count >= 1 && horizon.is_multiple_of(count as u64), "{count} slices do not divide {horizon} s");
        let layout = SliceLayout::new(u0.time(), horizon / count as u64, count)?;
        let mut dev = [0.0; 2];
        for (slot, policy) in [RestartPolicy::Cold, RestartPolicy::Warm].into_iter().enumerate() {
            let spec = PropagatorSpec::new(spd, ExecutionMode::Internal, policy)?;
            let prop = ModelPropagator::internal(spec, cfg.params, cfg.grid);
            let end = serial_trajectory(&prop, u0, &layout)?.pop().expect("end state");
            dev[slot] = max_deviation(&end, &consecutive);
        }
        rows.push(RestartRow {
            slices: count,
            cold: dev[0],
            warm: dev[1],
        });
    }
    let mut flags = Vec::new();
    if rows.iter().any(|r| r.warm != 0.0) {
        flags.push("warm restarts are not bit-identical to the consecutive run".into());
    }
    for w in rows.windows(2) {
        if w[1].slices > w[0].slices && w[1].cold < w[0].cold {
            flags.push(format!(
                "cold deviation decreases from {} to {} slices",
                w[0].slices, w[1].slices
            ));
        }
    }
    Ok(RestartStudy {
        spd,
        horizon,
        rows,
        flags,
    })
}

/// Per-slice errors of slice-averaged fields against a reference resolution.
pub fn time_averaged_study(
    cfg: &ExperimentConfig,
    u0: &ModelState,
    spd: u32,
    reference_spd: u32,
) -> anyhow::Result<Vec<(FieldName, Vec<f64>)>> {
    let run = averaged_serial_run(&internal(cfg, spd)?, u0, &cfg.layout)?;
    let reference = averaged_serial_run(&internal(cfg, reference_spd)?, u0, &cfg.layout)?;
    cfg.monitored
        .iter()
        .map(|&f| Ok((f, time_averaged_error_series(&run, &reference, f)?)))
        .collect()
}
