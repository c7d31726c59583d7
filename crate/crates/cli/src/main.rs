use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use parareal_core::metrics::{max_profitable_iterations, SpeedupModel};
use parareal_core::propagator::checkpoint::{read_checkpoint, write_state, CheckpointError};
use parareal_core::propagator::PropagateError;
use parareal_core::solver::{integrate_history, is_day_divisor, SolverError, StepHistory, SECONDS_PER_DAY};
use parareal_core::Grid;
use parareal_harness::config::{parse_config, ConfigError, ExperimentConfig};
use parareal_harness::experiment::{
    compare_slice_lengths, restart_consistency_study, run_experiment, serial_reference, time_averaged_study, RunEnv,
};
use parareal_harness::report::{emit_report, render, Format, RunReport};
use parareal_harness::spinup::initial_state;

const RUNS_DIR_VAR: &str = "PARAREAL_RUNS_DIR";

#[derive(Parser)]
#[command(name = "parareal", version, about = "Parareal experiments on a rotating shallow-water model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment(s) described by one or more config files.
    Run {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        #[arg(long)]
        runs_dir: Option<PathBuf>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Override the config's worker count for the fine phase.
        #[arg(long)]
        max_parallel_fine: Option<usize>,
        /// Skip writing every iterate to the run directory.
        #[arg(long)]
        no_checkpoints: bool,
    },
    /// Restarted serial run at one resolution.
    Serial {
        config: PathBuf,
        #[arg(long)]
        spd: u32,
        /// Also report slice-averaged errors against this resolution.
        #[arg(long)]
        reference_spd: Option<u32>,
        #[arg(long)]
        runs_dir: Option<PathBuf>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Integrate one checkpoint to `--t-end` (the external propagator entry point).
    SingleShot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
        #[arg(long)]
        t_end: u64,
        #[arg(long)]
        spd: u32,
        /// Model parameters and grid spacing; defaults apply otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Speedup model table.
    Speedup {
        #[arg(long)]
        m: f64,
        #[arg(long)]
        nt: usize,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Cold vs warm restart deviation from a consecutive run.
    RestartStudy {
        config: PathBuf,
        /// Defaults to the coarse resolution.
        #[arg(long)]
        spd: Option<u32>,
        /// Total time covered, default the configured horizon (e.g. `2d`).
        #[arg(long)]
        horizon: Option<String>,
        /// Slice counts, default every divisor of n_slices above 1.
        #[arg(long, value_delimiter = ',')]
        slices: Vec<usize>,
        #[arg(long)]
        runs_dir: Option<PathBuf>,
    },
    /// Re-render a saved report.json.
    Emit {
        #[arg(long, value_enum)]
        format: Format,
        #[arg(long, default_value = "report.json")]
        report: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Exit status for a failure, by the innermost recognised cause.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<ConfigError>() {
            return match e {
                ConfigError::Io { .. } => 4,
                _ => 2,
            };
        }
        if let Some(e) = cause.downcast_ref::<CheckpointError>() {
            return match e {
                CheckpointError::Io { .. } => 4,
                _ => 2,
            };
        }
        if let Some(e) = cause.downcast_ref::<PropagateError>() {
            if e.is_slice_failure() {
                return 3;
            }
        }
        if let Some(SolverError::BlowUp { .. }) = cause.downcast_ref::<SolverError>() {
            return 3;
        }
        if cause.is::<std::io::Error>() {
            return 4;
        }
    }
    1
}

fn runs_root(flag: Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    flag.or_else(|| std::env::var_os(RUNS_DIR_VAR).map(PathBuf::from))
        .unwrap_or_else(|| cfg.runs_dir.clone())
}

fn write_file(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(
    configs: Vec<PathBuf>,
    runs_dir: Option<PathBuf>,
    output_dir: Option<PathBuf>,
    max_parallel_fine: Option<usize>,
    no_checkpoints: bool,
) -> anyhow::Result<u8> {
    let mut done: Vec<(RunReport, PathBuf)> = Vec::new();
    let mut status = 0;
    for path in &configs {
        let mut cfg = parse_config(path)?;
        if let Some(n) = max_parallel_fine {
            cfg.max_parallel_fine = n.max(1);
        }
        for w in &cfg.warnings {
            eprintln!("warning: {w}");
        }
        let mut env = RunEnv::new(runs_root(runs_dir.clone(), &cfg));
        env.engine = Some(std::env::current_exe()?);
        env.checkpoint_iterates = !no_checkpoints;
        let report = run_experiment(&cfg, &env)?;
        let out = match &output_dir {
            Some(dir) if configs.len() > 1 => dir.join(&cfg.run_id),
            Some(dir) => dir.clone(),
            None => cfg.output_dir.clone(),
        };
        if !report.completed() {
            status = 3;
        }
        done.push((report, out));
    }
    // longer slices should not make U converge sooner
    done.sort_by_key(|(r, _)| r.slice_length);
    for i in 1..done.len() {
        let flags = compare_slice_lengths(&done[i - 1].0, &done[i].0);
        done[i].0.flags.extend(flags);
    }
    for (report, out) in &done {
        emit_report(report, out).with_context(|| format!("writing reports to {}", out.display()))?;
        print!("{}", report.to_text());
        println!("reports written to {}", out.display());
    }
    Ok(status)
}

fn serial(
    config: &Path,
    spd: u32,
    reference_spd: Option<u32>,
    runs_dir: Option<PathBuf>,
    output_dir: Option<PathBuf>,
) -> anyhow::Result<u8> {
    let cfg = parse_config(config)?;
    if !is_day_divisor(spd as u64) {
        bail!(ConfigError::Validation {
            origin: "--spd".into(),
            key: "spd".into(),
            line: None,
            message: format!("{spd} does not divide 86400"),
        });
    }
    let env = RunEnv::new(runs_root(runs_dir, &cfg));
    let u0 = initial_state(&cfg, &env.cache_dir())?;
    let states = serial_reference(&cfg, &u0, spd, &env)?;
    let out = output_dir.unwrap_or_else(|| cfg.output_dir.clone()).join(format!("serial-spd{spd}"));
    for (n, s) in states.iter().enumerate() {
        write_state(&out.join(format!("boundary{n}.prcp")), s, None, n as i32, -1)?;
    }
    println!("serial run at {spd} spd: {} boundaries written to {}", states.len(), out.display());
    if let Some(r) = reference_spd {
        let series = time_averaged_study(&cfg, &u0, spd, r)?;
        let mut csv = String::from("slice,field,error\n");
        for (field, values) in &series {
            for (n, v) in values.iter().enumerate() {
                csv.push_str(&format!("{n},{field},{v:e}\n"));
            }
        }
        write_file(&out.join(format!("time_averaged_vs_{r}.csv")), &csv)?;
        print!("{csv}");
    }
    Ok(0)
}

fn single_shot(input: &Path, output: &Path, t_end: u64, spd: u32, config: Option<&Path>) -> anyhow::Result<u8> {
    if !is_day_divisor(spd as u64) {
        bail!(ConfigError::Validation {
            origin: "--spd".into(),
            key: "spd".into(),
            line: None,
            message: format!("{spd} does not divide 86400"),
        });
    }
    let cfg = match config {
        Some(p) => parse_config(p)?,
        None => ExperimentConfig::default(),
    };
    let checkpoint = read_checkpoint(input)?;
    let grid = Grid::new(checkpoint.nx as usize, checkpoint.ny as usize, cfg.grid.dx(), cfg.grid.dy())?;
    let clock = checkpoint.clock;
    let (state, history) = checkpoint.into_state(grid)?;
    let h = history.unwrap_or_else(|| StepHistory::cold(state));
    let h = integrate_history(h, t_end, SECONDS_PER_DAY / spd as u64, &cfg.params)?;
    write_state(output, h.current(), Some(&h), clock.slice, clock.iteration)?;
    Ok(0)
}

fn speedup(m: f64, nt: usize, k: Option<usize>) -> anyhow::Result<u8> {
    if !(m > 0.0) || nt == 0 {
        bail!(ConfigError::Validation {
            origin: "speedup".into(),
            key: "m/nt".into(),
            line: None,
            message: "need m > 0 and nt >= 1".into(),
        });
    }
    let model = SpeedupModel::new(nt, m);
    println!("m = {m}, N_t = {nt}");
    println!("{:>4} {:>12} {:>12}", "k", "estimate", "bound");
    let ks: Vec<usize> = match k {
        Some(k) => vec![k],
        None => (0..=nt).collect(),
    };
    for k in ks {
        println!("{k:>4} {:>12.6} {:>12.6}", model.estimate(k), model.bound(k));
    }
    println!("max profitable iterations: {}", max_profitable_iterations(m, nt));
    Ok(0)
}

fn restart_study(
    config: &Path,
    spd: Option<u32>,
    horizon: Option<String>,
    slices: Vec<usize>,
    runs_dir: Option<PathBuf>,
) -> anyhow::Result<u8> {
    let cfg = parse_config(config)?;
    let env = RunEnv::new(runs_root(runs_dir, &cfg));
    let u0 = initial_state(&cfg, &env.cache_dir())?;
    let horizon = match horizon {
        Some(h) => parareal_harness::config::parse_duration(&h).map_err(|message| ConfigError::Validation {
            origin: "--horizon".into(),
            key: "horizon".into(),
            line: None,
            message,
        })?,
        None => cfg.layout.total(),
    };
    let n = cfg.layout.n_slices();
    let slices = if slices.is_empty() {
        (2..=n).filter(|c| n % c == 0).collect()
    } else {
        slices
    };
    let study = restart_consistency_study(&cfg, &u0, spd.unwrap_or(cfg.coarse_spd), horizon, &slices)?;
    print!("{}", study.to_text());
    Ok(0)
}

fn emit(format: Format, report: &Path, out: Option<PathBuf>) -> anyhow::Result<u8> {
    let text = std::fs::read_to_string(report).with_context(|| format!("reading {}", report.display()))?;
    let report = RunReport::from_json(&text).with_context(|| format!("parsing {}", report.display()))?;
    let rendered = render(&report, format);
    match out {
        Some(path) => write_file(&path, &rendered)?,
        None => print!("{rendered}"),
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            configs,
            runs_dir,
            output_dir,
            max_parallel_fine,
            no_checkpoints,
        } => run(configs, runs_dir, output_dir, max_parallel_fine, no_checkpoints),
        Command::Serial {
            config,
            spd,
            reference_spd,
            runs_dir,
            output_dir,
        } => serial(&config, spd, reference_spd, runs_dir, output_dir),
        Command::SingleShot {
            input,
            output,
            t_end,
            spd,
            config,
        } => single_shot(&input, &output, t_end, spd, config.as_deref()),
        Command::Speedup { m, nt, k } => speedup(m, nt, k),
        Command::RestartStudy {
            config,
            spd,
            horizon,
            slices,
            runs_dir,
        } => restart_study(&config, spd, horizon, slices, runs_dir),
        Command::Emit { format, report, out } => emit(format, &report, out),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
