//! Subprocess launch with a per-run working directory and captured log.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitStatus, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;

pub const LOG_FILE: &str = "run.log";

#[derive(Debug, Error)]
pub enum ExternalError {
    #[error("failed to spawn {program}: {source}")]
    SpawnFailure {
        program: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{program} exceeded the {limit:?} wall limit and was killed (log: {log})")]
    Timeout {
        program: String,
        limit: Duration,
        log: PathBuf,
    },
}

/// Outcome of a finished child. A nonzero exit is reported here, not raised.
#[derive(Debug, Clone)]
pub struct ExitReport {
    pub status: ExitStatus,
    pub wall_time: Duration,
    pub log_path: PathBuf,
}

impl ExitReport {
    pub fn success(&self) -> bool {
        self.status.success()
    }

    pub fn code(&self) -> Option<i32> {
        self.status.code()
    }
}

/// Launches `command[0]` with the remaining arguments inside `workdir`,
/// redirecting stdout and stderr to `workdir/run.log`.
pub fn run_external(
    command: &[String],
    workdir: &Path,
    env: &[(String, String)],
    timeout: Option<Duration>,
) -> Result<ExitReport, ExternalError> {
    let program = command.first().cloned().unwrap_or_default();
    let spawn_err = |source| ExternalError::SpawnFailure {
        program: program.clone(),
        source,
    };
    if program.is_empty() {
        return Err(spawn_err(std::io::Error::new(
            std::io::ErrorKind::InvalidInput,
            "empty command",
        )));
    }
    fs::create_dir_all(workdir).map_err(spawn_err)?;
    let log_path = workdir.join(LOG_FILE);
    let log = fs::File::create(&log_path).map_err(spawn_err)?;
    let log_err = log.try_clone().map_err(spawn_err)?;

    let start = Instant::now();
    let mut child = Command::new(&program)
        .args(&command[1..])
        .current_dir(workdir)
        .envs(env.iter().map(|(k, v)| (k, v)))
        .stdin(Stdio::null())
        .stdout(Stdio::from(log))
        .stderr(Stdio::from(log_err))
        .spawn()
        .map_err(spawn_err)?;

    let status = match timeout {
        None => child.wait().map_err(spawn_err)?,
        Some(limit) => {
            let mut pause = Duration::from_micros(200);
            loop {
                if let Some(status) = child.try_wait().map_err(spawn_err)? {
                    break status;
                }
                if start.elapsed() >= limit {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(ExternalError::Timeout {
                        program,
                        limit,
                        log: log_path,
                    });
                }
                thread::sleep(pause);
                pause = (pause * 2).min(Duration::from_millis(20));
            }
        }
    };

    Ok(ExitReport {
        status,
        wall_time: start.elapsed(),
        log_path,
    })
}
