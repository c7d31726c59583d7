//! Namelist-style experiment configuration.
//!
//! The format is flat `key = value` lines grouped under `[config]`,
//! `[model]` and `[io]` headers. `#` starts a comment. Durations accept an
//! optional `s`, `h` or `d` suffix (a month is written `30d`).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use parareal_core::propagator::spec::DEFAULT_WORKDIR_TEMPLATE;
use parareal_core::solver::{cfl_max_dt, is_day_divisor, DEFAULT_COURANT, SECONDS_PER_DAY};
use parareal_core::{BlowUpPolicy, FieldName, Grid, ModelParams, ModelState, RestartPolicy, SliceLayout};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{origin}:{line}: {message}")]
    Parse { origin: String, line: usize, message: String },
    #[error("{origin}: invalid `{key}`{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Validation {
        origin: String,
        key: String,
        line: Option<usize>,
        message: String,
    },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Section {
    Config,
    Model,
    Io,
}

impl Section {
    fn name(self) -> &'static str {
        match self {
            Section::Config => "config",
            Section::Model => "model",
            Section::Io => "io",
        }
    }
}

const KEYS: &[(Section, &str)] = &[
    (Section::Config, "run_id"),
    (Section::Config, "t0"),
    (Section::Config, "slice_length"),
    (Section::Config, "n_slices"),
    (Section::Config, "horizon"),
    (Section::Config, "coarse_spd"),
    (Section::Config, "fine_spd"),
    (Section::Config, "max_iterations"),
    (Section::Config, "epsilon"),
    (Section::Config, "monitored"),
    (Section::Config, "on_blow_up"),
    (Section::Config, "restart_policy"),
    (Section::Config, "max_parallel_fine"),
    (Section::Config, "execution"),
    (Section::Config, "coarse_command"),
    (Section::Config, "fine_command"),
    (Section::Config, "workdir_template"),
    (Section::Config, "timeout"),
    (Section::Model, "nx"),
    (Section::Model, "ny"),
    (Section::Model, "dx"),
    (Section::Model, "dy"),
    (Section::Model, "f0"),
    (Section::Model, "g"),
    (Section::Model, "depth"),
    (Section::Model, "nu_h"),
    (Section::Model, "kappa"),
    (Section::Model, "forcing_amp"),
    (Section::Model, "forcing_wavenumber"),
    (Section::Model, "velocity_cap"),
    (Section::Model, "seed"),
    (Section::Model, "spinup"),
    (Section::Model, "spinup_spd"),
    (Section::Io, "output_dir"),
    (Section::Io, "runs_dir"),
];

/// How the propagators are executed.
#[derive(Debug, Clone, PartialEq)]
pub enum Execution {
    Internal,
    /// Commands default to this binary's `single-shot` with `--config`.
    External {
        coarse_command: Option<Vec<String>>,
        fine_command: Option<Vec<String>>,
        workdir_template: String,
        timeout: Option<Duration>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub run_id: String,
    pub grid: Grid,
    pub params: ModelParams,
    pub layout: SliceLayout,
    pub coarse_spd: u32,
    pub fine_spd: Vec<u32>,
    pub max_iterations: usize,
    pub epsilon: f64,
    pub monitored: Vec<FieldName>,
    pub on_blow_up: BlowUpPolicy,
    pub restart_policy: RestartPolicy,
    pub max_parallel_fine: usize,
    pub execution: Execution,
    pub seed: u64,
    pub spinup: u64,
    pub spinup_spd: u32,
    pub output_dir: PathBuf,
    pub runs_dir: PathBuf,
    /// The file this config was read from, if any.
    pub source: Option<PathBuf>,
    /// Non-fatal diagnostics collected during validation.
    pub warnings: Vec<String>,
}

impl Default for ExperimentConfig {
    /// The Experiment-1 layout on a 32x32 grid.
    fn default() -> Self {
        Self {
            run_id: "exp".into(),
            grid: Grid::new(32, 32, 5e4, 5e4).expect("default grid"),
            params: ModelParams::default(),
            layout: SliceLayout::new(0, 2400, 12).expect("default layout"),
            coarse_spd: 36,
            fine_spd: vec![72, 144, 288],
            max_iterations: 12,
            epsilon: parareal_core::parareal::DEFAULT_EPSILON,
            monitored: vec![FieldName::U, FieldName::T, FieldName::S],
            on_blow_up: BlowUpPolicy::ContinueUncorrected,
            restart_policy: RestartPolicy::Cold,
            max_parallel_fine: 1,
            execution: Execution::Internal,
            seed: 1,
            spinup: 30 * SECONDS_PER_DAY,
            spinup_spd: 1440,
            output_dir: PathBuf::from("out"),
            runs_dir: PathBuf::from("runs"),
            source: None,
            warnings: Vec::new(),
        }
    }
}

struct Entry {
    value: String,
    line: usize,
}

struct Raw {
    origin: String,
    entries: BTreeMap<(Section, &'static str), Entry>,
}

fn lookup_key(section: Section, key: &str) -> Option<&'static str> {
    KEYS.iter().find(|(s, k)| *s == section && *k == key).map(|(_, k)| *k)
}

fn tokenize(text: &str, origin: &str) -> Result<Raw, ConfigError> {
    let parse_err = |line: usize, message: String| ConfigError::Parse {
        origin: origin.to_string(),
        line,
        message,
    };
    let mut entries = BTreeMap::new();
    let mut section = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| parse_err(line, format!("unterminated section header `{content}`")))?;
            section = Some(match name.trim() {
                "config" => Section::Config,
                "model" => Section::Model,
                "io" => Section::Io,
                other => return Err(parse_err(line, format!("unknown section `[{other}]`"))),
            });
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| parse_err(line, format!("expected `key = value`, got `{content}`")))?;
        let key = key.trim();
        let sec = section.ok_or_else(|| parse_err(line, format!("`{key}` appears before any section header")))?;
        let known = lookup_key(sec, key)
            .ok_or_else(|| parse_err(line, format!("unknown key `{key}` in [{}]", sec.name())))?;
        let entry = Entry {
            value: value.trim().to_string(),
            line,
        };
        if let Some(prev) = entries.insert((sec, known), entry) {
            return Err(parse_err(line, format!("duplicate key `{key}` (first set on line {})", prev.line)));
        }
    }
    Ok(Raw {
        origin: origin.to_string(),
        entries,
    })
}

/// Parses `30d`, `8h`, `2400s` or a bare number of seconds.
pub fn parse_duration(text: &str) -> Result<u64, String> {
    let t = text.trim();
    let (digits, unit) = match t.char_indices().last() {
        Some((i, 'd')) => (&t[..i], SECONDS_PER_DAY),
        Some((i, 'h')) => (&t[..i], 3600),
        Some((i, 's')) => (&t[..i], 1),
        _ => (t, 1),
    };
    let n: u64 = digits
        .trim()
        .parse()
        .map_err(|_| format!("`{text}` is not a whole-second duration"))?;
    n.checked_mul(unit).ok_or_else(|| format!("`{text}` overflows"))
}

impl Raw {
    fn invalid(&self, section: Section, key: &str, message: impl Into<String>) -> ConfigError {
        let line = lookup_key(section, key).and_then(|k| self.entries.get(&(section, k))).map(|e| e.line);
        ConfigError::Validation {
            origin: self.origin.clone(),
            key: format!("{}.{key}", section.name()),
            line,
            message: message.into(),
        }
    }

    fn get<T>(
        &self,
        section: Section,
        key: &str,
        parse: impl FnOnce(&str) -> Result<T, String>,
    ) -> Result<Option<T>, ConfigError> {
        let Some(entry) = lookup_key(section, key).and_then(|k| self.entries.get(&(section, k))) else {
            return Ok(None);
        };
        parse(&entry.value)
            .map(Some)
            .map_err(|message| self.invalid(section, key, message))
    }

    fn num<T: std::str::FromStr>(&self, section: Section, key: &str) -> Result<Option<T>, ConfigError> {
        self.get(section, key, |v| v.parse().map_err(|_| format!("cannot parse `{v}` as a number")))
    }
}

fn list<T>(v: &str, item: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    let items: Vec<&str> = v.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err("empty list".into());
    }
    items.into_iter().map(item).collect()
}

fn command(v: &str) -> Result<Vec<String>, String> {
    let argv: Vec<String> = v.split_whitespace().map(String::from).collect();
    if argv.is_empty() {
        Err("empty command".into())
    } else {
        Ok(argv)
    }
}

/// Parses configuration text; `origin` names it in diagnostics.
pub fn parse_config_str(text: &str, origin: &str) -> Result<ExperimentConfig, ConfigError> {
    use Section::*;
    let raw = tokenize(text, origin)?;
    let mut cfg = ExperimentConfig::default();

    if let Some(v) = raw.get(Config, "run_id", |v| Ok(v.to_string()))? {
        if v.is_empty() || !v.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return Err(raw.invalid(Config, "run_id", "must be non-empty and use only [A-Za-z0-9_-]"));
        }
        cfg.run_id = v;
    }

    let nx = raw.num(Model, "nx")?.unwrap_or(cfg.grid.nx());
    let ny = raw.num(Model, "ny")?.unwrap_or(cfg.grid.ny());
    let dx = raw.num(Model, "dx")?.unwrap_or(cfg.grid.dx());
    let dy = raw.num(Model, "dy")?.unwrap_or(cfg.grid.dy());
    cfg.grid = Grid::new(nx, ny, dx, dy).map_err(|e| raw.invalid(Model, "nx", e.to_string()))?;

    let p = &mut cfg.params;
    for (key, slot) in [
        ("f0", &mut p.f0),
        ("g", &mut p.g),
        ("depth", &mut p.depth),
        ("nu_h", &mut p.nu_h),
        ("kappa", &mut p.kappa),
        ("forcing_amp", &mut p.forcing_amp),
        ("velocity_cap", &mut p.velocity_cap),
    ] {
        if let Some(v) = raw.num(Model, key)? {
            *slot = v;
        }
    }
    if let Some(v) = raw.num(Model, "forcing_wavenumber")? {
        p.forcing_wavenumber = v;
    }
    cfg.params
        .validate()
        .map_err(|e| raw.invalid(Model, "g", e.to_string()))?;

    cfg.seed = raw.num(Model, "seed")?.unwrap_or(cfg.seed);
    cfg.spinup = raw.get(Model, "spinup", parse_duration)?.unwrap_or(cfg.spinup);
    cfg.spinup_spd = raw.num(Model, "spinup_spd")?.unwrap_or(cfg.spinup_spd);
    if !is_day_divisor(cfg.spinup_spd as u64) {
        return Err(raw.invalid(Model, "spinup_spd", divisor_message(cfg.spinup_spd)));
    }
    if cfg.spinup % (SECONDS_PER_DAY / cfg.spinup_spd as u64) != 0 {
        return Err(raw.invalid(Model, "spinup", "must be a whole number of spin-up steps"));
    }

    let t0 = raw.get(Config, "t0", parse_duration)?.unwrap_or(0);
    let slice_length = raw.get(Config, "slice_length", parse_duration)?.unwrap_or(cfg.layout.slice_length());
    let n_slices: usize = raw.num(Config, "n_slices")?.unwrap_or(cfg.layout.n_slices());
    cfg.layout = SliceLayout::new(t0, slice_length, n_slices).map_err(|e| raw.invalid(Config, "slice_length", e.to_string()))?;
    if let Some(horizon) = raw.get(Config, "horizon", parse_duration)? {
        if horizon != cfg.layout.total() {
            return Err(raw.invalid(
                Config,
                "horizon",
                format!(
                    "slice_length * n_slices = {} s but horizon = {horizon} s",
                    cfg.layout.total()
                ),
            ));
        }
    }

    cfg.coarse_spd = raw.num(Config, "coarse_spd")?.unwrap_or(cfg.coarse_spd);
    if !is_day_divisor(cfg.coarse_spd as u64) {
        return Err(raw.invalid(Config, "coarse_spd", divisor_message(cfg.coarse_spd)));
    }
    let coarse_dt = SECONDS_PER_DAY / cfg.coarse_spd as u64;
    if slice_length % coarse_dt != 0 {
        return Err(raw.invalid(
            Config,
            "slice_length",
            format!("{slice_length} s is not a multiple of the coarse step {coarse_dt} s"),
        ));
    }
    if let Some(list) = raw.get(Config, "fine_spd", |v| list(v, |s| s.parse::<u32>().map_err(|_| format!("`{s}` is not an integer"))))? {
        cfg.fine_spd = list;
    }
    for &spd in &cfg.fine_spd {
        if !is_day_divisor(spd as u64) {
            return Err(raw.invalid(Config, "fine_spd", divisor_message(spd)));
        }
        if spd <= cfg.coarse_spd {
            return Err(raw.invalid(
                Config,
                "fine_spd",
                format!("{spd} must exceed coarse_spd = {}", cfg.coarse_spd),
            ));
        }
        let dt = SECONDS_PER_DAY / spd as u64;
        if slice_length % dt != 0 {
            return Err(raw.invalid(
                Config,
                "fine_spd",
                format!("slice_length {slice_length} s is not a multiple of the {spd}-spd step {dt} s"),
            ));
        }
    }

    cfg.max_iterations = raw.num(Config, "max_iterations")?.unwrap_or(n_slices);
    if cfg.max_iterations > n_slices {
        return Err(raw.invalid(Config, "max_iterations", format!("must not exceed n_slices = {n_slices}")));
    }
    cfg.epsilon = raw.num(Config, "epsilon")?.unwrap_or(cfg.epsilon);
    if !(cfg.epsilon > 0.0) {
        return Err(raw.invalid(Config, "epsilon", "must be positive"));
    }
    if let Some(fields) = raw.get(Config, "monitored", |v| list(v, |s| s.parse::<FieldName>().map_err(|e| e.to_string())))? {
        cfg.monitored = fields;
    }
    if let Some(v) = raw.get(Config, "on_blow_up", |v| v.parse::<BlowUpPolicy>())? {
        cfg.on_blow_up = v;
    }
    if let Some(v) = raw.get(Config, "restart_policy", |v| v.parse::<RestartPolicy>())? {
        cfg.restart_policy = v;
    }
    if cfg.restart_policy == RestartPolicy::Warm {
        return Err(raw.invalid(
            Config,
            "restart_policy",
            "warm restarts need multistep history, which corrected Parareal states do not have; use cold",
        ));
    }
    cfg.max_parallel_fine = raw.num(Config, "max_parallel_fine")?.unwrap_or(cfg.max_parallel_fine);
    if cfg.max_parallel_fine == 0 {
        return Err(raw.invalid(Config, "max_parallel_fine", "must be at least 1"));
    }

    let mode = raw.get(Config, "execution", |v| Ok(v.to_string()))?.unwrap_or_else(|| "internal".into());
    cfg.execution = match mode.as_str() {
        "internal" => Execution::Internal,
        "external" => Execution::External {
            coarse_command: raw.get(Config, "coarse_command", command)?,
            fine_command: raw.get(Config, "fine_command", command)?,
            workdir_template: raw
                .get(Config, "workdir_template", |v| Ok(v.to_string()))?
                .unwrap_or_else(|| DEFAULT_WORKDIR_TEMPLATE.to_string()),
            timeout: raw.get(Config, "timeout", parse_duration)?.map(Duration::from_secs),
        },
        other => return Err(raw.invalid(Config, "execution", format!("`{other}` is neither internal nor external"))),
    };

    if let Some(v) = raw.get(Io, "output_dir", |v| Ok(PathBuf::from(v)))? {
        cfg.output_dir = v;
    }
    if let Some(v) = raw.get(Io, "runs_dir", |v| Ok(PathBuf::from(v)))? {
        cfg.runs_dir = v;
    }

    check_cfl(&mut cfg, &raw)?;
    Ok(cfg)
}

fn divisor_message(spd: u32) -> String {
    format!("{spd} steps per day does not divide 86400 s into whole-second steps")
}

/// The coarse step must be stable for the model at rest. External runs may
/// carry their own stabilisation, so there it only warns.
fn check_cfl(cfg: &mut ExperimentConfig, raw: &Raw) -> Result<(), ConfigError> {
    let rest = ModelState::rest(cfg.grid, 0.0, 0.0, 0);
    let limit = cfl_max_dt(&rest, &cfg.params, DEFAULT_COURANT).map_err(|e| raw.invalid(Section::Config, "coarse_spd", e.to_string()))?;
    let coarse_dt = SECONDS_PER_DAY / cfg.coarse_spd as u64;
    let spin_dt = SECONDS_PER_DAY / cfg.spinup_spd as u64;
    if spin_dt > limit {
        return Err(raw.invalid(
            Section::Model,
            "spinup_spd",
            format!("step {spin_dt} s exceeds the CFL limit {limit} s"),
        ));
    }
    if coarse_dt > limit {
        let message = format!("coarse step {coarse_dt} s exceeds the rest-state CFL limit {limit} s");
        match cfg.execution {
            Execution::Internal => return Err(raw.invalid(Section::Config, "coarse_spd", message)),
            Execution::External { .. } => cfg.warnings.push(message),
        }
    }
    Ok(())
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut cfg = parse_config_str(&text, &path.display().to_string())?;
    cfg.source = Some(path.to_path_buf());
    Ok(cfg)
}

fn push_f64(out: &mut String, name: &str, v: f64) {
    out.push_str(&format!("{name}={:016x}\n", v.to_bits()));
}

impl ExperimentConfig {
    pub fn coarse_dt(&self) -> u64 {
        SECONDS_PER_DAY / self.coarse_spd as u64
    }

    /// Everything that determines the initial state.
    fn initial_state_key(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("grid={}x{}\n", self.grid.nx(), self.grid.ny()));
        push_f64(&mut s, "dx", self.grid.dx());
        push_f64(&mut s, "dy", self.grid.dy());
        let p = &self.params;
        for (name, v) in [
            ("f0", p.f0),
            ("g", p.g),
            ("depth", p.depth),
            ("nu_h", p.nu_h),
            ("kappa", p.kappa),
            ("forcing_amp", p.forcing_amp),
            ("velocity_cap", p.velocity_cap),
        ] {
            push_f64(&mut s, name, v);
        }
        s.push_str(&format!(
            "forcing_wavenumber={}\nseed={}\nspinup={}\nspinup_spd={}\nt0={}\n",
            p.forcing_wavenumber,
            self.seed,
            self.spinup,
            self.spinup_spd,
            self.layout.t0()
        ));
        s
    }

    /// Hash over the inputs of the spin-up state.
    pub fn initial_state_hash(&self) -> String {
        hex::encode(Sha256::digest(self.initial_state_key().as_bytes()))
    }

    /// Hash over the inputs of a restarted serial reference run.
    pub fn reference_hash(&self) -> String {
        let mut key = self.initial_state_key();
        key.push_str(&format!(
            "slice_length={}\nn_slices={}\nrestart={}\n",
            self.layout.slice_length(),
            self.layout.n_slices(),
            self.restart_policy
        ));
        hex::encode(Sha256::digest(key.as_bytes()))
    }

    /// Echo of the validated configuration in the input format.
    pub fn to_text(&self) -> String {
        let p = &self.params;
        let join = |v: Vec<String>| v.join(", ");
        let mut out = String::new();
        out.push_str("[config]\n");
        out.push_str(&format!("run_id = {}\n", self.run_id));
        out.push_str(&format!("t0 = {}\n", self.layout.t0()));
        out.push_str(&format!("slice_length = {}\n", self.layout.slice_length()));
        out.push_str(&format!("n_slices = {}\n", self.layout.n_slices()));
        out.push_str(&format!("horizon = {}\n", self.layout.total()));
        out.push_str(&format!("coarse_spd = {}\n", self.coarse_spd));
        out.push_str(&format!("fine_spd = {}\n", join(self.fine_spd.iter().map(u32::to_string).collect())));
        out.push_str(&format!("max_iterations = {}\n", self.max_iterations));
        out.push_str(&format!("epsilon = {:e}\n", self.epsilon));
        out.push_str(&format!("monitored = {}\n", join(self.monitored.iter().map(|f| f.as_str().to_string()).collect())));
        out.push_str(&format!("on_blow_up = {}\n", self.on_blow_up));
        out.push_str(&format!("restart_policy = {}\n", self.restart_policy));
        out.push_str(&format!("max_parallel_fine = {}\n", self.max_parallel_fine));
        match &self.execution {
            Execution::Internal => out.push_str("execution = internal\n"),
            Execution::External {
                coarse_command,
                fine_command,
                workdir_template,
                timeout,
            } => {
                out.push_str("execution = external\n");
                if let Some(c) = coarse_command {
                    out.push_str(&format!("coarse_command = {}\n", c.join(" ")));
                }
                if let Some(c) = fine_command {
                    out.push_str(&format!("fine_command = {}\n", c.join(" ")));
                }
                out.push_str(&format!("workdir_template = {workdir_template}\n"));
                if let Some(t) = timeout {
                    out.push_str(&format!("timeout = {}\n", t.as_secs()));
                }
            }
        }
        out.push_str("\n[model]\n");
        out.push_str(&format!("nx = {}\nny = {}\n", self.grid.nx(), self.grid.ny()));
        out.push_str(&format!("dx = {:?}\ndy = {:?}\n", self.grid.dx(), self.grid.dy()));
        out.push_str(&format!(
            "f0 = {:?}\ng = {:?}\ndepth = {:?}\nnu_h = {:?}\nkappa = {:?}\nforcing_amp = {:?}\nforcing_wavenumber = {}\nvelocity_cap = {:?}\n",
            p.f0, p.g, p.depth, p.nu_h, p.kappa, p.forcing_amp, p.forcing_wavenumber, p.velocity_cap
        ));
        out.push_str(&format!("seed = {}\nspinup = {}\nspinup_spd = {}\n", self.seed, self.spinup, self.spinup_spd));
        out.push_str("\n[io]\n");
        out.push_str(&format!("output_dir = {}\n", self.output_dir.display()));
        out.push_str(&format!("runs_dir = {}\n", self.runs_dir.display()));
        out
    }
}
