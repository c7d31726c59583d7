//! Run reports and their CSV, JSON and text renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

/// Error norms of one field at the final time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldNorms {
    pub field: String,
    /// `None` when the reference field is identically zero.
    pub e_inf: Option<f64>,
    pub e_2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationSummary {
    pub k: usize,
    pub errors: Vec<FieldNorms>,
    /// Boundaries `0..=k` equal the reference bit for bit.
    pub exact_prefix: bool,
    /// Slices whose fine run failed and were left uncorrected.
    pub uncorrected_slices: Vec<usize>,
    pub wall_coarse_s: f64,
    pub wall_fine_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowUpEvent {
    pub k: usize,
    pub slice: usize,
    pub role: String,
    pub action: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupRow {
    pub k: usize,
    pub estimate: f64,
    pub bound: f64,
}

/// One Parareal run against its serial reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineRun {
    pub run_id: String,
    pub fine_spd: u32,
    /// `N_F / N_G`.
    pub nominal_ratio: f64,
    pub iterations: Vec<IterationSummary>,
    /// Smallest `k >= 1` with `E_2 <= epsilon`, per monitored field.
    pub first_crossing: BTreeMap<String, Option<usize>>,
    pub termination: String,
    pub completed: bool,
    pub speedup: Vec<SpeedupRow>,
    pub max_profitable_iterations: usize,
    pub blow_ups: Vec<BlowUpEvent>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: String,
    pub config_hash: String,
    pub config: String,
    pub slice_length: u64,
    pub n_slices: usize,
    pub coarse_spd: u32,
    pub epsilon: f64,
    pub monitored: Vec<String>,
    pub runs: Vec<FineRun>,
    pub flags: Vec<String>,
}

pub const CSV_HEADER: &str = "run_id,k,field,E_inf,E_2,wall_coarse_s,wall_fine_s,blow_up_flags";

fn norm(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_else(|| "undefined".into())
}

impl RunReport {
    /// Whether every sub-run got through all its iterations.
    pub fn completed(&self) -> bool {
        self.runs.iter().all(|r| r.completed)
    }

    /// One row per `(run, k, field)` for `k = 1..=N_t`. Iteration `N_t` is
    /// flagged `exact`; iterations a run never reached are `skipped`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for run in &self.runs {
            for k in 1..=self.n_slices {
                let it = run.iterations.iter().find(|i| i.k == k);
                for field in &self.monitored {
                    let mut flags = Vec::new();
                    if k == self.n_slices {
                        flags.push("exact".to_string());
                    }
                    let (e_inf, e_2, wc, wf) = match it {
                        Some(it) => {
                            flags.extend(it.uncorrected_slices.iter().map(|n| format!("uncorrected:slice{n}")));
                            let e = it.errors.iter().find(|e| &e.field == field);
                            (
                                norm(e.and_then(|e| e.e_inf)),
                                norm(e.and_then(|e| e.e_2)),
                                format!("{:.6}", it.wall_coarse_s),
                                format!("{:.6}", it.wall_fine_s),
                            )
                        }
                        None => {
                            flags.extend(
                                run.blow_ups
                                    .iter()
                                    .filter(|b| b.k == k && b.action == "aborted")
                                    .map(|b| format!("aborted:{}:slice{}", b.role, b.slice)),
                            );
                            flags.push("skipped".into());
                            (String::new(), String::new(), String::new(), String::new())
                        }
                    };
                    let _ = writeln!(
                        out,
                        "{},{k},{field},{e_inf},{e_2},{wc},{wf},{}",
                        run.run_id,
                        flags.join(";")
                    );
                }
            }
        }
        out
    }

    /// Table-1 style summary followed by per-run error tables.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "run {}  (config {})", self.run_id, &self.config_hash[..self.config_hash.len().min(12)]);
        let _ = writeln!(
            out,
            "{:>10} {:>6} {:>6} {:>14} {:>12}",
            "dT [s]", "N_t", "N_G", "N_F", "T [s]"
        );
        let nf: Vec<String> = self.runs.iter().map(|r| r.fine_spd.to_string()).collect();
        let _ = writeln!(
            out,
            "{:>10} {:>6} {:>6} {:>14} {:>12}",
            self.slice_length,
            self.n_slices,
            self.coarse_spd,
            nf.join(","),
            self.slice_length * self.n_slices as u64
        );
        for run in &self.runs {
            let _ = writeln!(out);
            let _ = writeln!(out, "N_F = {}  (m = {})  {}", run.fine_spd, run.nominal_ratio, run.termination);
            let mut header = format!("{:>3}", "k");
            for f in &self.monitored {
                let _ = write!(header, " {:>12} {:>12}", format!("E_inf[{f}]"), format!("E_2[{f}]"));
            }
            header.push_str("  notes");
            let _ = writeln!(out, "{header}");
            for it in &run.iterations {
                let mut line = format!("{:>3}", it.k);
                for f in &self.monitored {
                    let e = it.errors.iter().find(|e| &e.field == f);
                    let cell = |v: Option<f64>| v.map(|x| format!("{x:.3e}")).unwrap_or_else(|| "undefined".into());
                    let _ = write!(line, " {:>12} {:>12}", cell(e.and_then(|e| e.e_inf)), cell(e.and_then(|e| e.e_2)));
                }
                let mut notes = Vec::new();
                if it.k == self.n_slices {
                    notes.push("exact".to_string());
                }
                if !it.uncorrected_slices.is_empty() {
                    notes.push(format!("uncorrected {:?}", it.uncorrected_slices));
                }
                let _ = writeln!(out, "{line}  {}", notes.join(", "));
            }
            let crossings: Vec<String> = run
                .first_crossing
                .iter()
                .map(|(f, k)| format!("{f}: {}", k.map(|k| k.to_string()).unwrap_or_else(|| "-".into())))
                .collect();
            let _ = writeln!(out, "first crossing of eps = {:e}: {}", self.epsilon, crossings.join(", "));
            let _ = writeln!(out, "{:>3} {:>10} {:>10}", "k", "S_est", "S_bound");
            for row in &run.speedup {
                let _ = writeln!(out, "{:>3} {:>10.4} {:>10.4}", row.k, row.estimate, row.bound);
            }
            let _ = writeln!(out, "max profitable iterations: {}", run.max_profitable_iterations);
            for b in &run.blow_ups {
                let _ = writeln!(out, "blow-up k={} slice={} {} ({}): {}", b.k, b.slice, b.role, b.action, b.detail);
            }
            for f in &run.flags {
                let _ = writeln!(out, "flag: {f}");
            }
        }
        for f in &self.flags {
            let _ = writeln!(out, "flag: {f}");
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

/// CSV without the two wall-time columns.
pub fn strip_timing_columns(csv: &str) -> String {
    csv.lines()
        .map(|line| {
            let cols: Vec<&str> = line.split(',').collect();
            cols.iter()
                .enumerate()
                .filter(|(i, _)| *i != 5 && *i != 6)
                .map(|(_, c)| *c)
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Text,
    Json,
}

pub fn render(report: &RunReport, format: Format) -> String {
    match format {
        Format::Csv => report.to_csv(),
        Format::Text => report.to_text(),
        Format::Json => report.to_json(),
    }
}

/// Writes `report.csv`, `report.json` and `report.txt` into `dir`.
pub fn emit_report(report: &RunReport, dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, format) in [("report.csv", Format::Csv), ("report.json", Format::Json), ("report.txt", Format::Text)] {
        std::fs::write(dir.join(name), render(report, format))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn empty() -> RunReport {
        RunReport {
            run_id: "t".into(),
            config_hash: "abc".into(),
            config: String::new(),
            slice_length: 2400,
            n_slices: 2,
            coarse_spd: 36,
            epsilon: 1e-2,
            monitored: vec!["U".into(), "T".into()],
            runs: Vec::new(),
            flags: Vec::new(),
        }
    }

    fn one_run() -> RunReport {
        let mut r = empty();
        let it = |k, e: f64| IterationSummary {
            k,
            errors: vec![
                FieldNorms {
                    field: "U".into(),
                    e_inf: Some(e),
                    e_2: Some(e / 2.0),
                },
                FieldNorms {
                    field: "T".into(),
                    e_inf: None,
                    e_2: None,
                },
            ],
            exact_prefix: true,
            uncorrected_slices: if k == 1 { vec![1] } else { vec![] },
            wall_coarse_s: 0.5,
            wall_fine_s: 1.5,
        };
        r.runs.push(FineRun {
            run_id: "t-nf72".into(),
            fine_spd: 72,
            nominal_ratio: 2.0,
            iterations: vec![it(0, 1.0), it(1, 0.1), it(2, 0.0)],
            first_crossing: BTreeMap::new(),
            termination: "max iterations".into(),
            completed: true,
            speedup: vec![],
            max_profitable_iterations: 0,
            blow_ups: vec![],
            flags: vec![],
        });
        r
    }

    #[test]
    fn empty_report_is_header_only() {
        assert_eq!(empty().to_csv(), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn rows_cover_every_cell() {
        let csv = one_run().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + 2 * 2);
        assert_eq!(lines[1], "t-nf72,1,U,1e-1,5e-2,0.500000,1.500000,uncorrected:slice1");
        assert_eq!(lines[2], "t-nf72,1,T,undefined,undefined,0.500000,1.500000,uncorrected:slice1");
        assert!(lines[3].ends_with(",exact"));
    }

    #[test]
    fn missing_iterations_are_marked_skipped() {
        let mut r = one_run();
        r.runs[0].iterations.truncate(2);
        let csv = r.to_csv();
        assert!(csv.lines().last().unwrap().ends_with(",,,,,exact;skipped"), "{csv}");
    }

    #[test]
    fn json_round_trip_and_stable_bytes() {
        let r = one_run();
        let back = RunReport::from_json(&r.to_json()).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.to_csv(), r.to_csv());
        assert_eq!(back.to_text(), r.to_text());
    }

    #[test]
    fn timing_columns_stripped() {
        let csv = one_run().to_csv();
        let stripped = strip_timing_columns(&csv);
        assert!(stripped.starts_with("run_id,k,field,E_inf,E_2,blow_up_flags\n"));
        assert!(!stripped.contains("0.500000"));
    }
}
