//! Output files: per-run step CSVs, the aggregate CSV and `manifest.json`,
//! plus readers for all three.
//!
//! Layout under the output directory:
//!
//! ```text
//! manifest.json
//! aggregate.csv
//! runs/run_00000.csv
//! runs/run_00001.csv
//! ...
//! ```

use std::fmt::Write as _;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::aggregate::{AggregateRow, AGGREGATE_HEADER};
use crate::harness::run::{RunSummary, RunTrace, StepRecord};

pub const STEP_HEADER: [&str; 11] = [
    "run_id",
    "t",
    "policy",
    "reward",
    "instant_regret",
    "cum_regret",
    "beta_rls",
    "alpha_hat",
    "mu_hat",
    "used_oful",
    "zeta",
];

pub const MANIFEST_FILE: &str = "manifest.json";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const RUNS_DIR: &str = "runs";

pub fn version_string() -> String {
    format!("v{}", env!("CARGO_PKG_VERSION"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: String,
    pub started_unix: f64,
    pub elapsed_seconds: f64,
    pub master_seed: u64,
    pub replicates: usize,
    pub horizon: usize,
    pub policies: Vec<String>,
    /// Normalized configuration, when the runs came from a config file.
    pub config: Option<String>,
    pub runs: Vec<RunSummary>,
}

pub fn run_file_name(run_id: usize) -> String {
    format!("run_{run_id:05}.csv")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn step_csv(trace: &RunTrace) -> String {
    let mut s = STEP_HEADER.join(",");
    s.push('\n');
    let id = trace.summary.run_id;
    let policy = &trace.summary.policy;
    for r in &trace.steps {
        let _ = writeln!(
            s,
            "{id},{},{policy},{},{},{},{},{},{},{},{}",
            r.t,
            r.reward,
            r.instant_regret,
            r.cum_regret,
            r.beta_rls,
            opt(r.alpha_hat),
            opt(r.mu_hat),
            r.used_oful as u8,
            opt(r.zeta),
        );
    }
    s
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut s = AGGREGATE_HEADER.join(",");
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.policy,
            r.t,
            r.runs,
            r.mean_cum_regret,
            r.se_cum_regret,
            r.lower,
            r.upper,
            r.oful_rate,
            r.oful_fraction,
            opt(r.mean_zeta),
        );
    }
    s
}

fn write(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Writes every artifact; returns the paths written.
pub fn emit(traces: &[RunTrace], aggregate: &[AggregateRow], manifest: &Manifest, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let runs_dir = out_dir.join(RUNS_DIR);
    std::fs::create_dir_all(&runs_dir).map_err(|e| Error::io(&runs_dir, e))?;
    let mut written = Vec::with_capacity(traces.len() + 2);
    for tr in traces {
        let p = runs_dir.join(run_file_name(tr.summary.run_id));
        write(&p, &step_csv(tr))?;
        written.push(p);
    }
    let p = out_dir.join(AGGREGATE_FILE);
    write(&p, &aggregate_csv(aggregate))?;
    written.push(p);
    let p = out_dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(manifest).map_err(|e| Error::Numeric(e.to_string()))?;
    write(&p, &json)?;
    written.push(p);
    Ok(written)
}

/// One parsed step-CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub run_id: usize,
    pub policy: String,
    pub step: StepRecord,
}

fn check_header(found: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let got: Vec<&str> = found.iter().collect();
    if got != expected {
        return Err(Error::Parse {
            row: 0,
            column: 0,
            message: format!("header mismatch: expected {:?}, found {:?}", expected.join(","), got.join(",")),
        });
    }
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, row: usize, col: usize) -> Result<T> {
    let raw = rec.get(col).unwrap_or("");
    raw.parse().map_err(|_| Error::Parse { row, column: col + 1, message: format!("cannot parse {raw:?}") })
}

fn opt_field(rec: &csv::StringRecord, row: usize, col: usize) -> Result<Option<f64>> {
    match rec.get(col) {
        Some("") | None => Ok(None),
        Some(_) => field(rec, row, col).map(Some),
    }
}

fn flag_field(rec: &csv::StringRecord, row: usize, col: usize) -> Result<bool> {
    match rec.get(col) {
        Some("0") => Ok(false),
        Some("1") => Ok(true),
        other => Err(Error::Parse { row, column: col + 1, message: format!("expected 0 or 1, found {other:?}") }),
    }
}

fn records<R: Read>(reader: R, expected: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse { row: 0, column: 0, message: e.to_string() })?
        .clone();
    check_header(&header, expected)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse { row: i + 1, column: 0, message: e.to_string() })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_step_csv<R: Read>(reader: R) -> Result<Vec<TraceRow>> {
    let recs = records(reader, &STEP_HEADER)?;
    recs.iter()
        .enumerate()
        .map(|(i, rec)| {
            let row = i + 1;
            Ok(TraceRow {
                run_id: field(rec, row, 0)?,
                policy: rec.get(2).unwrap_or("").to_string(),
                step: StepRecord {
                    t: field(rec, row, 1)?,
                    reward: field(rec, row, 3)?,
                    instant_regret: field(rec, row, 4)?,
                    cum_regret: field(rec, row, 5)?,
                    beta_rls: field(rec, row, 6)?,
                    alpha_hat: opt_field(rec, row, 7)?,
                    mu_hat: opt_field(rec, row, 8)?,
                    used_oful: flag_field(rec, row, 9)?,
                    zeta: opt_field(rec, row, 10)?,
                    action_index: None,
                    degenerate: false,
                },
            })
        })
        .collect()
}

pub fn read_aggregate_csv<R: Read>(reader: R) -> Result<Vec<AggregateRow>> {
    let recs = records(reader, &AGGREGATE_HEADER)?;
    recs.iter()
        .enumerate()
        .map(|(i, rec)| {
            let row = i + 1;
            Ok(AggregateRow {
                policy: rec.get(0).unwrap_or("").to_string(),
                t: field(rec, row, 1)?,
                runs: field(rec, row, 2)?,
                mean_cum_regret: field(rec, row, 3)?,
                se_cum_regret: field(rec, row, 4)?,
                lower: field(rec, row, 5)?,
                upper: field(rec, row, 6)?,
                oful_rate: field(rec, row, 7)?,
                oful_fraction: field(rec, row, 8)?,
                mean_zeta: opt_field(rec, row, 9)?,
            })
        })
        .collect()
}

pub fn parse_manifest(text: &str) -> Result<Manifest> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        row: e.line(),
        column: e.column(),
        message: format!("manifest: {e}"),
    })
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let p = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    parse_manifest(&text)
}

pub fn read_run(dir: &Path, run_id: usize) -> Result<Vec<TraceRow>> {
    let p = dir.join(RUNS_DIR).join(run_file_name(run_id));
    let f = std::fs::File::open(&p).map_err(|e| Error::io(&p, e))?;
    read_step_csv(f)
}
