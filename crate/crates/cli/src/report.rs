//! Run reports and atomic artifact writes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

use crate::config::ExperimentConfig;

pub const SCHEMA: &str = "mxlqr.run-report";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    ReportOnly,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    /// `"max"` when `value ≤ tolerance` passes, `"min"` when `value ≥ tolerance` does.
    pub bound: &'static str,
    pub status: Status,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub schema: &'static str,
    pub schema_version: u32,
    pub subcommand: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub status: Status,
    pub error: Option<String>,
    pub checks: Vec<Check>,
    pub results: serde_json::Map<String, Value>,
    pub artifacts: Vec<String>,
    pub timings: Vec<Timing>,
}

/// Accumulates checks, results and stage timings for one run.
pub struct Recorder<'a> {
    config: &'a ExperimentConfig,
    pub checks: Vec<Check>,
    pub results: serde_json::Map<String, Value>,
    pub tables: Vec<(String, String)>,
    pub timings: Vec<Timing>,
}

impl<'a> Recorder<'a> {
    pub fn new(config: &'a ExperimentConfig) -> Self {
        Self { config, checks: Vec::new(), results: serde_json::Map::new(), tables: Vec::new(), timings: Vec::new() }
    }

    fn push(&mut self, name: &str, value: f64, tolerance: f64, bound: &'static str, ok: bool) {
        debug_assert!(self.checks.iter().all(|c| c.name != name), "duplicate check {name}");
        let status = if self.config.report_only(name) {
            Status::ReportOnly
        } else if ok {
            Status::Pass
        } else {
            Status::Fail
        };
        self.checks.push(Check { name: name.into(), value, tolerance, bound, status });
    }

    /// Passes when `value ≤ tolerance`; NaN fails.
    pub fn at_most(&mut self, name: &str, value: f64, tolerance: f64) {
        self.push(name, value, tolerance, "max", value <= tolerance);
    }

    /// Passes when `value ≥ tolerance`; NaN fails.
    pub fn at_least(&mut self, name: &str, value: f64, tolerance: f64) {
        self.push(name, value, tolerance, "min", value >= tolerance);
    }

    pub fn result(&mut self, key: &str, value: impl Serialize) {
        self.results.insert(key.into(), serde_json::to_value(value).expect("serializable result"));
    }

    pub fn table(&mut self, file: &str, csv: String) {
        self.tables.push((file.into(), csv));
    }

    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings.push(Timing { stage: stage.into(), seconds: start.elapsed().as_secs_f64() });
        out
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Fail)
    }
}

/// Writes `contents` to `path` through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("artifact");
    let tmp: PathBuf = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

/// Formats rows as CSV with a header line, `.` decimals and `\n` endings.
pub fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn num(v: f64) -> String {
    format!("{v:e}")
}
