//! Configuration-driven experiment runner behind the `mxlqr` binary.

pub mod config;
pub mod report;
pub mod run;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::ValueEnum;
use serde::Serialize;

use crate::config::{ExperimentConfig, Format};
use crate::report::{write_atomic, RunReport, Status, Timing, SCHEMA, SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    Solve,
    Feedback,
    Transition,
    Approx,
    ZeroSigma,
    Admissibility,
    OracleCompare,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Self::Solve => "solve",
            Self::Feedback => "feedback",
            Self::Transition => "transition",
            Self::Approx => "approx",
            Self::ZeroSigma => "zero-sigma",
            Self::Admissibility => "admissibility",
            Self::OracleCompare => "oracle-compare",
        }
    }
}

pub mod exit {
    pub const PASS: u8 = 0;
    pub const CHECK_FAILURE: u8 = 1;
    pub const CONFIG_ERROR: u8 = 2;
    pub const SOLVER_FAILURE: u8 = 3;
}

/// Reads `MXLQR_THREADS` and sizes the global pool.
pub fn init_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("MXLQR_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().map_err(|_| format!("MXLQR_THREADS: expected a positive integer, got `{raw}`"))?;
    if n == 0 {
        return Err("MXLQR_THREADS: must be at least 1".into());
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| format!("MXLQR_THREADS: {e}"))
}

/// Runs `sub` and writes the artifacts; returns the exit code.
pub fn execute(sub: Subcommand, config_path: &Path, out: Option<PathBuf>, seed: Option<u64>) -> u8 {
    let mut cfg = match ExperimentConfig::load(config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {}: {e}", config_path.display());
            return exit::CONFIG_ERROR;
        }
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Err(e) = cfg.validate(sub) {
        eprintln!("config error: {}: {e}", config_path.display());
        return exit::CONFIG_ERROR;
    }
    let out_dir = out.unwrap_or_else(|| PathBuf::from(&cfg.output.dir));

    let start = Instant::now();
    let mut rec = report::Recorder::new(&cfg);
    let outcome = run::run(sub, &cfg, &mut rec);
    let mut timings = std::mem::take(&mut rec.timings);
    timings.push(Timing { stage: "total".into(), seconds: start.elapsed().as_secs_f64() });

    let error = outcome.as_ref().err().map(|e| e.to_string());
    let status = if error.is_none() && rec.passed() { Status::Pass } else { Status::Fail };
    let csv = cfg.output.formats.contains(&Format::Csv);
    let artifacts: Vec<String> = if csv { rec.tables.iter().map(|(f, _)| f.clone()).collect() } else { Vec::new() };
    let passed = rec.passed();
    let report = RunReport {
        schema: SCHEMA,
        schema_version: SCHEMA_VERSION,
        subcommand: sub.name().into(),
        seed: cfg.seed,
        config: cfg.clone(),
        status,
        error: error.clone(),
        checks: rec.checks,
        results: rec.results,
        artifacts,
        timings,
    };

    let mut written = Ok(());
    if csv {
        for (file, body) in &rec.tables {
            written = written.and_then(|_| write_atomic(&out_dir.join(file), body.as_bytes()));
        }
    }
    if cfg.output.formats.contains(&Format::Json) {
        let mut body = serde_json::to_string_pretty(&report).expect("report serializes");
        body.push('\n');
        written = written.and_then(|_| write_atomic(&out_dir.join("report.json"), body.as_bytes()));
    }
    if let Err(e) = written {
        eprintln!("error: writing artifacts to {}: {e}", out_dir.display());
        return exit::SOLVER_FAILURE;
    }

    for c in &report.checks {
        let status = match c.status {
            Status::Pass => "pass",
            Status::Fail => "FAIL",
            Status::ReportOnly => "report",
        };
        let op = if c.bound == "max" { "<=" } else { ">=" };
        println!("{status:>6}  {:<22} {:>11.3e} {op} {:.1e}", c.name, c.value, c.tolerance);
    }
    if let Some(e) = error {
        eprintln!("solver failure: {e}");
        return exit::SOLVER_FAILURE;
    }
    if passed {
        exit::PASS
    } else {
        exit::CHECK_FAILURE
    }
}
