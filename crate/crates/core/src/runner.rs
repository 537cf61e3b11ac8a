//! Experiment dispatch: runs drivers, writes one CSV per experiment and a
//! `manifest.json` describing the run.

use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::ExperimentError;
use crate::experiments::{run_experiment, EXPERIMENTS};
use crate::report::{write_csv_file, InequalityReport};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Process exit status.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Pass = 0,
    Fail = 1,
    Usage = 2,
}

impl Status {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentRecord {
    pub experiment: String,
    pub file: String,
    pub rows: usize,
    pub failed: usize,
    pub runtime_s: f64,
}

/// Written next to the CSVs. Feeding `config` back in as a config file
/// reproduces the CSVs byte for byte.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub version: String,
    pub experiment: String,
    pub config_path: Option<String>,
    pub config: RunConfig,
    pub seed: u64,
    pub out_dir: String,
    pub threads: usize,
    pub started: String,
    pub finished: String,
    pub outputs: Vec<ExperimentRecord>,
}

pub fn version() -> String {
    format!("v{}", env!("CARGO_PKG_VERSION"))
}

/// Names run by `name`: itself, or every experiment for `"all"`.
pub fn expand(name: &str) -> Result<Vec<&'static str>, ExperimentError> {
    if name == "all" {
        return Ok(EXPERIMENTS.to_vec());
    }
    EXPERIMENTS
        .iter()
        .find(|e| **e == name)
        .map(|e| vec![*e])
        .ok_or_else(|| ExperimentError::Unknown {
            name: name.to_string(),
            choices: EXPERIMENTS.join(", ") + ", all",
        })
}

#[derive(Debug)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub reports: Vec<(String, Vec<InequalityReport>)>,
}

impl RunOutcome {
    pub fn failed_rows(&self) -> usize {
        self.manifest.outputs.iter().map(|o| o.failed).sum()
    }

    pub fn status(&self) -> Status {
        if self.failed_rows() == 0 {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error("cannot write {path}: {reason}")]
    Output { path: String, reason: String },
}

impl RunError {
    pub fn status(&self) -> Status {
        match self {
            RunError::Experiment(ExperimentError::Estimate(_)) => Status::Fail,
            _ => Status::Usage,
        }
    }
}

fn output_err(path: &Path, e: impl std::fmt::Display) -> RunError {
    RunError::Output {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

/// Runs `name` (an experiment or `"all"`) and writes `<name>.csv` files plus
/// the manifest into `out_dir`.
pub fn dispatch(
    name: &str,
    cfg: &RunConfig,
    out_dir: &Path,
    config_path: Option<&Path>,
) -> Result<RunOutcome, RunError> {
    let names = expand(name)?;
    cfg.validate().map_err(ExperimentError::from)?;
    std::fs::create_dir_all(out_dir).map_err(|e| output_err(out_dir, e))?;
    let started = chrono::Utc::now().to_rfc3339();
    let mut outputs = Vec::new();
    let mut reports = Vec::new();
    for e in names {
        let clock = Instant::now();
        let rows = run_experiment(e, cfg)?;
        let runtime_s = clock.elapsed().as_secs_f64();
        let file = format!("{e}.csv");
        let path = out_dir.join(&file);
        write_csv_file(&rows, &path).map_err(|err| output_err(&path, err))?;
        let failed = rows.iter().filter(|r| !r.passed()).count();
        log::info!("{e}: {} rows, {failed} failed, {runtime_s:.1} s", rows.len());
        outputs.push(ExperimentRecord {
            experiment: e.to_string(),
            file,
            rows: rows.len(),
            failed,
            runtime_s,
        });
        reports.push((e.to_string(), rows));
    }
    let manifest = RunManifest {
        version: version(),
        experiment: name.to_string(),
        config_path: config_path.map(|p| p.display().to_string()),
        config: cfg.clone(),
        seed: cfg.seed,
        out_dir: out_dir.display().to_string(),
        threads: rayon::current_num_threads(),
        started,
        finished: chrono::Utc::now().to_rfc3339(),
        outputs,
    };
    let path = out_dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, text + "\n").map_err(|e| output_err(&path, e))?;
    Ok(RunOutcome { manifest, reports })
}

/// Runs `f` inside a pool of `threads` workers (all cores when `None`).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .expect("thread pool");
    pool.install(f)
}
