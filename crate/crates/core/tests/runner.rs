use std::path::Path;

use burgers_harnack::config::{parse_config_str, RunConfig};
use burgers_harnack::error::{ConfigError, ExperimentError};
use burgers_harnack::experiments::{run_experiment, EXPERIMENTS};
use burgers_harnack::report::CSV_HEADER;
use burgers_harnack::runner::{dispatch, Status, MANIFEST_FILE};

fn small() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.samples = Some(16);
    cfg.mixing.average_end = 12.0;
    cfg
}

fn read(dir: &Path, file: &str) -> String {
    std::fs::read_to_string(dir.join(file)).unwrap()
}

#[test]
fn bilinear_defaults_give_one_row_per_pair() {
    let rows = run_experiment("bilinear", &RunConfig::default()).unwrap();
    assert_eq!(rows.len(), 10_000 + 2);
    assert!(rows.iter().all(|r| r.passed()));
    let ratio_rows = rows.iter().filter(|r| r.param("pair").is_some_and(|p| p.is_u64())).count();
    assert_eq!(ratio_rows, 10_000);
}

#[test]
fn energy_rows_and_params() {
    let rows = run_experiment("energy", &small()).unwrap();
    assert_eq!(rows.len(), 3);
    for r in &rows {
        for key in ["nu", "m", "dt", "seed", "n", "noise", "t_end", "x0"] {
            assert!(r.param(key).is_some(), "missing {key}");
        }
    }
}

#[test]
fn dispatch_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dispatch("strong-feller", &small(), dir.path(), None).unwrap();
    assert_eq!(out.status(), Status::Pass);
    let csv = read(dir.path(), "strong-feller.csv");
    assert_eq!(csv.lines().next().unwrap(), CSV_HEADER.join(","));
    assert_eq!(csv.lines().count(), 1 + 4);
    let manifest: serde_json::Value = serde_json::from_str(&read(dir.path(), MANIFEST_FILE)).unwrap();
    assert_eq!(manifest["seed"], 42);
    assert_eq!(manifest["outputs"][0]["rows"], 4);
    for key in ["version", "config", "out_dir", "started", "finished", "config_path"] {
        assert!(manifest.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn manifest_replay_reproduces_csvs() {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let names = ["energy", "irreducibility", "convergence"];
    for name in names {
        dispatch(name, &small(), first.path(), None).unwrap();
        let manifest: serde_json::Value = serde_json::from_str(&read(first.path(), MANIFEST_FILE)).unwrap();
        let replayed = parse_config_str(&manifest["config"].to_string()).unwrap();
        assert_eq!(replayed, small());
        dispatch(name, &replayed, second.path(), None).unwrap();
        let file = format!("{name}.csv");
        assert_eq!(read(first.path(), &file), read(second.path(), &file));
    }
}

#[test]
fn unknown_and_invalid_requests() {
    let dir = tempfile::tempdir().unwrap();
    let err = dispatch("foo", &small(), dir.path(), None).unwrap_err();
    assert_eq!(err.status(), Status::Usage);
    for name in EXPERIMENTS {
        assert!(err.to_string().contains(name));
    }
    let mut bad = small();
    bad.dt = -1.0;
    let err = dispatch("energy", &bad, dir.path(), None).unwrap_err();
    assert_eq!(err.status(), Status::Usage);
    assert!(err.to_string().contains("dt"));
}

#[test]
fn config_examples() {
    assert_eq!(parse_config_str("{}").unwrap(), RunConfig::default());
    match parse_config_str(r#"{"nu": 1, "noise": {"q0": 1, "gamma": 0}}"#).unwrap_err() {
        ConfigError::Inadmissible { nu_cubed, threshold } => {
            assert_eq!(nu_cubed, 1.0);
            assert!((threshold - 4.0 * std::f64::consts::PI).abs() < 1e-12);
        }
        other => panic!("{other}"),
    }
    let err = parse_config_str(r#"{"dt": -1}"#).unwrap_err();
    assert!(err.to_string().contains("\"dt\""));
}

#[test]
fn failing_rows_set_the_failure_status() {
    // a ball too small to be hit leaves a zero Wilson lower bound
    let mut cfg = small();
    cfg.irreducibility.radius = 1e-9;
    let dir = tempfile::tempdir().unwrap();
    let out = dispatch("irreducibility", &cfg, dir.path(), None).unwrap();
    assert_eq!(out.status(), Status::Fail);
    assert!(read(dir.path(), "irreducibility.csv").contains(",fail,"));
}

#[test]
fn experiment_errors_map_to_statuses() {
    let e: ExperimentError = burgers_harnack::error::EstimateError::DegenerateNoise.into();
    let run: burgers_harnack::runner::RunError = e.into();
    assert_eq!(run.status(), Status::Fail);
}
