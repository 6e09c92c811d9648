//! Black-box tests of the command-line interface: exit codes, diagnostics,
//! file outputs, and reproducibility.

use std::path::Path;
use std::process::{Command, Output};

use specshare::config::GridDims;
use specshare::ScenarioConfig;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_specshare"))
}

fn small_config() -> ScenarioConfig {
    ScenarioConfig {
        n_providers: 2,
        n_nodes: 10,
        channels_per_provider: 2,
        users_per_channel: 2,
        mean_rates: vec![0.1, 0.05],
        rate_stddevs: vec![0.02, 0.02],
        mean_holding_time: 10.0,
        horizon_t: 60.0,
        grid_dims: GridDims { rows: 1, cols: 1 },
        ..ScenarioConfig::default()
    }
}

fn write_config(dir: &Path, cfg: &ScenarioConfig) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn missing_config_file_exits_1_and_names_the_path() {
    let out = bin()
        .args(["run", "--config", "/nonexistent/nowhere.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr_of(&out).contains("nowhere.json"),
        "diagnostic must name the missing file: {}",
        stderr_of(&out)
    );
}

#[test]
fn invalid_config_exits_1_and_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{ "n_providers": 0 }"#).unwrap();
    let out = bin().args(["run", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr_of(&out).contains("n_providers"),
        "diagnostic must name the offending field: {}",
        stderr_of(&out)
    );
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("typo.json");
    std::fs::write(&path, r#"{ "n_provider": 3 }"#).unwrap();
    let out = bin().args(["run", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr_of(&out).contains("n_provider"),
        "diagnostic must echo the unknown key: {}",
        stderr_of(&out)
    );
}

#[test]
fn run_reports_json_and_repeats_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), &small_config());
    let invoke = || {
        let out = bin()
            .args(["run", "--config"])
            .arg(&cfg_path)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
        out.stdout
    };
    let first = invoke();
    assert_eq!(first, invoke());
    let parsed: serde_json::Value = serde_json::from_slice(&first).unwrap();
    assert!(parsed["aggregate"]["R_BL"].is_number());
    assert!(parsed["per_provider"].as_array().unwrap().len() == 2);
}

#[test]
fn seed_flag_overrides_the_config_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), &small_config());
    let out = bin()
        .args(["run", "--seed", "77", "--config"])
        .arg(&cfg_path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let parsed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(parsed["seed"], 77);
}

#[test]
fn run_writes_report_and_traces_to_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), &small_config());
    let report = dir.path().join("report.csv");
    let trace = dir.path().join("events.csv");
    let messages = dir.path().join("messages.csv");
    let out = bin()
        .args(["run", "--format", "csv"])
        .args(["--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(&report)
        .arg("--trace")
        .arg(&trace)
        .arg("--message-trace")
        .arg(&messages)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    assert!(out.stdout.is_empty(), "--out must redirect the report");

    let report = std::fs::read_to_string(&report).unwrap();
    assert!(report.starts_with(
        "scope,provider,R_BL,eta_sys,eta_s,c_e,interference_mhz,arrivals,accepted,blocked,processed"
    ));
    let trace = std::fs::read_to_string(&trace).unwrap();
    assert!(trace.starts_with("time,kind,provider,cell,channel,call,holding,outcome"));
    assert!(trace.lines().count() > 1, "event trace must contain rows");
    let messages = std::fs::read_to_string(&messages).unwrap();
    assert!(messages.starts_with("time,msg_type,src,dst,request_id,entry_count"));
}

#[test]
fn sweep_writes_rows_and_summary_files() {
    let dir = tempfile::tempdir().unwrap();
    let spec = serde_json::json!({
        "parameter": "mean_rate_scale",
        "values": [0.5, 1.0],
        "provider_groups": [1, 2],
        "replications": 3,
        "base_config": small_config(),
    });
    let spec_path = dir.path().join("spec.json");
    std::fs::write(&spec_path, serde_json::to_string_pretty(&spec).unwrap()).unwrap();
    let rows_path = dir.path().join("sweep.csv");
    let out = bin()
        .args(["sweep", "--spec"])
        .arg(&spec_path)
        .arg("--out")
        .arg(&rows_path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));

    let rows = std::fs::read_to_string(&rows_path).unwrap();
    assert_eq!(
        rows.lines().count(),
        1 + 2 * 2 * 3,
        "header plus values x groups x replications"
    );
    let summary = std::fs::read_to_string(dir.path().join("sweep.summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 2 * 2);
}

#[test]
fn invalid_sweep_spec_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("spec.json");
    std::fs::write(&spec_path, r#"{ "parameter": "n_nodes", "values": [] }"#).unwrap();
    let out = bin()
        .args(["sweep", "--spec"])
        .arg(&spec_path)
        .arg("--out")
        .arg(dir.path().join("out.csv"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr_of(&out).contains("values"),
        "diagnostic must point at the empty values list: {}",
        stderr_of(&out)
    );
}

#[test]
fn compare_reports_paired_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), &small_config());
    let out = bin()
        .args(["compare", "--reps", "4", "--config"])
        .arg(&cfg_path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    let parsed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(parsed["summary"]["replications"], 4);
    assert_eq!(parsed["pairs"].as_array().unwrap().len(), 4);
    let better = parsed["summary"]["sharing_better"].as_u64().unwrap();
    let worse = parsed["summary"]["sharing_worse"].as_u64().unwrap();
    let ties = parsed["summary"]["ties"].as_u64().unwrap();
    assert_eq!(better + worse + ties, 4);
}
