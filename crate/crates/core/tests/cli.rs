use std::path::Path;
use std::process::{Command, Output};

fn sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_babylon-sim")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn honest_run_exits_zero() {
    let o = sim(&["run", "--scenario", "honest", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("honest seed 1: ok"));
    assert!(!stdout(&o).contains(" fail "));
}

#[test]
fn declared_liveness_failure_exits_zero() {
    let o = sim(&["--scenario", "half_split", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("thm6_liveness_bound    fail"));
}

#[test]
fn baseline_flag_runs_without_bitcoin() {
    let o = sim(&["--scenario", "posterior_corruption", "--baseline", "--checks", "thm2_slashable_safety,btc_contract"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("thm2_slashable_safety  fail"));
    assert!(out.contains("btc_contract           n/a"));
}

#[test]
fn undeclared_failure_exits_one() {
    let o = sim(&["--scenario", "honest", "--checks", "btc_growth_cap"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("UNEXPECTED"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(sim(&["--scenario", "nope"]).status.code(), Some(2));
    assert_eq!(sim(&["--scenario", "honest", "--checks", "nope"]).status.code(), Some(2));
    assert_eq!(sim(&["--scenario", "honest", "--finality", "medium"]).status.code(), Some(2));
    assert_eq!(sim(&["--seed", "1"]).status.code(), Some(2));
}

#[test]
fn batch_writes_one_trace_per_seed_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let out = |d: &Path| {
        let o = sim(&["--scenario", "honest", "--seeds", "3", "--seed", "4", "--out", d.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
    };
    out(dir.path());
    for s in 4..7 {
        assert!(dir.path().join(format!("honest-seed{s}.ndjson")).exists());
    }
    let summary = std::fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.ends_with("3 runs, 3 as expected\n"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 3);
    let again = tempfile::tempdir().unwrap();
    out(again.path());
    for s in 4..7 {
        let f = format!("honest-seed{s}.ndjson");
        assert_eq!(std::fs::read(dir.path().join(&f)).unwrap(), std::fs::read(again.path().join(&f)).unwrap());
    }
}

#[test]
fn config_file_sets_timing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("slow.toml");
    std::fs::write(&cfg, "delta = 2\nk = 3\nbtc_interval = 5\nseed = 9\n").unwrap();
    let o = sim(&["--scenario", "honest", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let trace = std::fs::read_to_string(dir.path().join("honest-seed9.ndjson")).unwrap();
    let first: serde_json::Value = serde_json::from_str(trace.lines().next().unwrap()).unwrap();
    assert_eq!(first["detail"]["cfg"]["delta"], 2);
    assert_eq!(first["detail"]["r_fin"], 5 * 5 + 2);
}

#[test]
fn finality_flag_picks_client_rules() {
    let dir = tempfile::tempdir().unwrap();
    let o = sim(&["--scenario", "honest", "--finality", "slow", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let trace = std::fs::read_to_string(dir.path().join("honest-seed1.ndjson")).unwrap();
    let first: serde_json::Value = serde_json::from_str(trace.lines().next().unwrap()).unwrap();
    assert!(first["detail"]["clients"].as_array().unwrap().iter().all(|c| c["finality"] == "slow"));
}

#[test]
fn list_names_scenarios_and_checks() {
    let o = sim(&["list"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("data_unavailability"));
    assert!(stdout(&o).contains("btc_growth_cap"));
}
