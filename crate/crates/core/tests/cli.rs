//! The `tslim` binary end to end on small jobs.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn tslim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tslim")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = tslim(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn case() -> String {
    concat!(env!("CARGO_MANIFEST_DIR"), "/data/ieee39.json").to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn powerflow_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("pf");
    ok(&["powerflow", &case(), "--out", s(&out)]);
    let first = std::fs::read(out.join("powerflow.json")).unwrap();
    ok(&["powerflow", &case(), "--out", s(&out)]);
    assert_eq!(first, std::fs::read(out.join("powerflow.json")).unwrap());
    let v: serde_json::Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(v["v_mag"].as_array().unwrap().len(), 39);
}

#[test]
fn simulate_then_fit_zip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let zip = write(d, "zip.json", r#"{"type": "zip", "p1c": 0.2, "p2c": 0.3, "p3c": 0.5, "q1c": 0.4, "q2c": 0.3, "q3c": 0.3}"#);
    let sim = d.join("sim");
    ok(&[
        "simulate", &case(), "--fault-bus", "6", "--t-end", "1.5", "--monitor", "20",
        "--model", &format!("20={}", s(&zip)), "--out", s(&sim),
    ]);
    let verdict = std::fs::read_to_string(sim.join("verdict.json")).unwrap();
    assert!(verdict.contains("Stable"), "{verdict}");

    let job = write(
        d,
        "job.json",
        &format!(
            r#"{{"reference": "{}", "bus": 20, "target": {{"name": "ZIP", "family": "ZIP"}},
               "fit": {{"hyper": {{"episodes": 20, "max_steps_per_episode": 20}}, "stage_two_draws": 1}}, "seed": 5}}"#,
            s(&sim.join("trajectory.csv"))
        ),
    );
    let fit = d.join("fit");
    let out = ok(&["fit", s(&job), "--out", s(&fit)]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("RMSE_P"));
    for f in ["candidates.json", "fitted.json", "fit.csv", "convergence.csv"] {
        assert!(fit.join(f).exists(), "{f} missing");
    }
    let conv = std::fs::read_to_string(fit.join("convergence.csv")).unwrap();
    assert_eq!(conv.lines().count(), 21);

    let ranked = d.join("rank");
    ok(&[
        "rank", s(&fit.join("candidates.json")), "--reference", s(&sim.join("trajectory.csv")),
        "--bus", "20", "--out", s(&ranked),
    ]);
    let csv = std::fs::read_to_string(ranked.join("ranked.csv")).unwrap();
    assert!(csv.starts_with("rank,pinball,mean_loss,composition\n1,"));
}

#[test]
fn assess_and_trend_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let study = write(
        d,
        "study.json",
        r#"{"name": "short", "source_gens": [30, 37, 38], "sink_bus": 20, "delta_p": 100, "p_cap": 1480,
            "contingencies": [[16, 17], [16, 21]], "check_thermal": false, "assume_monotone": true}"#,
    );
    let lim = d.join("limits");
    for p in ["100P", "30Z30I40P"] {
        ok(&["assess", &case(), s(&study), "--preset", p, "--out", s(&lim)]);
    }
    let report = d.join("report");
    ok(&[
        "trend-report", s(&lim.join("100p.json")), s(&lim.join("30z30i40p.json")), "--out", s(&report),
    ]);
    let csv = std::fs::read_to_string(report.join("transfer_limits.csv")).unwrap();
    assert!(csv.starts_with("study,p_max[100P],p_max[30Z30I40P],ordering"), "{csv}");
    assert!(csv.lines().nth(1).unwrap().starts_with("short,"));
}

#[test]
fn stage_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "spec.json", r#"{"case": "missing.json"}"#);
    let out = tslim(&["pipeline", s(&spec)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("spec"));
    let out = tslim(&["powerflow", "no/such/case.json"]);
    assert!(!out.status.success());
}
