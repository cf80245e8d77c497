use std::fs;
use std::process::{Command, Output};

fn safenav(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_safenav")).args(args).output().unwrap()
}

#[test]
fn gen_scenario_writes_loadable_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.json");
    let o = safenav(&["gen-scenario", "--seed", "5", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let text = fs::read_to_string(&out).unwrap();
    assert!(safenav::Scenario::from_json(&text).is_ok());
}

#[test]
fn run_writes_reports_and_traces() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let o = safenav(&[
        "run", "--method", "centroid", "--filter", "ekf", "--path", "P3", "--trials", "2", "--seed", "3", "--out", d,
        "--traces",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(csv.starts_with("method,filter,path,ade"));
    assert_eq!(csv.lines().count(), 2);
    assert!(dir.path().join("report.json").exists());
    assert_eq!(fs::read_dir(dir.path().join("traces")).unwrap().count(), 2);
}

#[test]
fn plan_writes_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("plan.json");
    let sc = safenav::Scenario::bundled();
    let central = sc.central_path("P1").unwrap();
    let (a, b) = (central.points()[0], central.points()[1]);
    let start = format!("{},{}", a.x, a.y);
    let goal = format!("{},{}", a.x + 0.2 * (b.x - a.x), a.y + 0.2 * (b.y - a.y));
    let o = safenav(&["plan", "--start", &start, "--goal", &goal, "--beta", "1", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert!(v["path"].as_array().unwrap().len() >= 2);
}

#[test]
fn metrics_of_identical_trajectories() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("t.csv");
    fs::write(&f, "x,y\n0,0\n5,0\n10,0\n").unwrap();
    let o = safenav(&["metrics", "--truth", f.to_str().unwrap(), "--est", f.to_str().unwrap()]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["ade"].as_f64().unwrap(), 0.0);
    assert_eq!(v["percent_error"].as_f64().unwrap(), 0.0);
}

#[test]
fn validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    assert_eq!(safenav(&["run", "--method", "zigzag", "--filter", "ekf", "--out", d]).status.code(), Some(2));
    assert_eq!(
        safenav(&["run", "--method", "chull", "--filter", "ekf", "--path", "P9", "--out", d]).status.code(),
        Some(2)
    );
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"unknown_key": 1}"#).unwrap();
    let o = safenav(&["run", "--scenario", bad.to_str().unwrap(), "--method", "chull", "--filter", "ekf", "--out", d]);
    assert_eq!(o.status.code(), Some(2));
    let missing = dir.path().join("nope.csv");
    let o = safenav(&["metrics", "--truth", missing.to_str().unwrap(), "--est", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
