use std::fs;
use std::process::{Command, Output};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pi-surrogate")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = cli(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn design_train_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    ok(&["design", "--testbed", "gravity", "--n", "20", "--seed", "2", "--maximin-budget", "2000", "--evaluate", "--out", &p("train")]);
    let csv = fs::read_to_string(p("train/design_1.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "y0,V0,t,g,y");
    assert_eq!(csv.lines().count(), 21);
    ok(&["train", "--data", &p("train/design_1.csv"), "--output", "y", "--kernel", "squared-exponential", "--starts", "3", "--out", &p("m.json")]);
    ok(&["design", "--testbed", "gravity", "--n", "5", "--seed", "9", "--maximin-budget", "100", "--out", &p("pts")]);
    ok(&["predict", "--model", &p("m.json"), "--points", &p("pts/design_1.csv"), "--out", &p("pred.csv")]);
    let pred = fs::read_to_string(p("pred.csv")).unwrap();
    assert_eq!(pred.lines().next().unwrap(), "mean,std_error");
    assert_eq!(pred.lines().count(), 6);
    let out = ok(&["fanova", "--model", &p("m.json"), "--grid", "32", "--out", &p("fa")]);
    assert!(out.contains("effect"));
    assert!(fs::read_to_string(p("fa/fanova_1.csv")).unwrap().starts_with("effect,percent"));
}

#[test]
fn run_writes_records_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let text = ok(&[
        "run", "--testbed", "pythagorean", "--strategies", "non-da,fanova-da", "--n", "8", "--replicates", "2", "--test-size", "50",
        "--mode", "extrapolation", "--seed", "3", "--out", out,
    ]);
    assert!(text.contains("fanova-da"));
    let records = fs::read_to_string(dir.path().join("records.csv")).unwrap();
    assert_eq!(records.lines().count(), 1 + 2 * 2);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert!(summary.get("cells").is_some());
}

#[test]
fn spec_is_valid_toml_and_feeds_design() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("sphere.toml");
    fs::write(&spec, ok(&["spec", "--testbed", "sphere"])).unwrap();
    let csv = ok(&["design", "--spec", spec.to_str().unwrap(), "--n", "6", "--maximin-budget", "100"]);
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("R,r,t,T_m,Delta_T,h_c,k"), "{header}");
    assert!(header.contains("rho"));
}

#[test]
fn configuration_errors_exit_nonzero() {
    for args in [
        &["run", "--testbed", "gravity", "--n", "2"][..],
        &["run", "--testbed", "gravity", "--strategies", "t-da"][..],
        &["run", "--testbed", "nowhere"][..],
        &["predict", "--model", "/nonexistent/m.json", "--points", "/nonexistent/p.csv"][..],
        &["design", "--testbed", "gravity"][..],
    ] {
        let out = cli(args);
        assert!(!out.status.success(), "{args:?} succeeded");
    }
}
