use std::path::Path;
use std::process::{Command, Output};

use decision_boost_cli::plot::emit_plots;
use decision_boost_cli::results::read_csv;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_decision-boost"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn")
}

fn csv_without_runtime(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string())
        .collect()
}

fn small_run(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "run", "--problem", "qp", "--qp-dz", "6", "--m-train", "30", "--m-test", "30", "--n-trees", "4", "--out",
    ];
    args.push(out.to_str().unwrap());
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn one_trial_one_method_row_count() {
    let dir = tempfile::tempdir().unwrap();
    let o = small_run(dir.path(), &["--trials", "1", "--methods", "spot"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_csv(&dir.path().join("results.csv")).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].split, "train");
    assert_eq!(rows[1].split, "test");
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn rerun_is_identical_apart_from_runtime() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let flags = ["--trials", "2", "--depth", "0,1", "--seed", "3"];
    assert!(small_run(a.path(), &flags).status.success());
    assert!(small_run(b.path(), &[&flags[..], &["--jobs", "2"]].concat()).status.success());
    let ca = csv_without_runtime(&a.path().join("results.csv"));
    assert_eq!(ca.len(), 1 + 2 * 2 * 6 * 2);
    assert_eq!(ca, csv_without_runtime(&b.path().join("results.csv")));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"seed": 4, "trials": 1, "methods": ["cart"], "boost": {"eps_loss": 0.001}}"#).unwrap();
    let out = dir.path().join("out");
    let o = small_run(&out, &["--config", cfg.to_str().unwrap(), "--seed", "9"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["seed"], 9);
    assert_eq!(m["config"]["trials"], 1);
    assert_eq!(m["config"]["boost"]["eps_loss"], 0.001);
    assert_eq!(m["config"]["boost"]["eps_beta"], 1e-4);
}

#[test]
fn manifest_config_reproduces_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    assert!(small_run(&first, &["--trials", "1", "--methods", "cart,dboost"]).status.success());
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(first.join("manifest.json")).unwrap()).unwrap();
    let mut cfg = m["config"].clone();
    let second = dir.path().join("second");
    cfg["out"] = serde_json::Value::String(second.to_str().unwrap().into());
    let cfg_path = dir.path().join("cfg.json");
    std::fs::write(&cfg_path, cfg.to_string()).unwrap();
    assert!(run(&["run", "--config", cfg_path.to_str().unwrap()]).status.success());
    assert_eq!(
        csv_without_runtime(&first.join("results.csv")),
        csv_without_runtime(&second.join("results.csv"))
    );
}

#[test]
fn usage_errors() {
    for args in [
        &["run", "--tau", "0.7"][..],
        &["run", "--no-such-flag"],
        &["run", "--methods", "xgboost"],
        &["run", "--edge-exponent", "sideways"],
        &["frobnicate"],
    ] {
        let o = run(args);
        assert_eq!(o.status.code(), Some(64), "{args:?}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"), "{args:?}");
    }
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"sede": 1}"#).unwrap();
    assert_eq!(run(&["run", "--config", cfg.to_str().unwrap()]).status.code(), Some(64));
}

#[test]
fn any_tau_when_allowed() {
    let dir = tempfile::tempdir().unwrap();
    let o = small_run(dir.path(), &["--tau", "0.7", "--allow-any-tau", "--trials", "1", "--methods", "cart"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn plots_regenerate_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = small_run(dir.path(), &["--trials", "2", "--depth", "0,1", "--plot", "--tau", "0.5"]);
    assert!(o.status.success());
    let svg = dir.path().join("boxplot_qp_tau0p5.svg");
    let original = std::fs::read(&svg).unwrap();
    assert!(String::from_utf8_lossy(&original).starts_with("<svg"));
    let rows = read_csv(&dir.path().join("results.csv")).unwrap();
    let again = tempfile::tempdir().unwrap();
    let files = emit_plots(&rows, again.path()).unwrap();
    assert_eq!(files.len(), 1);
    assert_eq!(std::fs::read(&files[0]).unwrap(), original);
}

#[test]
fn partial_failure_exits_2_and_is_annotated() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "run", "--problem", "portfolio", "--portfolio-dz", "4", "--m-train", "10", "--m-test", "10", "--trials", "1",
        "--methods", "cart", "--max-iter", "1", "--plot", "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_csv(&dir.path().join("results.csv")).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.failed() && r.stop_reason == "failed"));
    let svg = std::fs::read_to_string(dir.path().join("boxplot_portfolio_tau0.svg")).unwrap();
    assert!(svg.contains("1 failed"));
}

#[test]
fn motivating_writes_traces_and_curves() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "run", "--problem", "motivating", "--m-train", "60", "--curve-points", "11", "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_csv(&dir.path().join("results.csv")).unwrap();
    assert_eq!(rows.len(), 2);
    let trace = std::fs::read_to_string(dir.path().join("loss_trace.csv")).unwrap();
    let stages: usize = rows.iter().map(|r| r.n_trees + 1).sum();
    assert_eq!(trace.lines().count(), 1 + stages);
    let curve = std::fs::read_to_string(dir.path().join("prediction_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 1 + 11);
    assert!(!curve.contains("-0e0"));
}

#[test]
fn solve_problem_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("p.json");
    std::fs::write(
        &file,
        r#"{"format":"qcp-problem","version":1,"n_z":2,"n_y":3,"P":[1,0,0,1],"c":[-1,0],
           "A":[1,1,-1,0,0,-1],"b":[1,0,0],
           "cone":[{"type":"zero","dim":1},{"type":"non_neg","dim":2}]}"#,
    )
    .unwrap();
    let o = run(&["solve", file.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let sol: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(sol["format"], "qcp-solution");
    assert!((sol["z"][0].as_f64().unwrap() - 1.0).abs() < 1e-7);
    assert!(!run(&["solve", dir.path().join("missing.json").to_str().unwrap()]).status.success());
}

#[test]
fn check_subcommand_green() {
    let o = run(&["check"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(!String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}
