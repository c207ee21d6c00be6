use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use reach_adp_cli::config::{Baseline, ExperimentConfig};
use reach_adp_cli::suites::{evaluation_spec, example1_config};

fn reach_adp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reach-adp")).args(args).output().unwrap()
}

fn small(samples: usize) -> ExperimentConfig {
    let mut ev = evaluation_spec(2, 8, 2);
    ev.baseline = Baseline::Grid;
    ev.grid_resolution = Some(100);
    ev.initial_states = Some(vec![vec![0.0], vec![0.5]]);
    example1_config(1, 6, samples, 9, Some(ev))
}

fn write_config(dir: &Path, name: &str, cfg: &ExperimentConfig) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, cfg.to_json()).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synthesize_evaluate_inspect() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "c.json", &small(300));
    let out = tmp.path().join("out");
    let r = reach_adp(&["synthesize", "--config", s(&config), "--out-dir", s(&out)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let stack = out.join("value_stack.txt");
    let r = reach_adp(&["evaluate", "--config", s(&config), "--stack", s(&stack), "--out-dir", s(&out)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));

    let mut csv = csv::Reader::from_path(out.join("evaluation.csv")).unwrap();
    let header: Vec<String> = csv.headers().unwrap().iter().map(String::from).collect();
    assert!(header.contains(&"abs_v_adp_minus_v_grid".to_string()));
    let v_adp = header.iter().position(|h| h == "v_adp").unwrap();
    let first = csv.records().next().unwrap().unwrap();
    assert_eq!(first[v_adp].parse::<f64>().unwrap(), 1.0);

    let r = reach_adp(&["inspect", "--stack", s(&stack)]);
    assert!(r.status.success());
    let text = String::from_utf8(r.stdout).unwrap();
    assert_eq!(text.matches("6 basis elements").count(), 5, "{text}");
}

#[test]
fn too_few_samples_exits_3_and_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "c.json", &small(3));
    let out = tmp.path().join("out");
    let r = reach_adp(&["synthesize", "--config", s(&config), "--out-dir", s(&out)]);
    assert_eq!(r.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&r.stderr).contains("unbounded at stage 4"));
    assert!(!out.exists());
}

#[test]
fn unknown_config_field_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let mut json: serde_json::Value = serde_json::from_str(&small(300).to_json()).unwrap();
    json["synthesis"]["colour"] = serde_json::json!("blue");
    let config = tmp.path().join("c.json");
    std::fs::write(&config, json.to_string()).unwrap();
    let r = reach_adp(&["synthesize", "--config", s(&config), "--out-dir", s(tmp.path())]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn stack_for_another_problem_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "c.json", &small(300));
    let mut other = small(300);
    other.problem.horizon = 4;
    let other = write_config(tmp.path(), "other.json", &other);
    let out = tmp.path().join("out");
    assert!(reach_adp(&["synthesize", "--config", s(&config), "--out-dir", s(&out)]).status.success());
    let eval_out = tmp.path().join("eval");
    let r = reach_adp(&[
        "evaluate",
        "--config",
        s(&other),
        "--stack",
        s(&out.join("value_stack.txt")),
        "--out-dir",
        s(&eval_out),
    ]);
    assert_eq!(r.status.code(), Some(2));
    assert!(!eval_out.exists());
}

#[test]
fn inspect_rejects_other_files() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_config(tmp.path(), "c.json", &small(300));
    assert_eq!(reach_adp(&["inspect", "--stack", s(&path)]).status.code(), Some(2));
}

#[test]
fn unknown_suite_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let r = reach_adp(&["benchmark", "--suite", "example9", "--out-dir", s(tmp.path())]);
    assert_eq!(r.status.code(), Some(2));
}
