use std::path::Path;
use std::process::Command;

fn purl(args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_purl")).args(args).output().unwrap().status.code().unwrap()
}

fn write(path: &Path, text: &str) -> String {
    std::fs::write(path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

const SMALL: &str = r#"{"steps": 600, "eval_interval": 300, "eval_episodes": 3, "demo_count": 5, "holdout_count": 3}"#;

#[test]
fn unknown_config_field_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir.path().join("c.json"), r#"{"etaa": 0.3}"#);
    assert_eq!(purl(&["run", "--config", &cfg, "--out", dir.path().to_str().unwrap()]), 2);
}

#[test]
fn malformed_json_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir.path().join("c.json"), "{\"eta\": ");
    assert_eq!(purl(&["run", "--config", &cfg]), 2);
}

#[test]
fn invalid_values_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir.path().join("c.json"), r#"{"eta": 1.5}"#);
    assert_eq!(purl(&["run", "--config", &cfg]), 2);
    let missing = dir.path().join("nope.json");
    assert_eq!(purl(&["run", "--config", missing.to_str().unwrap()]), 2);
    let ok = write(&dir.path().join("ok.json"), SMALL);
    assert_eq!(purl(&["sweep", "--config", &ok, "--param", "gamma"]), 2);
}

#[test]
fn run_then_plot_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir.path().join("c.json"), SMALL);
    let out = dir.path().join("run");
    assert_eq!(purl(&["run", "--config", &cfg, "--seeds", "2", "--out", out.to_str().unwrap()]), 0);
    for f in ["aggregate.csv", "metrics_seed0.csv", "metrics_seed1.csv", "success_seed0.csv", "config.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let agg = out.join("aggregate.csv");
    let svg = dir.path().join("c.svg");
    let code = purl(&["plot", agg.to_str().unwrap(), "--y", "true_return,success_rate", "--out", svg.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));
    let code = purl(&["plot", agg.to_str().unwrap(), "--y", "no_such_column", "--out", svg.to_str().unwrap()]);
    assert_eq!(code, 2);
}

#[test]
fn pubench_writes_its_table() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(purl(&["pubench", "--out", dir.path().to_str().unwrap()]), 0);
    let text = std::fs::read_to_string(dir.path().join("pubench.csv")).unwrap();
    assert!(text.starts_with("check,passed,detail\n"));
    assert!(text.lines().skip(1).all(|l| l.contains(",true,")), "{text}");
}
