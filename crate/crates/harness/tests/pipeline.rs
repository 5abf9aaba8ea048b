use purl_core::envs::Task;
use purl_core::rewardlearn::Method;
use purl_harness::chart::{emit_chart, ChartInput};
use purl_harness::config::ExperimentConfig;
use purl_harness::experiment::run_experiment;
use purl_harness::gap::domain_gap_study;
use purl_harness::metrics::{Summary, METRICS_HEADER};
use purl_harness::sweep::{sweep, SweepParam, SweepSpec};

fn small(method: Method) -> ExperimentConfig {
    let mut c = ExperimentConfig::for_method(Task::Carry, method);
    c.purl.steps = 800;
    c.purl.eval_interval = 400;
    c.purl.eval_episodes = 3;
    c.demo_count = 5;
    c.annotation_count = 6;
    c.holdout_count = 3;
    c.reward_steps = 50;
    c.ensemble_size = 2;
    c.seeds = vec![3, 4];
    c
}

#[test]
fn per_seed_csvs_are_byte_identical_across_runs() {
    for method in [Method::NnPuGail, Method::NnPurl, Method::PrlEnsemble, Method::Oracle] {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        run_experiment(&small(method), Some(a.path())).unwrap();
        run_experiment(&small(method), Some(b.path())).unwrap();
        for f in ["metrics_seed3.csv", "metrics_seed4.csv", "aggregate.csv"] {
            let x = std::fs::read(a.path().join(f)).unwrap();
            assert_eq!(x, std::fs::read(b.path().join(f)).unwrap(), "{method} {f}");
        }
    }
}

#[test]
fn metrics_csv_has_the_documented_header_and_steps() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&small(Method::NnPuGail), Some(dir.path())).unwrap();
    let text = std::fs::read_to_string(dir.path().join("metrics_seed3.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), METRICS_HEADER.join(","));
    let steps: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(steps, ["0", "400", "800"]);
}

#[test]
fn singleton_sweep_equals_a_single_run() {
    let base = small(Method::NnPuGail);
    let spec = SweepSpec { param: SweepParam::Eta, values: vec![0.3], base: base.clone() };
    let points = sweep(&spec, None).unwrap();
    let direct = run_experiment(&ExperimentConfig { purl: purl_core::rewardlearn::PurlConfig { eta: 0.3, ..base.purl }, ..base }, None)
        .unwrap();
    assert_eq!(points.len(), 1);
    assert_eq!(points[0].result.aggregate, direct.aggregate);
}

#[test]
fn sweep_rejects_empty_and_invalid_grids() {
    let base = small(Method::NnPuGail);
    assert!(sweep(&SweepSpec { param: SweepParam::Eta, values: vec![], base: base.clone() }, None).is_err());
    assert!(sweep(&SweepSpec { param: SweepParam::Eta, values: vec![0.5, 1.2], base: base.clone() }, None).is_err());
    assert!(sweep(&SweepSpec { param: SweepParam::Beta, values: vec![-1.0], base }, None).is_err());
}

#[test]
fn sweep_writes_one_directory_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let mut base = small(Method::NnPuGail);
    base.seeds = vec![0];
    sweep(&SweepSpec { param: SweepParam::Beta, values: vec![0.0, 0.5], base }, Some(dir.path())).unwrap();
    assert!(dir.path().join("beta_0/aggregate.csv").exists());
    assert!(dir.path().join("beta_0.5/aggregate.csv").exists());
    let table = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert!(table.starts_with("beta,step,n_seeds,"));
    // final point of each value
    assert_eq!(table.lines().count(), 1 + 2);
}

#[test]
fn gap_study_covers_both_conditions() {
    let dir = tempfile::tempdir().unwrap();
    let mut base = small(Method::Oracle);
    base.seeds = vec![0];
    let study = domain_gap_study(&base, &[Method::Gail, Method::NnPurl], Some(dir.path())).unwrap();
    assert_eq!(study.arms.len(), 2);
    for d in ["GAIL_gap0", "GAIL_gap1", "NNPURL_gap0", "NNPURL_gap1"] {
        assert!(dir.path().join(d).join("aggregate.csv").exists(), "{d}");
    }
    let table = std::fs::read_to_string(dir.path().join("gap_study.csv")).unwrap();
    assert!(table.starts_with("method,family,no_gap_true_return,gap_true_return,drop,retention"));
    assert_eq!(table.lines().count(), 1 + 2 + 2);
}

#[test]
fn charts_are_deterministic_and_complete() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("NNPUGAIL"), dir.path().join("ORACLE"));
    run_experiment(&small(Method::NnPuGail), Some(&a)).unwrap();
    run_experiment(&small(Method::Oracle), Some(&b)).unwrap();
    let inputs = [ChartInput::from_path(&a.join("aggregate.csv")), ChartInput::from_path(&b.join("aggregate.csv"))];
    let (p, q) = (dir.path().join("p.svg"), dir.path().join("q.svg"));
    emit_chart(&inputs, "step", &["true_return"], &p).unwrap();
    emit_chart(&inputs, "step", &["true_return"], &q).unwrap();
    let svg = std::fs::read_to_string(&p).unwrap();
    assert_eq!(svg, std::fs::read_to_string(&q).unwrap());
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert_eq!(svg.matches("class=\"series\"").count(), 2);
    assert_eq!(svg.matches("class=\"band\"").count(), 2);
    assert!(svg.contains("NNPUGAIL") && svg.contains("ORACLE"));
    assert!(emit_chart(&inputs, "step", &["missing"], &p).is_err());
}

#[test]
fn confidence_interval_is_normal_approximation() {
    let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]).unwrap();
    // sample sd sqrt(5/3), half-width 1.96 sd / 2
    let half = 1.96 * (5.0f64 / 3.0).sqrt() / 2.0;
    assert!((s.mean - 2.5).abs() < 1e-15);
    assert!((s.hi - 2.5 - half).abs() < 1e-12 && (2.5 - s.lo - half).abs() < 1e-12);
    let one = Summary::of(&[7.0]).unwrap();
    assert_eq!((one.lo, one.hi), (7.0, 7.0));
    assert!(Summary::of(&[]).is_none());
}
