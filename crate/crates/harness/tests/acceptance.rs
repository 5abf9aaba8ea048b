//! Acceptance criteria, one test each. Every test writes a PASS/FAIL line
//! straight to stderr so the verdicts appear even when output is captured.

use std::io::Write;
use std::sync::OnceLock;

use purl_core::envs::Task;
use purl_core::rewardlearn::Method;
use purl_harness::config::ExperimentConfig;
use purl_harness::experiment::{run_experiment, ExperimentResult};
use purl_harness::gap::{domain_gap_study, Family, GapStudy, GAP_METHODS};
use purl_harness::metrics::{aggregate_hacking, AggregateRow};
use purl_harness::pubench::{clamp_check, gradient_check, identity_check, unbiasedness_check, GaussianTask, Mixture1d};
use purl_harness::sweep::{sweep, SweepParam, SweepSpec};

/// Population PN risk of the default 1-D mixture and scorer, by adaptive
/// quadrature over the real line (scipy.integrate.quad, abs. error 6e-15).
const MIXTURE_PN_RISK: f64 = 0.3701043830638873;

const POLICY_STEPS: usize = 50_000;
const PROBE_STEPS: usize = 20_000;

fn verdict(n: usize, name: &str, passed: bool, detail: &str) {
    let line = format!("{} criterion {n} ({name}): {detail}\n", if passed { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn carry(method: Method, gap: bool) -> ExperimentConfig {
    let mut c = ExperimentConfig::for_method(Task::Carry, method);
    c.purl.steps = POLICY_STEPS;
    c.domain_gap = gap;
    c
}

fn last(result: &ExperimentResult) -> &AggregateRow {
    result.final_row().expect("runs evaluate at least once")
}

fn final_mean(result: &ExperimentResult, column: &str) -> f64 {
    last(result).mean(column).unwrap_or(f64::NAN)
}

fn gap_study() -> &'static GapStudy {
    static STUDY: OnceLock<GapStudy> = OnceLock::new();
    STUDY.get_or_init(|| domain_gap_study(&carry(Method::Oracle, false), &GAP_METHODS, None).unwrap())
}

#[test]
fn criterion_01_estimator_identities() {
    let r = identity_check(100, 1).unwrap();
    let passed = r.max_pu_gap <= 1e-12 && r.max_pnu_gap <= 1e-12;
    verdict(1, "estimator identities", passed, &format!("max |uPU-PN| {:.2e}, max |PNU-PN| {:.2e}", r.max_pu_gap, r.max_pnu_gap));
    assert!(passed);
}

#[test]
fn criterion_02_unbiasedness() {
    let mixture = Mixture1d::default();
    assert!((mixture.population_pn_risk() - MIXTURE_PN_RISK).abs() < 1e-10);
    let r = unbiasedness_check(&mixture, 10_000, 50, 200, 2).unwrap();
    let z = (r.mean_estimate - MIXTURE_PN_RISK).abs() / r.standard_error;
    let passed = z <= 3.0;
    verdict(
        2,
        "unbiasedness",
        passed,
        &format!("mean {:.6}, population {MIXTURE_PN_RISK:.6}, {z:.2} standard errors", r.mean_estimate),
    );
    assert!(passed);
}

#[test]
fn criterion_03_gradient_fidelity() {
    let r = gradient_check(20, 3).unwrap();
    let passed = r.results.iter().all(|&(_, n, err)| n >= 20 && err <= 1e-4);
    let detail: Vec<String> = r.results.iter().map(|(t, n, e)| format!("{t:?} {n} cases {e:.1e}")).collect();
    verdict(3, "gradient fidelity", passed, &detail.join(", "));
    assert!(passed);
}

#[test]
fn criterion_04_clamp_contract() {
    let r = clamp_check(2000, 4).unwrap();
    let passed = r.active > 0 && r.bound_violations == 0 && r.equality_mismatches == 0 && r.large_beta_identical;
    verdict(
        4,
        "clamp contract",
        passed,
        &format!(
            "{} clamped of {}, {} violations, {} mismatches, large slack bit-identical {}",
            r.active, r.trials, r.bound_violations, r.equality_mismatches, r.large_beta_identical
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_05_gaussian_pu_classification() {
    let r = GaussianTask::default().run(5).unwrap();
    let passed = (r.pn_accuracy - r.nnpu_accuracy).abs() <= 0.05;
    verdict(5, "2-D Gaussian PU", passed, &format!("nnPU {:.4}, PN oracle {:.4}", r.nnpu_accuracy, r.pn_accuracy));
    assert!(passed);
}

#[test]
fn criterion_06_discriminator_overfitting() {
    let probe = |method| {
        let mut c = carry(method, true);
        c.purl.steps = PROBE_STEPS;
        c.buffer_success_fraction = Some(0.5);
        run_experiment(&c, None).unwrap()
    };
    let pn = probe(Method::Gail);
    let nn = probe(Method::NnPuGail);
    let pn_gap = final_mean(&pn, "sig_train_expert") - final_mean(&pn, "sig_holdout_expert");
    let nn_hold = final_mean(&nn, "sig_holdout_expert");
    let nn_replay = final_mean(&nn, "pos_replay");
    let passed = pn_gap >= 0.2 && nn_hold >= 0.9 && (nn_replay - 0.5).abs() <= 0.1;
    verdict(
        6,
        "discriminator overfitting",
        passed,
        &format!("PN train-holdout sigmoid gap {pn_gap:.3}, nnPU holdout sigmoid {nn_hold:.3}, nnPU replay PoS {nn_replay:.3} vs 0.5"),
    );
    assert!(passed);
}

#[test]
fn criterion_07_imitation_outcome() {
    let mut nn = carry(Method::NnPuGail, false);
    nn.purl.eta = 0.25;
    let nn = final_mean(&run_experiment(&nn, None).unwrap(), "success_rate");
    let plain = final_mean(&run_experiment(&carry(Method::GailNoReg, false), None).unwrap(), "success_rate");
    let oracle = final_mean(&run_experiment(&carry(Method::Oracle, false), None).unwrap(), "success_rate");
    let passed = nn >= 0.8 && nn > plain && oracle >= 0.9;
    verdict(
        7,
        "imitation outcome",
        passed,
        &format!("NNPUGAIL success {nn:.3}, GAIL-no-reg {plain:.3}, oracle {oracle:.3}"),
    );
    assert!(passed);
}

#[test]
fn criterion_08_reward_delusion() {
    let prl = run_experiment(&carry(Method::Prl, true), None).unwrap();
    let oracle = final_mean(&run_experiment(&carry(Method::Oracle, true), None).unwrap(), "true_return");
    let nn = &gap_study().arm(Method::NnPurl).unwrap().gap;
    let prl_hacks = aggregate_hacking(&prl.aggregate);
    let nn_hacks = aggregate_hacking(&nn.aggregate);
    let nn_return = final_mean(nn, "true_return");
    let passed = prl_hacks.is_some() && nn_hacks.is_none() && nn_return >= 0.8 * oracle;
    verdict(
        8,
        "reward delusion",
        passed,
        &format!(
            "PRL hacking between steps {prl_hacks:?}, NNPURL hacking {nn_hacks:?}, NNPURL true return {nn_return:.3} vs oracle {oracle:.3}"
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_09_eta_sweep_shape() {
    let mut base = carry(Method::NnPuGail, false);
    base.purl.steps = PROBE_STEPS;
    base.buffer_success_fraction = Some(0.5);
    let spec = SweepSpec { param: SweepParam::Eta, values: vec![0.1, 0.3, 0.5, 0.7, 0.9], base };
    let points = sweep(&spec, None).unwrap();
    let at = |eta: f64| {
        let row = points.iter().find(|p| p.value == eta).unwrap().final_row();
        (row.mean("sig_holdout_expert").unwrap(), row.mean("sig_holdout_failure").unwrap())
    };
    // a failure state is classified correctly when its sigmoid is below 0.5
    let (lo_exp, lo_fail) = at(0.1);
    let (mid_exp, mid_fail) = at(0.5);
    let (hi_exp, hi_fail) = at(0.9);
    let passed = lo_exp < 0.5 && hi_fail > 0.5 && mid_exp > 0.5 && mid_fail < 0.5;
    verdict(
        9,
        "eta sweep shape",
        passed,
        &format!(
            "expert/failure sigmoid at eta 0.1: {lo_exp:.3}/{lo_fail:.3}, 0.5: {mid_exp:.3}/{mid_fail:.3}, 0.9: {hi_exp:.3}/{hi_fail:.3}"
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_10_domain_gap_robustness() {
    let study = gap_study();
    let nn = study.arm(Method::NnPurl).unwrap();
    let (pn_drop, nn_drop) = (study.family_drop(Family::Pn), study.family_drop(Family::NnPu));
    let passed = nn.retention() >= 0.8 && pn_drop > nn_drop;
    let arms: Vec<String> = study
        .arms
        .iter()
        .map(|a| {
            let (off, on) = a.returns();
            format!("{} {off:.3}->{on:.3}", a.method)
        })
        .collect();
    verdict(
        10,
        "domain-gap robustness",
        passed,
        &format!(
            "NNPURL retention {:.3}, PN-family drop {pn_drop:.3}, nnPU-family drop {nn_drop:.3} ({})",
            nn.retention(),
            arms.join(", ")
        ),
    );
    assert!(passed);
}
