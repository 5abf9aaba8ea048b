//! Statistical checks of the PU risk estimators on synthetic data: algebraic
//! identities, unbiasedness against a quadrature population risk, gradient
//! fidelity, the non-negativity clamp and a 2-D classification task.

use purl_core::diffnet::{adam_step, AdamConfig, AdamState, Mlp};
use purl_core::purisk::{
    mean_loss, nn_pu_risk, objective_step, pn_risk, pnu_risk, pu_risk_unbiased, squared_error_step, Branch,
    ClassPrior, Label, LabeledBatch, Objective, SlackBeta,
};
use purl_core::{softplus, Result};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

type Point = Vec<f64>;

fn random_net(rng: &mut ChaCha8Rng, dim: usize) -> Result<Mlp<f64>> {
    let hidden = rng.random_range(1..=3);
    let mut sizes = vec![dim];
    sizes.extend((0..hidden).map(|_| rng.random_range(2..=8)));
    sizes.push(1);
    let mut net = Mlp::new(&sizes, rng)?;
    // nonzero biases so the ReLUs are not all aligned at the origin
    for v in net.values_mut() {
        if *v == 0.0 {
            *v = rng.random_range(-0.5..0.5);
        }
    }
    Ok(net)
}

fn random_points(rng: &mut ChaCha8Rng, sizes: std::ops::RangeInclusive<usize>, dim: usize, shift: f64) -> Vec<Point> {
    let n = rng.random_range(sizes);
    (0..n)
        .map(|_| (0..dim).map(|_| shift + 2.0 * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect()
}

/// Largest deviations of the PU and PNU risks from the PN risk when the
/// unlabeled set is exactly the union of the labeled ones.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityReport {
    pub trials: usize,
    pub max_pu_gap: f64,
    pub max_pnu_gap: f64,
}

pub fn identity_check(trials: usize, seed: u64) -> Result<IdentityReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut max_pu_gap, mut max_pnu_gap) = (0.0f64, 0.0f64);
    for _ in 0..trials {
        let dim = rng.random_range(1..=6);
        let net = random_net(&mut rng, dim)?;
        let p = random_points(&mut rng, 1..=40, dim, 1.0);
        let n = random_points(&mut rng, 1..=40, dim, -1.0);
        let u: Vec<Point> = p.iter().chain(&n).cloned().collect();
        // the union has exactly this share of positives
        let eta = ClassPrior::new(p.len() as f64 / u.len() as f64)?;
        let (bp, bn, bu) = (LabeledBatch::positive(&p)?, LabeledBatch::negative(&n)?, LabeledBatch::unlabeled(&u)?);
        let pn = pn_risk(bp, bn, eta, &net)?;
        max_pu_gap = max_pu_gap.max((pu_risk_unbiased(bp, bu, eta, &net)? - pn).abs());
        max_pnu_gap = max_pnu_gap.max((pnu_risk(bp, bn, bu, eta, &net)? - pn).abs());
    }
    Ok(IdentityReport { trials, max_pu_gap, max_pnu_gap })
}

/// One-dimensional two-Gaussian mixture with a fixed linear scorer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mixture1d {
    pub eta: f64,
    pub pos_mean: f64,
    pub neg_mean: f64,
    pub sd: f64,
    pub weight: f64,
    pub bias: f64,
}

impl Default for Mixture1d {
    fn default() -> Self {
        Self { eta: 0.4, pos_mean: 1.0, neg_mean: -1.0, sd: 1.0, weight: 1.3, bias: -0.2 }
    }
}

impl Mixture1d {
    fn scorer(&self) -> Result<Mlp<f64>> {
        Mlp::from_layers(vec![purl_core::diffnet::Layer::from_parts(1, 1, vec![self.weight], vec![self.bias])?])
    }

    /// `eta E_P[softplus(-s)] + (1 - eta) E_N[softplus(s)]` by composite Simpson
    /// quadrature over twelve standard deviations either side.
    pub fn population_pn_risk(&self) -> f64 {
        let density = |x: f64, m: f64| {
            let z = (x - m) / self.sd;
            (-0.5 * z * z).exp() / (self.sd * (2.0 * std::f64::consts::PI).sqrt())
        };
        let integrand = |x: f64| {
            let s = self.weight * x + self.bias;
            self.eta * density(x, self.pos_mean) * softplus(-s)
                + (1.0 - self.eta) * density(x, self.neg_mean) * softplus(s)
        };
        let lo = self.pos_mean.min(self.neg_mean) - 12.0 * self.sd;
        let hi = self.pos_mean.max(self.neg_mean) + 12.0 * self.sd;
        let n = 20_000;
        let h = (hi - lo) / n as f64;
        let mut sum = integrand(lo) + integrand(hi);
        for i in 1..n {
            sum += integrand(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        sum * h / 3.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnbiasednessReport {
    pub resamples: usize,
    pub population_risk: f64,
    pub mean_estimate: f64,
    pub standard_error: f64,
}

impl UnbiasednessReport {
    /// Distance of the mean estimate from the population risk in standard errors.
    pub fn z(&self) -> f64 {
        (self.mean_estimate - self.population_risk).abs() / self.standard_error
    }
}

/// Mean of the empirical unbiased PU risk over independent resamples of
/// `n_pos` positives and `n_unl` unlabeled points.
pub fn unbiasedness_check(
    mixture: &Mixture1d,
    resamples: usize,
    n_pos: usize,
    n_unl: usize,
    seed: u64,
) -> Result<UnbiasednessReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = mixture.scorer()?;
    let eta = ClassPrior::new(mixture.eta)?;
    let pos = Normal::new(mixture.pos_mean, mixture.sd).map_err(|e| purl_core::Error::config(e.to_string()))?;
    let neg = Normal::new(mixture.neg_mean, mixture.sd).map_err(|e| purl_core::Error::config(e.to_string()))?;
    let mut estimates = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let p: Vec<[f64; 1]> = (0..n_pos).map(|_| [pos.sample(&mut rng)]).collect();
        let u: Vec<[f64; 1]> = (0..n_unl)
            .map(|_| [if rng.random::<f64>() < mixture.eta { pos.sample(&mut rng) } else { neg.sample(&mut rng) }])
            .collect();
        estimates.push(pu_risk_unbiased(LabeledBatch::positive(&p)?, LabeledBatch::unlabeled(&u)?, eta, &net)?);
    }
    let n = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / n;
    let var = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(UnbiasednessReport {
        resamples,
        population_risk: mixture.population_pn_risk(),
        mean_estimate: mean,
        standard_error: (var / n).sqrt(),
    })
}

/// Objective whose analytic gradient is compared against finite differences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GradTarget {
    Pn,
    Pu,
    NnPuFull,
    NnPuCorrection,
    Mse,
}

impl GradTarget {
    pub const ALL: [GradTarget; 5] =
        [GradTarget::Pn, GradTarget::Pu, GradTarget::NnPuFull, GradTarget::NnPuCorrection, GradTarget::Mse];
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    /// Configurations checked and worst relative error, per target.
    pub results: Vec<(GradTarget, usize, f64)>,
}

impl GradientReport {
    pub fn worst(&self) -> f64 {
        self.results.iter().map(|r| r.2).fold(0.0, f64::max)
    }
}

struct GradCase {
    net: Mlp<f64>,
    p: Vec<Point>,
    c: Vec<Point>,
    targets: Vec<f64>,
    eta: ClassPrior<f64>,
}

impl GradCase {
    fn new(rng: &mut ChaCha8Rng, target: GradTarget) -> Result<Self> {
        let dim = rng.random_range(1..=5);
        let net = random_net(rng, dim)?;
        let p = random_points(rng, 2..=16, dim, 0.5);
        let (c, eta) = if target == GradTarget::NnPuCorrection {
            // the lowest-scoring positives as unlabeled data with eta near one
            // make R^0(Du) < eta R^0(Dp)
            let mut scored: Vec<(f64, Point)> =
                p.iter().map(|x| Ok((net.forward(x)?, x.clone()))).collect::<Result<_>>()?;
            scored.sort_by(|a, b| a.0.total_cmp(&b.0));
            let keep = (p.len() / 2).max(1);
            (scored.into_iter().take(keep).map(|(_, x)| x).collect(), rng.random_range(0.97..=1.0))
        } else {
            (random_points(rng, 2..=16, dim, -0.5), rng.random_range(0.05..0.95))
        };
        let targets = (0..p.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        Ok(Self { net, p, c, targets, eta: ClassPrior::new(eta)? })
    }

    /// The scalar whose gradient the target's update rule follows.
    fn value(&self, target: GradTarget, net: &Mlp<f64>) -> Result<f64> {
        let sp = net.forward_batch(&self.p)?.scores().to_vec();
        let sc = net.forward_batch(&self.c)?.scores().to_vec();
        let e = self.eta.value();
        Ok(match target {
            GradTarget::Pn => e * mean_loss(&sp, Label::Positive) + (1.0 - e) * mean_loss(&sc, Label::Negative),
            GradTarget::Pu | GradTarget::NnPuFull => {
                e * mean_loss(&sp, Label::Positive) - e * mean_loss(&sp, Label::Negative)
                    + mean_loss(&sc, Label::Negative)
            }
            GradTarget::NnPuCorrection => e * mean_loss(&sp, Label::Negative) - mean_loss(&sc, Label::Negative),
            GradTarget::Mse => squared_error_step(net, &self.p, &self.targets)?.0,
        })
    }

    /// Analytic gradient, or `None` when the case landed on the other nn-PU branch.
    fn analytic(&self, target: GradTarget) -> Result<Option<Vec<f64>>> {
        let (bp, bc) = (LabeledBatch::positive(&self.p)?, LabeledBatch::unlabeled(&self.c)?);
        let grad = match target {
            GradTarget::Mse => squared_error_step(&self.net, &self.p, &self.targets)?.1,
            GradTarget::Pn => {
                objective_step(Objective::Pn, bp, LabeledBatch::negative(&self.c)?, self.eta, SlackBeta::zero(), &self.net)?
                    .gradient
            }
            GradTarget::Pu => objective_step(Objective::Pu, bp, bc, self.eta, SlackBeta::zero(), &self.net)?.gradient,
            GradTarget::NnPuFull | GradTarget::NnPuCorrection => {
                let step = objective_step(Objective::NnPu, bp, bc, self.eta, SlackBeta::zero(), &self.net)?;
                let want = if target == GradTarget::NnPuFull { Branch::Full } else { Branch::Correction };
                if step.branch != want {
                    return Ok(None);
                }
                step.gradient
            }
        };
        Ok(Some(grad.values().copied().collect()))
    }
}

/// Worst relative error `|a - f| / max(|a|, |f|, floor)` between analytic and
/// central-difference gradients over `configs` random cases per target.
pub fn gradient_check(configs: usize, seed: u64) -> Result<GradientReport> {
    const H: f64 = 1e-6;
    const FLOOR: f64 = 1e-7;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut results = Vec::new();
    for target in GradTarget::ALL {
        let (mut done, mut worst, mut attempts) = (0, 0.0f64, 0);
        while done < configs {
            attempts += 1;
            if attempts > 100 * configs {
                return Err(purl_core::Error::usage(format!("could not sample {target:?} cases")));
            }
            let case = GradCase::new(&mut rng, target)?;
            let Some(analytic) = case.analytic(target)? else { continue };
            for (i, a) in analytic.iter().enumerate() {
                let mut plus = case.net.clone();
                *plus.values_mut().nth(i).expect("gradient and parameters align") += H;
                let mut minus = case.net.clone();
                *minus.values_mut().nth(i).expect("gradient and parameters align") -= H;
                let fd = (case.value(target, &plus)? - case.value(target, &minus)?) / (2.0 * H);
                worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(FLOOR));
            }
            done += 1;
        }
        results.push((target, done, worst));
    }
    Ok(GradientReport { results })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClampReport {
    pub trials: usize,
    pub active: usize,
    /// Cases where the total fell below `eta R^1(Dp) - beta`.
    pub bound_violations: usize,
    /// Cases where equality with the bound and `correction_active` disagree.
    pub equality_mismatches: usize,
    /// Training with a huge slack reproduced unbiased-PU training bit for bit.
    pub large_beta_identical: bool,
}

pub fn clamp_check(trials: usize, seed: u64) -> Result<ClampReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut active, mut bound_violations, mut equality_mismatches) = (0, 0, 0);
    for _ in 0..trials {
        let dim = rng.random_range(1..=4);
        let net = random_net(&mut rng, dim)?;
        let (sp, su) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let p = random_points(&mut rng, 1..=20, dim, sp);
        let u = random_points(&mut rng, 1..=20, dim, su);
        let eta = ClassPrior::new(rng.random_range(0.0..=1.0))?;
        let beta = SlackBeta::new(if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..0.5) })?;
        let bd = nn_pu_risk(LabeledBatch::positive(&p)?, LabeledBatch::unlabeled(&u)?, eta, beta, &net)?;
        let bound = bd.positive_risk - beta.value();
        if bd.total < bound {
            bound_violations += 1;
        }
        if (bd.total == bound) != bd.correction_active {
            equality_mismatches += 1;
        }
        active += bd.correction_active as usize;
    }
    Ok(ClampReport { trials, active, bound_violations, equality_mismatches, large_beta_identical: large_beta_matches_pu(seed)? })
}

fn train_pu_family(objective: Objective, beta: SlackBeta<f64>, seed: u64) -> Result<Mlp<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = random_points(&mut rng, 64..=64, 2, 1.0);
    let u = random_points(&mut rng, 256..=256, 2, 0.0);
    let mut net = Mlp::new(&[2, 8, 8, 1], &mut rng)?;
    let mut adam = AdamState::new(&net, AdamConfig::with_lr(1e-2))?;
    let eta = ClassPrior::new(0.3)?;
    for _ in 0..200 {
        let bp: Vec<Point> = p.choose_multiple(&mut rng, 16).cloned().collect();
        let bu: Vec<Point> = u.choose_multiple(&mut rng, 32).cloned().collect();
        let step =
            objective_step(objective, LabeledBatch::positive(&bp)?, LabeledBatch::unlabeled(&bu)?, eta, beta, &net)?;
        adam_step(&mut net, &step.gradient, &mut adam)?;
    }
    Ok(net)
}

fn large_beta_matches_pu(seed: u64) -> Result<bool> {
    let pu = train_pu_family(Objective::Pu, SlackBeta::zero(), seed)?;
    let nn = train_pu_family(Objective::NnPu, SlackBeta::new(1e300)?, seed)?;
    let same = pu.values().zip(nn.values()).all(|(a, b)| a.to_bits() == b.to_bits());
    Ok(same)
}

/// Two isotropic 2-D Gaussians, positives centred at `+offset`, negatives at `-offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianTask {
    pub eta: f64,
    pub offset: f64,
    pub n_pos: usize,
    pub n_unl: usize,
    pub n_test: usize,
    pub steps: usize,
    pub lr: f64,
}

impl Default for GaussianTask {
    fn default() -> Self {
        Self { eta: 0.5, offset: 1.0, n_pos: 500, n_unl: 2000, n_test: 4000, steps: 3000, lr: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassificationReport {
    pub nnpu_accuracy: f64,
    pub pn_accuracy: f64,
}

impl GaussianTask {
    fn draw(&self, rng: &mut ChaCha8Rng, positive: bool) -> Point {
        let c = if positive { self.offset } else { -self.offset };
        (0..2).map(|_| c + rng.sample::<f64, _>(StandardNormal)).collect()
    }

    fn train(&self, objective: Objective, p: &[Point], c: &[Point], eta: f64, rng: &mut ChaCha8Rng) -> Result<Mlp<f64>> {
        let mut net = Mlp::with_default_hidden(2, rng)?;
        let mut adam = AdamState::new(&net, AdamConfig::with_lr(self.lr))?;
        let eta = ClassPrior::new(eta)?;
        for _ in 0..self.steps {
            let bp: Vec<Point> = p.choose_multiple(rng, 64).cloned().collect();
            let bc: Vec<Point> = c.choose_multiple(rng, 256).cloned().collect();
            let contrast =
                if objective == Objective::Pn { LabeledBatch::negative(&bc)? } else { LabeledBatch::unlabeled(&bc)? };
            let step = objective_step(objective, LabeledBatch::positive(&bp)?, contrast, eta, SlackBeta::zero(), &net)?;
            adam_step(&mut net, &step.gradient, &mut adam)?;
        }
        Ok(net)
    }

    /// Trains a fully supervised PN oracle on the data with every label
    /// revealed, then an nn-PU classifier on the positive/unlabeled split, and
    /// scores both on a fresh test set.
    pub fn run(&self, seed: u64) -> Result<ClassificationReport> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p: Vec<Point> = (0..self.n_pos).map(|_| self.draw(&mut rng, true)).collect();
        let labeled_u: Vec<(Point, bool)> = (0..self.n_unl)
            .map(|_| {
                let y = rng.random::<f64>() < self.eta;
                (self.draw(&mut rng, y), y)
            })
            .collect();
        let test: Vec<(Point, bool)> = (0..self.n_test)
            .map(|_| {
                let y = rng.random::<f64>() < self.eta;
                (self.draw(&mut rng, y), y)
            })
            .collect();
        let accuracy = |net: &Mlp<f64>| -> Result<f64> {
            let mut right = 0;
            for (x, y) in &test {
                right += ((net.forward(x)? > 0.0) == *y) as usize;
            }
            Ok(right as f64 / test.len() as f64)
        };

        let mut all_pos = p.clone();
        all_pos.extend(labeled_u.iter().filter(|(_, y)| *y).map(|(x, _)| x.clone()));
        let neg: Vec<Point> = labeled_u.iter().filter(|(_, y)| !*y).map(|(x, _)| x.clone()).collect();
        let share = all_pos.len() as f64 / (all_pos.len() + neg.len()) as f64;
        let pn = self.train(Objective::Pn, &all_pos, &neg, share, &mut rng)?;

        let u: Vec<Point> = labeled_u.into_iter().map(|(x, _)| x).collect();
        let nnpu = self.train(Objective::NnPu, &p, &u, self.eta, &mut rng)?;
        Ok(ClassificationReport { nnpu_accuracy: accuracy(&nnpu)?, pn_accuracy: accuracy(&pn)? })
    }
}

/// One line of the benchmark summary.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchLine {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// The whole suite at its acceptance tolerances.
pub fn run_suite(seed: u64) -> Result<Vec<BenchLine>> {
    let id = identity_check(100, seed)?;
    let ub = unbiasedness_check(&Mixture1d::default(), 10_000, 50, 200, seed)?;
    let gr = gradient_check(20, seed)?;
    let cl = clamp_check(1000, seed)?;
    let cls = GaussianTask::default().run(seed)?;
    Ok(vec![
        BenchLine {
            name: "identities",
            passed: id.max_pu_gap <= 1e-12 && id.max_pnu_gap <= 1e-12,
            detail: format!("max |uPU - PN| = {:.3e}, max |PNU - PN| = {:.3e}", id.max_pu_gap, id.max_pnu_gap),
        },
        BenchLine {
            name: "unbiasedness",
            passed: ub.z() <= 3.0,
            detail: format!(
                "mean {:.6} vs population {:.6}, {:.2} standard errors",
                ub.mean_estimate,
                ub.population_risk,
                ub.z()
            ),
        },
        BenchLine {
            name: "gradients",
            passed: gr.worst() <= 1e-4,
            detail: format!("worst relative error {:.3e}", gr.worst()),
        },
        BenchLine {
            name: "clamp",
            passed: cl.bound_violations == 0 && cl.equality_mismatches == 0 && cl.large_beta_identical,
            detail: format!(
                "{} of {} clamped, {} bound violations, {} equality mismatches, large slack identical: {}",
                cl.active, cl.trials, cl.bound_violations, cl.equality_mismatches, cl.large_beta_identical
            ),
        },
        BenchLine {
            name: "gaussian-pu",
            passed: (cls.pn_accuracy - cls.nnpu_accuracy).abs() <= 0.05,
            detail: format!("nnPU accuracy {:.4}, PN oracle {:.4}", cls.nnpu_accuracy, cls.pn_accuracy),
        },
    ])
}
