//! Logistic loss, empirical risk operators and the PN / unbiased PU /
//! non-negative PU / PNU risk estimators.
//!
//! Label 1 is the positive ("success", "expert", "reliable") class; a scorer's
//! output `s` maps to `P(y = 1 | x) = sigmoid(s)`.

use std::marker::PhantomData;

use crate::diffnet::{Gradient, Mlp};
use crate::error::{Error, Result};
use crate::scalar::{sigmoid, softplus, Scalar};

/// Positive class prior `eta = P(y = 1)`, fixed in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ClassPrior<S>(S);

impl<S: Scalar> ClassPrior<S> {
    pub fn new(eta: S) -> Result<Self> {
        if !(eta >= S::zero() && eta <= S::one()) {
            return Err(Error::config(format!("class prior must lie in [0, 1], got {eta}")));
        }
        Ok(Self(eta))
    }

    pub fn value(self) -> S {
        self.0
    }
}

/// Slack `beta >= 0` of the non-negativity constraint. `+inf` disables the clamp.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SlackBeta<S>(S);

impl<S: Scalar> SlackBeta<S> {
    pub fn new(beta: S) -> Result<Self> {
        if !(beta >= S::zero()) {
            return Err(Error::config(format!("slack beta must be >= 0, got {beta}")));
        }
        Ok(Self(beta))
    }

    pub fn zero() -> Self {
        Self(S::zero())
    }

    pub fn value(self) -> S {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn as_scalar<S: Scalar>(self) -> S {
        match self {
            Label::Negative => S::zero(),
            Label::Positive => S::one(),
        }
    }
}

/// `-log sigmoid(s)` for positives, `-log(1 - sigmoid(s))` for negatives.
#[inline]
pub fn logistic_loss<S: Scalar>(score: S, label: Label) -> S {
    match label {
        Label::Positive => softplus(-score),
        Label::Negative => softplus(score),
    }
}

/// Derivative of [`logistic_loss`] with respect to the score: `sigmoid(s) - y`.
#[inline]
pub fn logistic_loss_derivative<S: Scalar>(score: S, label: Label) -> S {
    sigmoid(score) - label.as_scalar()
}

/// Anything that maps a feature vector to a pre-sigmoid score.
pub trait Scorer<S: Scalar> {
    fn score(&self, x: &[S]) -> Result<S>;

    fn scores<X: AsRef<[S]>>(&self, batch: &[X]) -> Result<Vec<S>> {
        batch.iter().map(|x| self.score(x.as_ref())).collect()
    }
}

impl<S: Scalar> Scorer<S> for Mlp<S> {
    fn score(&self, x: &[S]) -> Result<S> {
        self.forward(x)
    }

    fn scores<X: AsRef<[S]>>(&self, batch: &[X]) -> Result<Vec<S>> {
        Ok(self.forward_batch(batch)?.scores().to_vec())
    }
}

/// A non-empty set of feature vectors sharing one label.
#[derive(Debug)]
pub struct LabeledBatch<'a, S, X> {
    examples: &'a [X],
    label: Label,
    _scalar: PhantomData<S>,
}

impl<S, X> Clone for LabeledBatch<'_, S, X> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<S, X> Copy for LabeledBatch<'_, S, X> {}

impl<'a, S: Scalar, X: AsRef<[S]>> LabeledBatch<'a, S, X> {
    pub fn new(examples: &'a [X], label: Label) -> Result<Self> {
        let first = examples.first().ok_or_else(|| Error::usage("empirical risk of an empty batch"))?;
        let d = first.as_ref().len();
        if examples.iter().any(|x| x.as_ref().len() != d) {
            return Err(Error::usage("batch mixes feature vectors of different dimensionality"));
        }
        Ok(Self { examples, label, _scalar: PhantomData })
    }

    pub fn positive(examples: &'a [X]) -> Result<Self> {
        Self::new(examples, Label::Positive)
    }

    pub fn negative(examples: &'a [X]) -> Result<Self> {
        Self::new(examples, Label::Negative)
    }

    /// Unlabeled data enters the estimators with its examples only; the label is ignored.
    pub fn unlabeled(examples: &'a [X]) -> Result<Self> {
        Self::new(examples, Label::Negative)
    }

    pub fn examples(&self) -> &'a [X] {
        self.examples
    }

    pub fn label(&self) -> Label {
        self.label
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

/// Mean loss of `scores` under `label` (the empirical risk operator).
pub fn mean_loss<S: Scalar>(scores: &[S], label: Label) -> S {
    let n = S::from_usize(scores.len()).unwrap();
    scores.iter().fold(S::zero(), |acc, &s| acc + logistic_loss(s, label)) / n
}

/// `R^y(D)`: mean logistic loss of the batch under its own label.
pub fn empirical_risk<S: Scalar, X: AsRef<[S]>>(batch: LabeledBatch<'_, S, X>, scorer: &impl Scorer<S>) -> Result<S> {
    Ok(mean_loss(&scorer.scores(batch.examples)?, batch.label))
}

/// `eta R^1(Dp) + (1 - eta) R^0(Dn)`.
pub fn pn_risk<S: Scalar, X: AsRef<[S]>>(
    positives: LabeledBatch<'_, S, X>,
    negatives: LabeledBatch<'_, S, X>,
    eta: ClassPrior<S>,
    scorer: &impl Scorer<S>,
) -> Result<S> {
    let sp = scorer.scores(positives.examples)?;
    let sn = scorer.scores(negatives.examples)?;
    let eta = eta.value();
    Ok(eta * mean_loss(&sp, Label::Positive) + (S::one() - eta) * mean_loss(&sn, Label::Negative))
}

/// Decomposed non-negative PU risk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskBreakdown<S> {
    /// `eta R^1(Dp)`
    pub positive_risk: S,
    /// `R^0(Du)`
    pub neg_risk_on_unlabeled: S,
    /// `eta R^0(Dp)`
    pub neg_risk_on_positive: S,
    /// `R^0(Du) - eta R^0(Dp)`, the estimate of `(1 - eta) R^0(Dn)`
    pub correction_term: S,
    pub total: S,
    /// The correction term fell below `-beta` and was clamped.
    pub correction_active: bool,
}

impl<S: Scalar> RiskBreakdown<S> {
    /// Breakdown for objectives without a clamp (PN): only the total is meaningful.
    pub fn total_only(total: S) -> Self {
        Self {
            positive_risk: S::zero(),
            neg_risk_on_unlabeled: S::zero(),
            neg_risk_on_positive: S::zero(),
            correction_term: S::zero(),
            total,
            correction_active: false,
        }
    }

    /// Non-negative PU risk from already computed scores.
    pub fn from_scores(pos_scores: &[S], unl_scores: &[S], eta: ClassPrior<S>, beta: SlackBeta<S>) -> Self {
        let eta = eta.value();
        let positive_risk = eta * mean_loss(pos_scores, Label::Positive);
        let neg_risk_on_unlabeled = mean_loss(unl_scores, Label::Negative);
        let neg_risk_on_positive = eta * mean_loss(pos_scores, Label::Negative);
        let correction_term = neg_risk_on_unlabeled - neg_risk_on_positive;
        let correction_active = correction_term < -beta.value();
        let total = if correction_active {
            positive_risk - beta.value()
        } else {
            positive_risk + correction_term
        };
        Self { positive_risk, neg_risk_on_unlabeled, neg_risk_on_positive, correction_term, total, correction_active }
    }
}

/// `eta R^1(Dp) - eta R^0(Dp) + R^0(Du)`. Unbiased, and may be negative.
pub fn pu_risk_unbiased<S: Scalar, X: AsRef<[S]>>(
    positives: LabeledBatch<'_, S, X>,
    unlabeled: LabeledBatch<'_, S, X>,
    eta: ClassPrior<S>,
    scorer: &impl Scorer<S>,
) -> Result<S> {
    let sp = scorer.scores(positives.examples)?;
    let su = scorer.scores(unlabeled.examples)?;
    let eta = eta.value();
    Ok(eta * mean_loss(&sp, Label::Positive) - eta * mean_loss(&sp, Label::Negative)
        + mean_loss(&su, Label::Negative))
}

/// `eta R^1(Dp) + max(-beta, R^0(Du) - eta R^0(Dp))`.
pub fn nn_pu_risk<S: Scalar, X: AsRef<[S]>>(
    positives: LabeledBatch<'_, S, X>,
    unlabeled: LabeledBatch<'_, S, X>,
    eta: ClassPrior<S>,
    beta: SlackBeta<S>,
    scorer: &impl Scorer<S>,
) -> Result<RiskBreakdown<S>> {
    let sp = scorer.scores(positives.examples)?;
    let su = scorer.scores(unlabeled.examples)?;
    Ok(RiskBreakdown::from_scores(&sp, &su, eta, beta))
}

/// `R^1(Du) + R^0(Du) - eta R^0(Dp) - (1 - eta) R^1(Dn)`.
pub fn pnu_risk<S: Scalar, X: AsRef<[S]>>(
    positives: LabeledBatch<'_, S, X>,
    negatives: LabeledBatch<'_, S, X>,
    unlabeled: LabeledBatch<'_, S, X>,
    eta: ClassPrior<S>,
    scorer: &impl Scorer<S>,
) -> Result<S> {
    let sp = scorer.scores(positives.examples)?;
    let sn = scorer.scores(negatives.examples)?;
    let su = scorer.scores(unlabeled.examples)?;
    let eta = eta.value();
    Ok(mean_loss(&su, Label::Positive) + mean_loss(&su, Label::Negative)
        - eta * mean_loss(&sp, Label::Negative)
        - (S::one() - eta) * mean_loss(&sn, Label::Positive))
}

/// Which risk a discriminator minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Objective {
    /// Contrast data is negative.
    Pn,
    /// Contrast data is unlabeled, unbiased estimator.
    Pu,
    /// Contrast data is unlabeled, non-negative estimator with the branch rule.
    NnPu,
}

/// Which scalar the non-negative gradient rule differentiated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// `R^0(Du) - eta R^0(Dp) >= -beta`: the full non-negative risk.
    Full,
    /// Otherwise: `eta R^0(Dp) - R^0(Du)`, pushing the correction term back up.
    Correction,
}

/// Risk, its decomposition and the gradient the objective's update rule follows.
#[derive(Debug, Clone)]
pub struct ObjectiveStep<S> {
    pub breakdown: RiskBreakdown<S>,
    pub gradient: Gradient<S>,
    pub branch: Branch,
}

/// Evaluates `objective` on a positive batch and a contrast batch (negative for
/// PN, unlabeled otherwise) and returns the gradient its update rule uses.
pub fn objective_step<S: Scalar, X: AsRef<[S]>>(
    objective: Objective,
    positives: LabeledBatch<'_, S, X>,
    contrast: LabeledBatch<'_, S, X>,
    eta: ClassPrior<S>,
    beta: SlackBeta<S>,
    net: &Mlp<S>,
) -> Result<ObjectiveStep<S>> {
    let tp = net.forward_batch(positives.examples)?;
    let tc = net.forward_batch(contrast.examples)?;
    let (sp, sc) = (tp.scores(), tc.scores());
    let np = S::from_usize(sp.len()).unwrap();
    let nc = S::from_usize(sc.len()).unwrap();
    let e = eta.value();

    // d(loss)/d(score) per example for each batch
    let (breakdown, branch, up_p, up_c): (RiskBreakdown<S>, Branch, Vec<S>, Vec<S>) = match objective {
        Objective::Pn => {
            let total = e * mean_loss(sp, Label::Positive) + (S::one() - e) * mean_loss(sc, Label::Negative);
            let up_p = sp.iter().map(|&s| e * logistic_loss_derivative(s, Label::Positive) / np).collect();
            let up_c = sc
                .iter()
                .map(|&s| (S::one() - e) * logistic_loss_derivative(s, Label::Negative) / nc)
                .collect();
            (RiskBreakdown::total_only(total), Branch::Full, up_p, up_c)
        }
        Objective::Pu | Objective::NnPu => {
            let clamp = if objective == Objective::Pu { SlackBeta(S::infinity()) } else { beta };
            let bd = RiskBreakdown::from_scores(sp, sc, eta, clamp);
            if bd.correction_active {
                // grad of eta R^0(Dp) - R^0(Du)
                let up_p = sp.iter().map(|&s| e * sigmoid(s) / np).collect();
                let up_c = sc.iter().map(|&s| -sigmoid(s) / nc).collect();
                (bd, Branch::Correction, up_p, up_c)
            } else {
                // grad of eta R^1(Dp) - eta R^0(Dp) + R^0(Du); the two positive terms sum to -eta s
                let up_p = sp
                    .iter()
                    .map(|&s| {
                        e * (logistic_loss_derivative(s, Label::Positive)
                            - logistic_loss_derivative(s, Label::Negative))
                            / np
                    })
                    .collect();
                let up_c = sc.iter().map(|&s| sigmoid(s) / nc).collect();
                (bd, Branch::Full, up_p, up_c)
            }
        }
    };
    let mut gradient = net.backward_tape(&tp, &up_p)?;
    gradient.add_scaled(&net.backward_tape(&tc, &up_c)?, S::one());
    Ok(ObjectiveStep { breakdown, gradient, branch })
}

/// Gradient of [`pn_risk`].
pub fn pn_gradient<S: Scalar, X: AsRef<[S]>>(
    positives: LabeledBatch<'_, S, X>,
    negatives: LabeledBatch<'_, S, X>,
    eta: ClassPrior<S>,
    net: &Mlp<S>,
) -> Result<Gradient<S>> {
    Ok(objective_step(Objective::Pn, positives, negatives, eta, SlackBeta::zero(), net)?.gradient)
}

/// Gradient of [`pu_risk_unbiased`].
pub fn pu_gradient<S: Scalar, X: AsRef<[S]>>(
    positives: LabeledBatch<'_, S, X>,
    unlabeled: LabeledBatch<'_, S, X>,
    eta: ClassPrior<S>,
    net: &Mlp<S>,
) -> Result<Gradient<S>> {
    Ok(objective_step(Objective::Pu, positives, unlabeled, eta, SlackBeta::zero(), net)?.gradient)
}

/// Stochastic gradient of the non-negative PU risk with the branch rule: the
/// full risk while `R^0(Du) - eta R^0(Dp) >= -beta`, otherwise the negated
/// correction term `eta R^0(Dp) - R^0(Du)`.
pub fn nn_pu_gradient<S: Scalar, X: AsRef<[S]>>(
    positives: LabeledBatch<'_, S, X>,
    unlabeled: LabeledBatch<'_, S, X>,
    eta: ClassPrior<S>,
    beta: SlackBeta<S>,
    net: &Mlp<S>,
) -> Result<Gradient<S>> {
    Ok(objective_step(Objective::NnPu, positives, unlabeled, eta, beta, net)?.gradient)
}

/// Mean squared error of the network's raw outputs against `targets`, and its gradient.
pub fn squared_error_step<S: Scalar, X: AsRef<[S]>>(net: &Mlp<S>, inputs: &[X], targets: &[S]) -> Result<(S, Gradient<S>)> {
    if inputs.is_empty() {
        return Err(Error::usage("squared error of an empty batch"));
    }
    if inputs.len() != targets.len() {
        return Err(Error::config(format!("{} inputs but {} targets", inputs.len(), targets.len())));
    }
    let tape = net.forward_batch(inputs)?;
    let n = S::from_usize(targets.len()).unwrap();
    let two = S::lit(2.0);
    let mut mse = S::zero();
    let upstream: Vec<S> = tape
        .scores()
        .iter()
        .zip(targets)
        .map(|(&p, &t)| {
            let r = p - t;
            mse += r * r;
            two * r / n
        })
        .collect();
    let grad = net.backward_tape(&tape, &upstream)?;
    Ok((mse / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffnet::Layer;
    use approx::assert_abs_diff_eq;

    const LN2: f64 = std::f64::consts::LN_2;

    fn logit(p: f64) -> f64 {
        (p / (1.0 - p)).ln()
    }

    // score(x) = x[0]
    fn identity() -> Mlp<f64> {
        Mlp::from_layers(vec![Layer::from_parts(1, 1, vec![1.0], vec![0.0]).unwrap()]).unwrap()
    }

    fn zero_scorer() -> Mlp<f64> {
        Mlp::zeros(&[1, 1]).unwrap()
    }

    fn eta(v: f64) -> ClassPrior<f64> {
        ClassPrior::new(v).unwrap()
    }

    #[test]
    fn logistic_loss_values() {
        assert_abs_diff_eq!(logistic_loss(0.0, Label::Positive), LN2, epsilon = 1e-15);
        assert_abs_diff_eq!(logistic_loss(0.0, Label::Negative), LN2, epsilon = 1e-15);
        assert_abs_diff_eq!(logistic_loss(logit(0.9), Label::Negative), -(0.1f64.ln()), epsilon = 1e-12);
        assert!(logistic_loss(-800.0f64, Label::Positive).is_finite());
        assert!(logistic_loss(800.0f64, Label::Positive) >= 0.0);
    }

    #[test]
    fn hyperparameter_domains() {
        assert!(ClassPrior::new(1.5).is_err());
        assert!(ClassPrior::new(-0.1).is_err());
        assert!(ClassPrior::new(f64::NAN).is_err());
        assert!(SlackBeta::new(-1.0).is_err());
        assert!(SlackBeta::new(f64::INFINITY).is_ok());
    }

    #[test]
    fn empty_batch_is_usage_error() {
        let empty: Vec<[f64; 1]> = vec![];
        assert!(matches!(LabeledBatch::<f64, _>::positive(&empty), Err(Error::Usage(_))));
        let ragged = vec![vec![1.0], vec![1.0, 2.0]];
        assert!(LabeledBatch::<f64, _>::positive(&ragged).is_err());
    }

    #[test]
    fn empirical_risk_is_mean() {
        let one = [[0.3]];
        assert_abs_diff_eq!(
            empirical_risk(LabeledBatch::positive(&one).unwrap(), &zero_scorer()).unwrap(),
            LN2,
            epsilon = 1e-15
        );
        let two = [[0.5], [-1.5]];
        let (a, b) = (logistic_loss(0.5, Label::Negative), logistic_loss(-1.5, Label::Negative));
        assert_abs_diff_eq!(
            empirical_risk(LabeledBatch::negative(&two).unwrap(), &identity()).unwrap(),
            (a + b) / 2.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn empirical_risk_matches_direct_summation() {
        let xs = [[0.31], [-2.2], [1.7], [0.05], [-0.66]];
        let net = Mlp::from_layers(vec![Layer::from_parts(1, 1, vec![1.3], vec![-0.2]).unwrap()]).unwrap();
        let mut sum = 0.0;
        for x in &xs {
            let s = 1.3 * x[0] - 0.2;
            sum += (1.0 + (-s as f64).exp()).ln();
        }
        let got = empirical_risk(LabeledBatch::positive(&xs).unwrap(), &net).unwrap();
        assert!((got - sum / 5.0).abs() < 1e-12);
    }

    #[test]
    fn pn_risk_degenerate_priors_and_hand_value() {
        let p = [[logit(0.9)]];
        let n = [[logit(0.2)]];
        let (bp, bn) = (LabeledBatch::positive(&p).unwrap(), LabeledBatch::negative(&n).unwrap());
        let net = identity();
        assert_abs_diff_eq!(pn_risk(bp, bn, eta(1.0), &net).unwrap(), -(0.9f64.ln()), epsilon = 1e-12);
        assert_abs_diff_eq!(pn_risk(bp, bn, eta(0.0), &net).unwrap(), -(0.8f64.ln()), epsilon = 1e-12);
        assert_abs_diff_eq!(pn_risk(bp, bn, eta(0.5), &net).unwrap(), 0.164252, epsilon = 1e-6);
    }

    #[test]
    fn pu_unbiased_values() {
        let p = [[logit(0.9)], [0.4]];
        let u = [[logit(0.2)]];
        let net0 = zero_scorer();
        for &e in &[0.0, 0.3, 1.0] {
            let v = pu_risk_unbiased(LabeledBatch::positive(&p).unwrap(), LabeledBatch::unlabeled(&u).unwrap(), eta(e), &net0)
                .unwrap();
            assert_abs_diff_eq!(v, LN2, epsilon = 1e-15);
        }
        let p = [[logit(0.9)]];
        let v = pu_risk_unbiased(LabeledBatch::positive(&p).unwrap(), LabeledBatch::unlabeled(&u).unwrap(), eta(0.5), &identity())
            .unwrap();
        assert_abs_diff_eq!(v, -0.875468, epsilon = 1e-6);
    }

    #[test]
    fn pu_equals_pn_on_mixture() {
        let p = [[1.2], [-0.3], [0.8]];
        let n = [[-1.0], [0.1], [-2.5], [0.4], [3.0]];
        let u: Vec<[f64; 1]> = p.iter().chain(n.iter()).copied().collect();
        let e = eta(3.0 / 8.0);
        let net = Mlp::from_layers(vec![Layer::from_parts(1, 1, vec![0.7], vec![0.2]).unwrap()]).unwrap();
        let bp = LabeledBatch::positive(&p).unwrap();
        let pn = pn_risk(bp, LabeledBatch::negative(&n).unwrap(), e, &net).unwrap();
        let pu = pu_risk_unbiased(bp, LabeledBatch::unlabeled(&u).unwrap(), e, &net).unwrap();
        let pnu = pnu_risk(bp, LabeledBatch::negative(&n).unwrap(), LabeledBatch::unlabeled(&u).unwrap(), e, &net).unwrap();
        assert!((pn - pu).abs() < 1e-12);
        assert!((pn - pnu).abs() < 1e-12);
    }

    #[test]
    fn nn_pu_examples() {
        let p = [[0.7]];
        let u = [[-0.2]];
        let bd = nn_pu_risk(
            LabeledBatch::positive(&p).unwrap(),
            LabeledBatch::unlabeled(&u).unwrap(),
            eta(0.5),
            SlackBeta::zero(),
            &zero_scorer(),
        )
        .unwrap();
        assert_abs_diff_eq!(bd.total, LN2, epsilon = 1e-15);
        assert!(!bd.correction_active);

        let p = [[logit(0.9)]];
        let u = [[logit(0.2)]];
        let (bp, bu) = (LabeledBatch::positive(&p).unwrap(), LabeledBatch::unlabeled(&u).unwrap());
        let bd = nn_pu_risk(bp, bu, eta(0.5), SlackBeta::zero(), &identity()).unwrap();
        assert_abs_diff_eq!(bd.correction_term, -0.928148, epsilon = 1e-6);
        assert!(bd.correction_active);
        assert_abs_diff_eq!(bd.total, 0.052681, epsilon = 1e-6);
        assert_abs_diff_eq!(bd.total, bd.positive_risk, epsilon = 0.0);

        let big = nn_pu_risk(bp, bu, eta(0.5), SlackBeta::new(10.0).unwrap(), &identity()).unwrap();
        let upu = pu_risk_unbiased(bp, bu, eta(0.5), &identity()).unwrap();
        assert!(!big.correction_active);
        assert_eq!(big.total, upu);
    }

    #[test]
    fn pnu_hand_value_and_constant_scorer() {
        let p = [[logit(0.9)]];
        let n = [[logit(0.2)]];
        let u = [[0.0]];
        let (bp, bn, bu) =
            (LabeledBatch::positive(&p).unwrap(), LabeledBatch::negative(&n).unwrap(), LabeledBatch::unlabeled(&u).unwrap());
        // ln2 + ln2 - 0.5 * (-ln 0.1) - 0.5 * (-ln 0.2): the negative enters through its label-1 loss
        assert_abs_diff_eq!(pnu_risk(bp, bn, bu, eta(0.5), &identity()).unwrap(), -0.569717, epsilon = 1e-6);
        for &e in &[0.1, 0.5, 0.9] {
            assert_abs_diff_eq!(pnu_risk(bp, bn, bu, eta(e), &zero_scorer()).unwrap(), LN2, epsilon = 1e-15);
        }
    }

    #[test]
    fn constant_scorer_with_symmetric_data_takes_full_branch() {
        let d = [[0.1], [0.9]];
        let b = LabeledBatch::positive(&d).unwrap();
        let step = objective_step(Objective::NnPu, b, b, eta(0.4), SlackBeta::zero(), &zero_scorer()).unwrap();
        assert_eq!(step.branch, Branch::Full);
        assert!(!step.breakdown.correction_active);
        assert_abs_diff_eq!(step.breakdown.correction_term, 0.6 * LN2, epsilon = 1e-15);
    }

    #[test]
    fn pu_at_zero_prior_only_trains_negative_risk_on_unlabeled() {
        let p = [[0.5], [1.0]];
        let u = [[-0.3], [0.2], [2.0]];
        let net = identity();
        let g = pu_gradient(LabeledBatch::positive(&p).unwrap(), LabeledBatch::unlabeled(&u).unwrap(), eta(0.0), &net).unwrap();
        let up: Vec<f64> = u.iter().map(|x| sigmoid(x[0]) / 3.0).collect();
        let expected = net.backward(&u, &up).unwrap();
        assert_eq!(g, expected);
    }

    #[test]
    fn squared_error_gradient() {
        let net = Mlp::from_layers(vec![Layer::from_parts(1, 1, vec![2.0], vec![0.0]).unwrap()]).unwrap();
        let (mse, g) = squared_error_step(&net, &[[1.0], [0.5]], &[1.0, 1.0]).unwrap();
        // preds 2.0, 1.0 -> residuals 1, 0
        assert_abs_diff_eq!(mse, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(g.layers()[0].weights()[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.layers()[0].bias()[0], 1.0, epsilon = 1e-15);
        assert!(squared_error_step::<f64, [f64; 1]>(&net, &[], &[]).is_err());
    }
}
