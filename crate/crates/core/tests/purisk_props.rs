use proptest::prelude::*;
use purl_core::diffnet::{Layer, Mlp};
use purl_core::purisk::{
    logistic_loss, nn_pu_risk, objective_step, pn_risk, pnu_risk, pu_risk_unbiased, Branch, ClassPrior, Label,
    LabeledBatch, Objective, SlackBeta,
};

fn points(max: usize) -> impl Strategy<Value = Vec<[f64; 2]>> {
    prop::collection::vec([-4.0..4.0f64, -4.0..4.0f64], 1..max)
}

fn net() -> impl Strategy<Value = Mlp<f64>> {
    (prop::collection::vec(-1.5..1.5f64, 12), prop::collection::vec(-0.5..0.5f64, 4), -1.5..1.5f64).prop_map(
        |(w, b, out)| {
            Mlp::from_layers(vec![
                Layer::from_parts(2, 4, w[..8].to_vec(), b).unwrap(),
                Layer::from_parts(4, 1, w[8..].to_vec(), vec![out]).unwrap(),
            ])
            .unwrap()
        },
    )
}

proptest! {
    #[test]
    fn unlabeled_union_recovers_pn(p in points(20), n in points(20), net in net()) {
        let u: Vec<[f64; 2]> = p.iter().chain(&n).copied().collect();
        let eta = ClassPrior::new(p.len() as f64 / u.len() as f64).unwrap();
        let (bp, bn, bu) = (
            LabeledBatch::positive(&p).unwrap(),
            LabeledBatch::negative(&n).unwrap(),
            LabeledBatch::unlabeled(&u).unwrap(),
        );
        let pn = pn_risk(bp, bn, eta, &net).unwrap();
        prop_assert!((pu_risk_unbiased(bp, bu, eta, &net).unwrap() - pn).abs() <= 1e-12);
        prop_assert!((pnu_risk(bp, bn, bu, eta, &net).unwrap() - pn).abs() <= 1e-12);
    }

    #[test]
    fn clamp_bounds_the_risk(p in points(12), u in points(12), eta in 0.0..=1.0f64, beta in 0.0..1.0f64, net in net()) {
        let (bp, bu) = (LabeledBatch::positive(&p).unwrap(), LabeledBatch::unlabeled(&u).unwrap());
        let (eta, beta) = (ClassPrior::new(eta).unwrap(), SlackBeta::new(beta).unwrap());
        let bd = nn_pu_risk(bp, bu, eta, beta, &net).unwrap();
        let bound = bd.positive_risk - beta.value();
        prop_assert!(bd.total >= bound);
        prop_assert_eq!(bd.total == bound, bd.correction_active);
        prop_assert!(bd.total >= pu_risk_unbiased(bp, bu, eta, &net).unwrap() - 1e-12);
    }

    #[test]
    fn huge_slack_is_unbiased_pu(p in points(12), u in points(12), eta in 0.0..=1.0f64, net in net()) {
        let (bp, bu) = (LabeledBatch::positive(&p).unwrap(), LabeledBatch::unlabeled(&u).unwrap());
        let eta = ClassPrior::new(eta).unwrap();
        let nn = objective_step(Objective::NnPu, bp, bu, eta, SlackBeta::new(f64::INFINITY).unwrap(), &net).unwrap();
        let pu = objective_step(Objective::Pu, bp, bu, eta, SlackBeta::zero(), &net).unwrap();
        prop_assert_eq!(nn.branch, Branch::Full);
        prop_assert_eq!(nn.breakdown.total.to_bits(), pu.breakdown.total.to_bits());
        let same = nn.gradient.values().zip(pu.gradient.values()).all(|(a, b)| a.to_bits() == b.to_bits());
        prop_assert!(same);
    }

    #[test]
    fn logistic_loss_is_nonnegative_and_antisymmetric(s in -700.0..700.0f64) {
        let (pos, neg) = (logistic_loss(s, Label::Positive), logistic_loss(s, Label::Negative));
        prop_assert!(pos >= 0.0 && neg >= 0.0);
        // softplus(-s) - softplus(s) = -s
        prop_assert!((pos - neg + s).abs() <= 1e-9 * s.abs().max(1.0));
    }

    #[test]
    fn risks_are_invariant_to_batch_order(mut p in points(12), mut u in points(12), net in net()) {
        let eta = ClassPrior::new(0.4).unwrap();
        let risk = |p: &[[f64; 2]], u: &[[f64; 2]]| {
            pu_risk_unbiased(LabeledBatch::positive(p).unwrap(), LabeledBatch::unlabeled(u).unwrap(), eta, &net).unwrap()
        };
        let before = risk(&p, &u);
        p.reverse();
        u.rotate_left(1);
        prop_assert!((risk(&p, &u) - before).abs() <= 1e-12);
    }
}
