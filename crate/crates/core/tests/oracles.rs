mod common;

use common::Hp;
use proptest::prelude::*;
use steer_core::confidence::token_confidence;
use steer_core::cost::flops_for;
use steer_core::mixture::{log_likelihood, posterior_confident, MixtureParams};

fn params(wc: f64, mc: f64, mu: f64, vc: f64, vu: f64) -> MixtureParams {
    MixtureParams { weight_c: wc, weight_u: 1.0 - wc, mean_c: mc, mean_u: mu, var_c: vc, var_u: vu }
}

#[test]
fn softmax_of_two_logits() {
    let mut hp = Hp::new();
    let (max_p, h) = hp.softmax_stats(&[2.0, 1.0]);
    // 1 / (1 + e^-1)
    assert!((max_p - 0.7310585786300049).abs() < 1e-15);
    let t = token_confidence("x", &[2.0, 1.0]).unwrap();
    assert_eq!(t.max_logit, 2.0);
    assert!((t.max_prob.unwrap() - max_p).abs() < 1e-14);
    assert!((t.entropy.unwrap() - h).abs() < 1e-14, "{} vs {h}", t.entropy.unwrap());
}

#[test]
fn softmax_with_wide_logits() {
    let mut hp = Hp::new();
    let logits = [900.0, -40.0, 3.5, 899.0, 0.0];
    let (max_p, h) = hp.softmax_stats(&logits);
    let t = token_confidence("x", &logits).unwrap();
    assert!((t.max_prob.unwrap() - max_p).abs() < 1e-14);
    assert!((t.entropy.unwrap() - h).abs() < 1e-13);
}

#[test]
fn posterior_matches_direct_evaluation() {
    let mut hp = Hp::new();
    let p = params(0.7, 8.0, 3.0, 1.5, 0.8);
    for phi in [-10.0, 0.0, 3.0, 5.2, 5.5, 8.0, 12.0, 40.0] {
        let want = hp.posterior(phi, &p);
        let got = posterior_confident(phi, &p).unwrap();
        assert!((got - want).abs() < 1e-12, "phi {phi}: {got} vs {want}");
    }
}

#[test]
fn log_likelihood_matches_direct_evaluation() {
    let mut hp = Hp::new();
    let p = params(0.4, 6.0, 1.0, 2.0, 0.5);
    let samples = [0.3, 1.1, 2.0, 4.4, 5.9, 6.2, 7.7, -3.0, 15.0];
    let want = hp.log_likelihood(&samples, &p);
    let got = log_likelihood(&samples, &p).unwrap();
    assert!((got - want).abs() < 1e-11 * want.abs().max(1.0), "{got} vs {want}");
}

#[test]
fn flops_are_correctly_rounded() {
    let hp = Hp::new();
    for (n, t) in [(1u64, 1u64), (4_000_000_000, 777), (12_000_000_000, 33_333), (70_000_000_000, 65_537), (3, 1)] {
        assert_eq!(flops_for(n, t), hp.flops(n, t), "{n} x {t}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_oracle_agrees(logits in prop::collection::vec(-50.0f64..50.0, 2..12)) {
        let mut hp = Hp::new();
        let (max_p, h) = hp.softmax_stats(&logits);
        let t = token_confidence("x", &logits).unwrap();
        prop_assert!((t.max_prob.unwrap() - max_p).abs() < 1e-13);
        prop_assert!((t.entropy.unwrap() - h).abs() < 1e-12);
    }
}
