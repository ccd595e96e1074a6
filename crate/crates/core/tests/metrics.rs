use learned_hash::model::{auc, auc_brute_force, logloss};
use proptest::prelude::*;

proptest! {
    #[test]
    fn auc_is_invariant_under_monotone_transforms(
        pairs in prop::collection::vec((0u8..30, 0u8..2), 2..150),
    ) {
        let mut labels: Vec<u8> = pairs.iter().map(|p| p.1).collect();
        labels[0] = 0;
        labels[1] = 1;
        let scores: Vec<f64> = pairs.iter().map(|p| p.0 as f64 / 30.0).collect();
        let warped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
        let a = auc(&scores, &labels).unwrap();
        prop_assert!((a - auc(&warped, &labels).unwrap()).abs() < 1e-12);
        prop_assert!((a - auc_brute_force(&scores, &labels).unwrap()).abs() < 1e-12);
        let flipped: Vec<f64> = scores.iter().map(|s| -s).collect();
        prop_assert!((auc(&flipped, &labels).unwrap() - (1.0 - a)).abs() < 1e-12);
    }
}

#[test]
fn logloss_of_constant_prediction() {
    let labels = [1, 0, 0, 1];
    let want = -(0.3f64.ln() + 0.7f64.ln()) / 2.0;
    assert!((logloss(&[0.3; 4], &labels).unwrap() - want).abs() < 1e-12);
}
