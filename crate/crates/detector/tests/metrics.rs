use proptest::prelude::*;
use provlens_detector::metrics::{log_loss, tune_threshold};
use provlens_detector::{auc, f1_recall, Confusion};

/// Pairwise definition: wins plus half of ties over all positive/negative pairs.
fn brute_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li == 1 && lj == 0 {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

fn scored_labels() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    (2usize..120).prop_flat_map(|n| {
        (
            // A coarse grid of scores forces plenty of ties.
            prop::collection::vec((0u32..25).prop_map(|k| k as f64 / 24.0), n),
            prop::collection::vec(0u8..2, n),
        )
    })
    .prop_filter("both classes", |(_, l)| l.contains(&0) && l.contains(&1))
}

#[test]
fn worked_example_is_three_quarters() {
    assert_eq!(auc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap(), 0.75);
    assert_eq!(brute_auc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]), 0.75);
}

#[test]
fn confusion_counts_match_hand_count() {
    let scores = [0.9, 0.8, 0.7, 0.6, 0.4, 0.3, 0.2];
    let labels = [1, 1, 0, 1, 1, 0, 0];
    let c = Confusion::at_threshold(&scores, &labels, 0.5).unwrap();
    assert_eq!((c.tp, c.fp, c.tn, c.fn_), (3, 1, 2, 1));
    assert_eq!(c.total(), 7);
    let (f1, recall) = f1_recall(&scores, &labels, 0.5).unwrap();
    assert_eq!(recall, 0.75);
    assert_eq!(f1, 0.75);
    // Scores equal to the threshold count as positive.
    let c = Confusion::at_threshold(&[0.5], &[1], 0.5).unwrap();
    assert_eq!(c.tp, 1);
}

#[test]
fn metric_errors() {
    assert!(f1_recall(&[0.1, 0.2], &[0, 0], 0.5).is_err());
    assert!(f1_recall(&[0.1], &[0, 1], 0.5).is_err());
    assert!(auc(&[0.1, 0.2], &[0, 2]).is_err());
}

#[test]
fn threshold_tuning_stays_inside_unit_interval() {
    let t = tune_threshold(&[0.01, 0.02, 0.97, 0.99], &[0, 0, 1, 1]).unwrap();
    assert!(t > 0.0 && t < 1.0);
    assert_eq!(f1_recall(&[0.01, 0.02, 0.97, 0.99], &[0, 0, 1, 1], t).unwrap().0, 1.0);
}

#[test]
fn log_loss_of_half_is_ln2() {
    assert!((log_loss(&[0.5, 0.5], &[0, 1]) - std::f64::consts::LN_2).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn auc_equals_pairwise_count((scores, labels) in scored_labels()) {
        let got = auc(&scores, &labels).unwrap();
        prop_assert!((got - brute_auc(&scores, &labels)).abs() <= 1e-12);
    }

    #[test]
    fn auc_ignores_monotone_transforms((scores, labels) in scored_labels(), a in 0.1f64..5.0, b in -3.0f64..3.0) {
        let base = auc(&scores, &labels).unwrap();
        let affine: Vec<f64> = scores.iter().map(|s| a * s + b).collect();
        let cubic: Vec<f64> = scores.iter().map(|s| s.powi(3) + s).collect();
        let logit: Vec<f64> = scores.iter().map(|s| (s + 0.01).ln()).collect();
        for t in [affine, cubic, logit] {
            prop_assert_eq!(auc(&t, &labels).unwrap(), base);
        }
    }

    #[test]
    fn f1_matches_definition((scores, labels) in scored_labels(), threshold in 0.0f64..1.0) {
        let (mut tp, mut fp, mut fnn) = (0.0, 0.0, 0.0);
        for (&s, &l) in scores.iter().zip(&labels) {
            match (s >= threshold, l) {
                (true, 1) => tp += 1.0,
                (true, _) => fp += 1.0,
                (false, 1) => fnn += 1.0,
                _ => {}
            }
        }
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = tp / (tp + fnn);
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        let (got_f1, got_recall) = f1_recall(&scores, &labels, threshold).unwrap();
        prop_assert!((got_f1 - f1).abs() <= 1e-12);
        prop_assert!((got_recall - recall).abs() <= 1e-12);
    }
}
