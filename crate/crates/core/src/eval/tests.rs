use super::*;
use proptest::prelude::*;

fn brute_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut num = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li == 1 && lj == 0 {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / pairs
}

#[test]
fn identity_region_scores_are_norms() {
    let region = BoundingRegion::identity(2, 1.0, 0.05).unwrap();
    let x = Tensor::matrix(2, 2, vec![0.0, 0.0, 3.0, 4.0]).unwrap();
    assert_eq!(region.score(&x).unwrap(), vec![0.0, 5.0]);
    assert_eq!(region.score(&x).unwrap(), region.score(&x).unwrap());
    assert_eq!(region.coverage(&x).unwrap(), 0.5);
}

#[test]
fn coverage_edge_cases() {
    let x = Tensor::matrix(3, 2, vec![1.0, 0.0, 0.0, 2.0, 3.0, 4.0]).unwrap();
    let empty = BoundingRegion::identity(2, 0.0, 0.05).unwrap();
    assert_eq!(empty.coverage(&x).unwrap(), 0.0);
    let full = BoundingRegion::identity(2, 5.0, 0.05).unwrap();
    assert_eq!(full.coverage(&x).unwrap(), 1.0);
}

#[test]
fn region_rejects_dimension_mismatch() {
    let region = BoundingRegion::identity(2, 1.0, 0.05).unwrap();
    let x = Tensor::matrix(1, 3, vec![0.0; 3]).unwrap();
    assert!(matches!(region.score(&x), Err(Error::Dimension(_))));
    let model = region.model.clone();
    assert!(BoundingRegion::new(model.clone(), 1.0, 0.05, Standardizer::identity(3), Method::ConstDet).is_err());
    assert!(BoundingRegion::new(model.clone(), -1.0, 0.05, Standardizer::identity(2), Method::ConstDet).is_err());
    assert!(BoundingRegion::new(model, 1.0, 0.05, Standardizer::identity(2), Method::General).is_err());
}

#[test]
fn auc_examples() {
    assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
    assert_eq!(auc(&[1.0; 5], &[0, 1, 0, 1, 1]).unwrap(), 0.5);
    let a = auc(&[1.0, 2.0, 3.0, 4.0], &[0, 0, 1, 0]).unwrap();
    assert!((a - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(a, brute_auc(&[1.0, 2.0, 3.0, 4.0], &[0, 0, 1, 0]));
    assert!(matches!(auc(&[1.0, 2.0], &[1, 1]), Err(Error::Metric(_))));
    assert!(matches!(auc(&[1.0, 2.0], &[1, 2]), Err(Error::Metric(_))));
}

#[test]
fn prf1_examples() {
    let m = prf1_at_count(&[5.0, 4.0, 3.0, 2.0], &[1, 0, 1, 0], 2).unwrap();
    assert_eq!((m.precision, m.recall, m.f1), (0.5, 0.5, 0.5));
    let perfect = prf1_at_count(&[9.0, 1.0, 8.0, 2.0], &[1, 0, 1, 0], 2).unwrap();
    assert_eq!((perfect.precision, perfect.recall, perfect.f1), (1.0, 1.0, 1.0));
    assert!(matches!(prf1_at_count(&[1.0, 2.0], &[0, 1], 0), Err(Error::Config(_))));
    assert!(matches!(prf1_at_count(&[1.0, 2.0], &[0, 1], 3), Err(Error::Config(_))));
}

#[test]
fn prf1_ties_follow_index_order() {
    // Indices 0 and 1 tie; the earlier one is flagged.
    let m = prf1_at_count(&[1.0, 1.0, 0.0], &[0, 1, 0], 1).unwrap();
    assert_eq!(m.precision, 0.0);
    let m = prf1_at_count(&[1.0, 1.0, 0.0], &[1, 0, 0], 1).unwrap();
    assert_eq!(m.precision, 1.0);
}

#[test]
fn k_rules() {
    let labels = [0, 1, 0, 1, 1, 0, 0, 0, 0, 0, 0];
    assert_eq!(KRule::TrueCount.resolve(&labels).unwrap(), 3);
    assert_eq!(KRule::Fraction(0.05).resolve(&labels).unwrap(), 1);
    assert_eq!(KRule::Fraction(0.2).resolve(&labels).unwrap(), 3);
    assert_eq!(KRule::Count(4).resolve(&labels).unwrap(), 4);
    assert!(KRule::Fraction(0.0).resolve(&labels).is_err());
}

#[test]
fn evaluate_reports_all_fields() {
    let region = BoundingRegion::identity(2, 1.5, 0.05).unwrap();
    let x = Tensor::matrix(4, 2, vec![0.0, 0.0, 1.0, 0.0, 3.0, 0.0, 0.0, 4.0]).unwrap();
    let m = evaluate(&region, &x, &[0, 0, 1, 1], KRule::TrueCount).unwrap();
    assert_eq!(m.auc, 1.0);
    assert_eq!(m.f1, 1.0);
    assert_eq!(m.coverage, 0.5);
    assert_eq!((m.threshold_count, m.n, m.n_anomalies), (2, 4, 2));
    let json = serde_json::to_value(m).unwrap();
    for key in ["auc", "precision", "recall", "f1", "coverage", "threshold_count", "n", "n_anomalies"] {
        assert!(json.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn method_names_round_trip() {
    for m in Method::ALL {
        assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
    }
    assert!("svdd".parse::<Method>().is_err());
}

fn labelled(max_n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    (2..=max_n).prop_flat_map(|n| {
        (
            proptest::collection::vec(prop_oneof![(-3i32..4).prop_map(f64::from), -5.0f64..5.0], n),
            proptest::collection::vec(0u8..2, n),
        )
            .prop_filter("both classes", |(_, l)| l.contains(&0) && l.contains(&1))
    })
}

proptest! {
    #[test]
    fn auc_matches_pair_counting((scores, labels) in labelled(200)) {
        let a = auc(&scores, &labels).unwrap();
        prop_assert!((a - brute_auc(&scores, &labels)).abs() < 1e-12);
    }

    #[test]
    fn auc_invariant_under_increasing_maps((scores, labels) in labelled(60)) {
        let mapped: Vec<f64> = scores.iter().map(|s| (0.7 * s).exp() + 3.0 * s).collect();
        prop_assert_eq!(auc(&scores, &labels).unwrap(), auc(&mapped, &labels).unwrap());
    }

    #[test]
    fn true_count_gives_equal_precision_and_recall((scores, labels) in labelled(100)) {
        let k = KRule::TrueCount.resolve(&labels).unwrap();
        let m = prf1_at_count(&scores, &labels, k).unwrap();
        prop_assert_eq!(m.precision, m.recall);
        prop_assert_eq!(m.precision, m.f1);
    }
}
