use std::collections::{BTreeMap, BTreeSet};

use longview_core::cohort::{Population, Side};
use longview_core::error::Error;
use longview_core::eval::{auc, ensemble_scores, evaluate_scores, LabelKind, ScoredBreast, Statistic};
use longview_core::rng::seeded;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng as _;

/// O(n²) Mann-Whitney oracle.
fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] && !labels[j] {
                pairs += 1.0;
                wins += if si > sj { 1.0 } else if si == sj { 0.5 } else { 0.0 };
            }
        }
    }
    wins / pairs
}

#[test]
fn auc_examples() {
    assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
    assert_eq!(auc(&[0.4; 6], &[true, false, true, false, false, true]).unwrap(), 0.5);
    assert_eq!(auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap(), 0.75);
    assert!(matches!(auc(&[0.1, 0.2], &[true, true]), Err(Error::AucUndefined)));
    let err = auc(&[0.3, 0.7], &[false, false]).unwrap_err();
    assert!(err.to_string().contains("AUC undefined"), "{err}");
    assert!(auc(&[0.1], &[true, false]).is_err());
}

#[test]
fn auc_matches_the_pairwise_oracle() {
    let mut rng = seeded(2024);
    let mut heavy = 0;
    for k in 0..200 {
        let n = rng.gen_range(2..=200);
        let tied = k % 4 == 0;
        heavy += tied as usize;
        let scores: Vec<f64> = (0..n).map(|_| if tied { rng.gen_range(0..4) as f64 / 4.0 } else { rng.gen() }).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.3)).collect();
        labels[0] = true;
        labels[1] = false;
        let fast = auc(&scores, &labels).unwrap();
        assert!((fast - brute_auc(&scores, &labels)).abs() <= 1e-12, "instance {k}");
    }
    assert!(heavy >= 20);
}

#[test]
fn ensemble_examples() {
    let members: Vec<BTreeMap<&str, f64>> = [0.2, 0.4, 0.6, 0.8, 1.0].iter().map(|&v| BTreeMap::from([("a", v)])).collect();
    assert!((ensemble_scores(&members).unwrap()["a"] - 0.6).abs() < 1e-15);
    let one = BTreeMap::from([("a", 0.3), ("b", 0.9)]);
    assert_eq!(ensemble_scores(&vec![one.clone(); 5]).unwrap(), one);
    let other = BTreeMap::from([("a", 0.3), ("c", 0.9)]);
    assert!(ensemble_scores(&[one, other]).is_err());
    assert!(ensemble_scores::<u8>(&[]).is_err());
}

/// Breast scores for `n` pairs; `score(i, label)` gives each member's score.
fn scored(n: usize, truth: impl Fn(usize, LabelKind) -> bool, score: impl Fn(usize, LabelKind) -> f64) -> Vec<ScoredBreast> {
    let mut out = Vec::new();
    for i in 0..n {
        for side in Side::BOTH {
            for label in LabelKind::BOTH {
                let k = 2 * i + side.index();
                out.push(ScoredBreast { pair_id: format!("p{i}"), side, label, truth: truth(k, label), score: score(k, label) });
            }
        }
    }
    out
}

#[test]
fn one_member_report() {
    let member = scored(10, |k, _| k % 3 == 0, |k, _| ((k * 7) % 11) as f64 / 10.0);
    let biopsied: BTreeSet<String> = (0..5).map(|i| format!("p{i}")).collect();
    let r = evaluate_scores(&[member], &biopsied).unwrap();
    assert_eq!(r.members, 1);
    assert_eq!(r.defined_count(), 12);
    for (_, _, stat, v) in r.rows() {
        if stat == Statistic::Std {
            assert_eq!(v, Some(0.0));
        }
    }
    for pop in Population::BOTH {
        for label in LabelKind::BOTH {
            assert_eq!(r.value(pop, label, Statistic::Ensemble), r.value(pop, label, Statistic::Mean));
        }
    }
    let keys: Vec<_> = r.rows().iter().map(|r| (r.0, r.1, r.2)).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
}

#[test]
fn missing_biopsied_population_is_undefined_not_fatal() {
    let member = scored(6, |k, _| k % 2 == 0, |k, _| k as f64 / 12.0);
    let r = evaluate_scores(&[member], &BTreeSet::new()).unwrap();
    for label in LabelKind::BOTH {
        for stat in Statistic::ALL {
            assert_eq!(r.value(Population::Biopsied, label, stat), None);
            assert!(r.value(Population::Screening, label, stat).is_some());
        }
    }
}

#[test]
fn member_spread_is_the_population_standard_deviation() {
    let truth = |k: usize, _| k < 2;
    let perfect = scored(2, truth, |k, _| if k < 2 { 0.9 } else { 0.1 });
    let coin = scored(2, truth, |_, _| 0.5);
    let r = evaluate_scores(&[perfect, coin], &BTreeSet::new()).unwrap();
    let cell = r.cell(Population::Screening, LabelKind::Malignant).unwrap();
    assert_eq!(cell.member_aucs, vec![Some(1.0), Some(0.5)]);
    assert_eq!(cell.mean, Some(0.75));
    assert_eq!(cell.std, Some(0.25));
    assert_eq!(cell.ensemble, Some(1.0));
}

#[test]
fn out_of_range_scores_are_rejected() {
    let member = scored(2, |k, _| k == 0, |_, _| 1.5);
    assert!(evaluate_scores(&[member], &BTreeSet::new()).is_err());
}

fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..120).prop_flat_map(|n| {
        (prop::collection::vec(0u32..1000, n), prop::collection::vec(any::<bool>(), n)).prop_map(|(s, mut l)| {
            l[0] = true;
            l[1] = false;
            (s.into_iter().map(|v| v as f64 / 1000.0).collect(), l)
        })
    })
}

proptest! {
    #[test]
    fn auc_is_invariant_under_increasing_transforms((scores, labels) in instance()) {
        let base = auc(&scores, &labels).unwrap();
        let cubed: Vec<f64> = scores.iter().map(|s| s * s * s + s).collect();
        let logged: Vec<f64> = scores.iter().map(|s| (s + 0.5).ln()).collect();
        prop_assert_eq!(auc(&cubed, &labels).unwrap(), base);
        prop_assert_eq!(auc(&logged, &labels).unwrap(), base);
    }

    #[test]
    fn negating_labels_complements_auc((scores, labels) in instance()) {
        let neg: Vec<bool> = labels.iter().map(|l| !l).collect();
        prop_assert!((1.0 - auc(&scores, &labels).unwrap() - auc(&scores, &neg).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn ensemble_is_member_permutation_invariant(values in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 6), 1..6), seed in any::<u64>()) {
        let members: Vec<BTreeMap<usize, f64>> = values.iter().map(|v| v.iter().copied().enumerate().collect()).collect();
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut seeded(seed));
        prop_assert_eq!(ensemble_scores(&members).unwrap(), ensemble_scores(&shuffled).unwrap());
    }
}
