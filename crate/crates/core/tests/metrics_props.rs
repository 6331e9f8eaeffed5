mod common;

use std::collections::BTreeSet;
use std::sync::Arc;

use common::{vocab, wv};
use crowdtruth::metrics::{
    compute_all_metrics, pairwise_agreement, unit_annotation_score_at, unit_scores,
    worker_media_unit_agreement, worker_worker_agreement,
};
use crowdtruth::model::MediaUnitVector;
use crowdtruth::quality::{detect_spammers, filter_spam, SpamReason, SpamVerdict};
use crowdtruth::{Judgment, VectorSet, WorkerVector};
use proptest::prelude::*;

/// Up to 4 units over a 5-entry vocabulary; each of up to 6 workers judges a
/// random subset of units.
fn vector_set() -> impl Strategy<Value = VectorSet> {
    prop::collection::vec(
        prop::collection::vec(prop::option::of(prop::collection::vec(any::<bool>(), 5)), 6),
        1..4,
    )
    .prop_map(|units| {
        let v = vocab(5);
        let mut set = VectorSet::new("t");
        for (u, workers) in units.into_iter().enumerate() {
            let unit = format!("u{u}");
            let vectors = workers
                .into_iter()
                .enumerate()
                .filter_map(|(w, bits)| bits.map(|b| wv(&format!("w{w}"), &unit, b)))
                .collect();
            set.insert_unit(&unit, Arc::clone(&v), vectors).unwrap();
        }
        set
    })
}

fn counts() -> impl Strategy<Value = Vec<u32>> {
    prop::collection::vec(0u32..40, 1..=20)
}

proptest! {
    #[test]
    fn score_is_cosine_with_one_hot(c in counts()) {
        let muv = MediaUnitVector { unit_id: "u".into(), counts: c.clone(), n_workers: 40 };
        let norm = c.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
        for (i, &ci) in c.iter().enumerate() {
            let expected = if norm == 0.0 { 0.0 } else { f64::from(ci) / norm };
            prop_assert!((unit_annotation_score_at(&muv, i) - expected).abs() <= 1e-12);
        }
    }

    #[test]
    fn squared_scores_sum_to_one(c in counts()) {
        let muv = MediaUnitVector { unit_id: "u".into(), counts: c.clone(), n_workers: 40 };
        let total: f64 = unit_scores(&muv).iter().map(|s| s * s).sum();
        if c.iter().any(|&x| x > 0) {
            prop_assert!((total - 1.0).abs() <= 1e-12);
        } else {
            prop_assert_eq!(total, 0.0);
        }
    }

    #[test]
    fn duplicating_the_crowd_keeps_scores(c in counts(), times in 2u32..5) {
        let muv = MediaUnitVector { unit_id: "u".into(), counts: c.clone(), n_workers: 40 };
        let scaled = MediaUnitVector {
            unit_id: "u".into(),
            counts: c.iter().map(|x| x * times).collect(),
            n_workers: 40 * times as usize,
        };
        for (a, b) in unit_scores(&muv).iter().zip(unit_scores(&scaled)) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn media_unit_vector_is_sum_of_worker_vectors(set in vector_set()) {
        for u in set.units() {
            let muv = u.media_unit_vector();
            prop_assert_eq!(muv.n_workers, u.vectors.len());
            for i in 0..u.vocabulary.len() {
                let sum = u.vectors.iter().filter(|v| v.bits[i]).count() as u32;
                prop_assert_eq!(muv.counts[i], sum);
            }
        }
    }

    #[test]
    fn pairwise_agreement_is_symmetric(set in vector_set()) {
        let ids: Vec<String> = set.worker_ids().into_iter().collect();
        for a in &ids {
            for b in &ids {
                prop_assert_eq!(pairwise_agreement(&set, a, b), pairwise_agreement(&set, b, a));
            }
        }
    }

    #[test]
    fn batch_metrics_match_per_worker_definitions(set in vector_set()) {
        let (metrics, _) = compute_all_metrics(&set);
        for m in &metrics {
            prop_assert!((m.wwa - worker_worker_agreement(&set, &m.worker_id)).abs() <= 1e-12);
            prop_assert!((m.wma - worker_media_unit_agreement(&set, &m.worker_id)).abs() <= 1e-12);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&m.wwa));
            prop_assert!((0.0..=1.0 + 1e-12).contains(&m.wma));
        }
    }

    #[test]
    fn spam_verdicts_ignore_worker_order(set in vector_set(), rot in 0usize..6) {
        let (mut metrics, _) = compute_all_metrics(&set);
        let flagged = |ms: &[crowdtruth::WorkerMetrics]| -> BTreeSet<(String, Vec<SpamReason>)> {
            detect_spammers(ms, 1.0, true)
                .into_iter()
                .map(|v| (v.worker_id, v.reasons.into_iter().collect()))
                .collect()
        };
        let before = flagged(&metrics);
        if !metrics.is_empty() {
            let r = rot % metrics.len();
            metrics.rotate_left(r);
            metrics.reverse();
        }
        prop_assert_eq!(before, flagged(&metrics));
    }

    #[test]
    fn larger_k_flags_a_subset(set in vector_set(), k in 0.1f64..2.0, extra in 0.0f64..2.0) {
        let (metrics, _) = compute_all_metrics(&set);
        let spam = |k: f64| -> BTreeSet<String> {
            detect_spammers(&metrics, k, true)
                .into_iter()
                .filter(|v| v.is_spam)
                .map(|v| v.worker_id)
                .collect()
        };
        prop_assert!(spam(k + extra).is_subset(&spam(k)));
    }

    #[test]
    fn spam_filter_leaves_survivors_untouched(set in vector_set(), spam_mask in prop::collection::vec(any::<bool>(), 6)) {
        let judgments: Vec<Judgment> = set
            .units()
            .flat_map(|u| u.vectors.iter().map(move |v| {
                let picked: Vec<String> = u.vocabulary.entries().iter().zip(&v.bits)
                    .filter(|(_, b)| **b).map(|(a, _)| a.clone()).collect();
                Judgment::new(&v.worker_id, &u.unit_id, picked, "t")
            }))
            .collect();
        let verdicts: Vec<SpamVerdict> = (0..6)
            .map(|w| SpamVerdict {
                worker_id: format!("w{w}"),
                is_spam: spam_mask[w],
                reasons: if spam_mask[w] { [SpamReason::LowWwa].into() } else { BTreeSet::new() },
                wwa: 0.0,
                wma: 0.0,
                na: 0.0,
            })
            .collect();
        let kept = filter_spam(&judgments, &verdicts);
        let expected: Vec<&Judgment> = judgments
            .iter()
            .filter(|j| !spam_mask[j.worker_id[1..].parse::<usize>().unwrap()])
            .collect();
        prop_assert_eq!(kept.iter().collect::<Vec<_>>(), expected);
    }
}

#[test]
fn spammer_on_every_unit_with_constant_answer_is_flagged() {
    // the constant worker always picks a0 while the honest crowd rotates
    let v = vocab(5);
    let mut set = VectorSet::new("t");
    for u in 0..10 {
        let unit = format!("u{u}");
        let mut vectors: Vec<WorkerVector> = (0..9)
            .map(|w| {
                let mut bits = vec![false; 5];
                bits[(u + usize::from(w == 0)) % 5] = true;
                wv(&format!("w{w}"), &unit, bits)
            })
            .collect();
        vectors.push(wv("const", &unit, vec![true, false, false, false, false]));
        set.insert_unit(&unit, Arc::clone(&v), vectors).unwrap();
    }
    let (metrics, _) = compute_all_metrics(&set);
    let verdicts = detect_spammers(&metrics, 1.0, true);
    let c = verdicts.iter().find(|v| v.worker_id == "const").unwrap();
    assert!(c.reasons.contains(&SpamReason::LowWwa));
}
