//! Labeling regimes (crowdtruth threshold, majority vote, single annotator)
//! and their evaluation against trusted judgments.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::unit_scores;
use crate::model::{
    EvaluationOutcome, LabelMethod, LabelSet, MediaUnitVector, PairKey, UnitAnnotationScore,
};
use crate::rng::keyed_rng;
use crate::vector_space::VectorSet;

/// Ratio of selecting workers at which majority vote turns positive.
pub const MAJORITY_RATIO: f64 = 0.5;

/// Thresholds 0.05, 0.10, ..., 1.00.
pub fn default_grid() -> Vec<f64> {
    (1..=20).map(|i| f64::from(i) / 20.0).collect()
}

/// Positive iff score >= threshold. Every scored pair gets an explicit label.
pub fn crowdtruth_labels(scores: &[UnitAnnotationScore], threshold: f64) -> LabelSet {
    let mut set = LabelSet::new(LabelMethod::Crowdtruth);
    set.threshold = Some(threshold);
    for s in scores {
        set.insert(&s.unit_id, &s.annotation_id, s.score >= threshold);
    }
    set
}

/// Majority decision for one unit: positive iff at least half the workers chose
/// the annotation; when nothing reaches half, every annotation with the maximal
/// count (ties included). An all-zero unit has no positives.
pub fn majority_vote_positions(muv: &MediaUnitVector) -> Vec<bool> {
    let max = muv.counts.iter().copied().max().unwrap_or(0);
    if max == 0 || muv.n_workers == 0 {
        return vec![false; muv.counts.len()];
    }
    let n = muv.n_workers as f64;
    let by_ratio: Vec<bool> = muv
        .counts
        .iter()
        .map(|&c| f64::from(c) / n >= MAJORITY_RATIO)
        .collect();
    if by_ratio.iter().any(|b| *b) {
        by_ratio
    } else {
        muv.counts.iter().map(|&c| c == max).collect()
    }
}

pub fn majority_vote_labels(vectors: &VectorSet) -> LabelSet {
    let mut set = LabelSet::new(LabelMethod::MajorityVote);
    for u in vectors.units() {
        let positions = majority_vote_positions(&u.media_unit_vector());
        for (a, p) in u.vocabulary.entries().iter().zip(positions) {
            set.insert(&u.unit_id, a, p);
        }
    }
    set
}

/// For every unit, one worker drawn uniformly (seeded per unit); their
/// selections become the labels.
pub fn single_annotator_labels(vectors: &VectorSet, seed: u64) -> LabelSet {
    let mut set = LabelSet::new(LabelMethod::Single);
    for u in vectors.units() {
        let chosen = if u.vectors.is_empty() {
            log::warn!(
                "unit {} has no non-spam worker; no single-annotator labels",
                u.unit_id
            );
            None
        } else {
            let mut rng = keyed_rng(seed, "single", &u.unit_id);
            Some(&u.vectors[rng.random_range(0..u.vectors.len())])
        };
        for (i, a) in u.vocabulary.entries().iter().enumerate() {
            set.insert(&u.unit_id, a, chosen.is_some_and(|v| v.bits[i]));
        }
    }
    set
}

/// Scores of every (unit, entry) pair of a vector set.
pub fn scores_of(vectors: &VectorSet) -> Vec<UnitAnnotationScore> {
    let mut out = Vec::new();
    for u in vectors.units() {
        for (a, s) in u
            .vocabulary
            .entries()
            .iter()
            .zip(unit_scores(&u.media_unit_vector()))
        {
            out.push(UnitAnnotationScore {
                unit_id: u.unit_id.clone(),
                annotation_id: a.clone(),
                score: s,
            });
        }
    }
    out
}

/// Micro-averaged confusion counts over `universe`. Pairs absent from a label
/// set count as negative.
pub fn evaluate(pred: &LabelSet, truth: &LabelSet, universe: &[PairKey]) -> EvaluationOutcome {
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for key in universe {
        let p = pred.labels.get(key).copied().unwrap_or(false);
        let t = truth.labels.get(key).copied().unwrap_or(false);
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    EvaluationOutcome::from_counts(tp, fp, fn_, tn)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub points: Vec<(f64, EvaluationOutcome)>,
}

impl SweepResult {
    /// Threshold with the highest F1, lowest threshold on ties.
    pub fn best(&self) -> Option<(f64, EvaluationOutcome)> {
        self.points
            .iter()
            .copied()
            .fold(
                None,
                |best: Option<(f64, EvaluationOutcome)>, p| match best {
                    Some(b) if b.1.f1 >= p.1.f1 => Some(b),
                    _ => Some(p),
                },
            )
    }
}

fn check_grid(thresholds: &[f64]) -> Result<()> {
    if thresholds.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if let Some(t) = thresholds.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
        return Err(Error::Config(format!("threshold {t} outside (0, 1]")));
    }
    if thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(
            "thresholds must be strictly increasing".into(),
        ));
    }
    Ok(())
}

pub fn threshold_sweep(
    scores: &[UnitAnnotationScore],
    truth: &LabelSet,
    universe: &[PairKey],
    thresholds: &[f64],
) -> Result<SweepResult> {
    check_grid(thresholds)?;
    let points = thresholds
        .iter()
        .map(|&t| (t, evaluate(&crowdtruth_labels(scores, t), truth, universe)))
        .collect();
    Ok(SweepResult { points })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationPoint {
    pub max_workers: usize,
    pub outcome: EvaluationOutcome,
    pub n_units_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub points: Vec<AblationPoint>,
}

/// Keeps at most `max_workers` workers per unit and relabels.
///
/// Each unit's workers are put in a seeded random order once; the subsample
/// for `m` is the first `m` of that order, so subsamples are nested. Per-unit
/// vocabularies stay those of the full data, so the evaluation universe does
/// not change across points.
pub fn subsample_workers(vectors: &VectorSet, max_workers: usize, seed: u64) -> VectorSet {
    vectors.map_units(|u| {
        let mut order: Vec<usize> = (0..u.vectors.len()).collect();
        order.shuffle(&mut keyed_rng(seed, "ablation", &u.unit_id));
        order
            .into_iter()
            .take(max_workers)
            .map(|i| u.vectors[i].clone())
            .collect()
    })
}

pub fn worker_ablation(
    vectors: &VectorSet,
    truth: &LabelSet,
    threshold: f64,
    max_workers_list: &[usize],
    seed: u64,
) -> Result<AblationResult> {
    if max_workers_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(
            "worker counts must be strictly increasing".into(),
        ));
    }
    let universe = vectors.universe();
    let points = max_workers_list
        .iter()
        .map(|&m| {
            let sub = subsample_workers(vectors, m, seed);
            let labels = crowdtruth_labels(&scores_of(&sub), threshold);
            AblationPoint {
                max_workers: m,
                outcome: evaluate(&labels, truth, &universe),
                n_units_used: sub.units().filter(|u| !u.vectors.is_empty()).count(),
            }
        })
        .collect();
    Ok(AblationResult { points })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McNemarResult {
    /// Pairs where A is right and B is wrong.
    pub b: u64,
    /// Pairs where A is wrong and B is right.
    pub c: u64,
    pub statistic: f64,
    pub p_value: f64,
}

/// Upper tail of the chi-square distribution with one degree of freedom.
pub fn chi_square_1_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    statrs::function::erf::erfc((x / 2.0).sqrt())
}

/// Continuity-corrected McNemar test on discordant counts.
pub fn mcnemar_from_counts(b: u64, c: u64) -> McNemarResult {
    if b + c == 0 {
        return McNemarResult {
            b,
            c,
            statistic: 0.0,
            p_value: 1.0,
        };
    }
    let diff = (b as f64 - c as f64).abs() - 1.0;
    let statistic = diff * diff / (b + c) as f64;
    McNemarResult {
        b,
        c,
        statistic,
        p_value: chi_square_1_sf(statistic).clamp(0.0, 1.0),
    }
}

pub fn mcnemar_test(
    a: &LabelSet,
    b: &LabelSet,
    truth: &LabelSet,
    universe: &[PairKey],
) -> McNemarResult {
    let (mut only_a, mut only_b) = (0, 0);
    for key in universe {
        let t = truth.labels.get(key).copied().unwrap_or(false);
        let ra = a.labels.get(key).copied().unwrap_or(false) == t;
        let rb = b.labels.get(key).copied().unwrap_or(false) == t;
        match (ra, rb) {
            (true, false) => only_a += 1,
            (false, true) => only_b += 1,
            _ => {}
        }
    }
    mcnemar_from_counts(only_a, only_b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Disagreement {
    pub unit_id: String,
    pub annotation_id: String,
    pub crowd: bool,
    pub expert: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub threshold: f64,
    /// Agreeing pair count at every grid threshold.
    pub agreement: Vec<(f64, usize)>,
    /// Pairs where crowd (at the chosen threshold) and expert differ.
    pub disagreements: Vec<Disagreement>,
}

/// Picks the grid threshold at which crowdtruth labels agree with the expert on
/// the most (unit, annotation) pairs; lower threshold on ties.
pub fn calibrate_threshold_vs_expert(
    scores: &[UnitAnnotationScore],
    expert: &LabelSet,
    grid: &[f64],
) -> Result<Calibration> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let agree_at = |t: f64| {
        scores
            .iter()
            .filter(|s| (s.score >= t) == expert.is_positive(&s.unit_id, &s.annotation_id))
            .count()
    };
    let agreement: Vec<(f64, usize)> = grid.iter().map(|&t| (t, agree_at(t))).collect();
    let (threshold, _) = agreement
        .iter()
        .copied()
        .fold(None, |best: Option<(f64, usize)>, p| match best {
            Some(b) if b.1 > p.1 || (b.1 == p.1 && b.0 <= p.0) => Some(b),
            _ => Some(p),
        })
        .expect("grid is non-empty");
    let disagreements = scores
        .iter()
        .filter_map(|s| {
            let crowd = s.score >= threshold;
            let exp = expert.is_positive(&s.unit_id, &s.annotation_id);
            (crowd != exp).then(|| Disagreement {
                unit_id: s.unit_id.clone(),
                annotation_id: s.annotation_id.clone(),
                crowd,
                expert: exp,
            })
        })
        .collect();
    Ok(Calibration {
        threshold,
        agreement,
        disagreements,
    })
}

/// Positive pairs of each unit, handy for summaries.
pub fn positives_by_unit(labels: &LabelSet) -> BTreeMap<String, Vec<String>> {
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for ((u, a), v) in &labels.labels {
        if *v {
            out.entry(u.clone()).or_default().push(a.clone());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table1_scores() -> Vec<UnitAnnotationScore> {
        let muv = MediaUnitVector {
            unit_id: "s".into(),
            counts: vec![3, 2, 5, 1, 1],
            n_workers: 10,
        };
        ["dog barking", "walking", "animal", "echo", "loud"]
            .iter()
            .zip(unit_scores(&muv))
            .map(|(a, s)| UnitAnnotationScore {
                unit_id: "s".into(),
                annotation_id: a.to_string(),
                score: s,
            })
            .collect()
    }

    fn universe_of(scores: &[UnitAnnotationScore]) -> Vec<PairKey> {
        scores
            .iter()
            .map(|s| (s.unit_id.clone(), s.annotation_id.clone()))
            .collect()
    }

    fn labels(method: LabelMethod, pos: &[(&str, &str)]) -> LabelSet {
        let mut l = LabelSet::new(method);
        for (u, a) in pos {
            l.insert(u, a, true);
        }
        l
    }

    #[test]
    fn grid_contains_reported_optima() {
        let g = default_grid();
        assert_eq!(g.len(), 20);
        for t in [0.6, 0.4, 0.05, 0.1] {
            assert!(g.contains(&t), "{t}");
        }
    }

    #[test]
    fn crowdtruth_threshold_boundaries() {
        let s = table1_scores();
        let at = |t| {
            positives_by_unit(&crowdtruth_labels(&s, t))
                .remove("s")
                .unwrap_or_default()
        };
        assert_eq!(at(0.6), ["animal"]);
        assert_eq!(at(0.0).len(), 5);
        assert!(at(1.0).is_empty());
    }

    #[test]
    fn majority_vote_rules() {
        let mv = |counts: Vec<u32>, n| {
            majority_vote_positions(&MediaUnitVector {
                unit_id: "u".into(),
                counts,
                n_workers: n,
            })
        };
        assert_eq!(
            mv(vec![3, 2, 5, 1, 1], 10),
            [false, false, true, false, false]
        );
        assert_eq!(mv(vec![4, 3, 0], 10), [true, false, false]);
        assert_eq!(mv(vec![4, 4, 0], 10), [true, true, false]);
        assert_eq!(mv(vec![0, 0], 3), [false, false]);
        assert_eq!(mv(vec![6, 5, 1], 10), [true, true, false]);
    }

    #[test]
    fn micro_counts_from_two_units() {
        let pred = labels(
            LabelMethod::Crowdtruth,
            &[("u1", "A"), ("u2", "B"), ("u2", "C")],
        );
        let truth = labels(
            LabelMethod::Trusted,
            &[("u1", "A"), ("u1", "B"), ("u2", "B")],
        );
        let universe: Vec<PairKey> = ["A", "B", "C"]
            .iter()
            .flat_map(|a| ["u1", "u2"].map(|u| (u.to_string(), a.to_string())))
            .collect();
        let o = evaluate(&pred, &truth, &universe);
        assert_eq!((o.tp, o.fp, o.fn_, o.tn), (2, 1, 1, 2));
        assert!((o.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((o.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((o.f1 - 2.0 / 3.0).abs() < 1e-15);

        let same = evaluate(&truth, &truth, &universe);
        assert_eq!(
            (same.precision, same.recall, same.f1, same.accuracy),
            (1.0, 1.0, 1.0, 1.0)
        );
        let disjoint = labels(LabelMethod::Single, &[("u1", "C")]);
        assert_eq!(evaluate(&disjoint, &truth, &universe).f1, 0.0);
    }

    #[test]
    fn sweep_on_table1() {
        let s = table1_scores();
        let u = universe_of(&s);
        let truth = labels(
            LabelMethod::Trusted,
            &[("s", "animal"), ("s", "dog barking")],
        );
        let r = threshold_sweep(&s, &truth, &u, &[0.4, 0.6]).unwrap();
        assert_eq!(r.points[0].1.f1, 1.0);
        let o = r.points[1].1;
        assert_eq!((o.tp, o.fp, o.fn_), (1, 0, 1));
        assert!((o.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.best().unwrap().0, 0.4);

        let empty = LabelSet::new(LabelMethod::Trusted);
        let r = threshold_sweep(&s, &empty, &u, &default_grid()).unwrap();
        assert!(r.points.iter().all(|(_, o)| o.f1 == 0.0));
    }

    #[test]
    fn sweep_rejects_bad_grids() {
        let s = table1_scores();
        let t = LabelSet::new(LabelMethod::Trusted);
        assert!(threshold_sweep(&s, &t, &[], &[]).is_err());
        assert!(threshold_sweep(&s, &t, &[], &[0.0, 0.5]).is_err());
        assert!(threshold_sweep(&s, &t, &[], &[0.5, 0.5]).is_err());
        assert!(threshold_sweep(&s, &t, &[], &[0.5, 1.5]).is_err());
    }

    #[test]
    fn best_prefers_lowest_threshold_on_ties() {
        let o = EvaluationOutcome::from_counts(1, 0, 0, 0);
        let r = SweepResult {
            points: vec![(0.2, o), (0.4, o)],
        };
        assert_eq!(r.best().unwrap().0, 0.2);
    }

    #[test]
    fn mcnemar_identities() {
        let r = mcnemar_from_counts(0, 0);
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
        let r = mcnemar_from_counts(10, 2);
        assert!((r.statistic - 49.0 / 12.0).abs() < 1e-12);
        let r = mcnemar_from_counts(0, 40);
        assert!((r.statistic - 38.025).abs() < 1e-12);
        assert!(r.p_value < 1e-9);
        let s = mcnemar_from_counts(2, 10);
        assert_eq!(s.statistic, mcnemar_from_counts(10, 2).statistic);
    }

    #[test]
    fn mcnemar_counts_discordant_pairs() {
        let u: Vec<PairKey> = (0..4).map(|i| ("u".to_string(), format!("a{i}"))).collect();
        let truth = labels(LabelMethod::Trusted, &[("u", "a0"), ("u", "a1")]);
        let a = labels(LabelMethod::Crowdtruth, &[("u", "a0"), ("u", "a1")]);
        let b = labels(LabelMethod::MajorityVote, &[("u", "a0"), ("u", "a3")]);
        let r = mcnemar_test(&a, &b, &truth, &u);
        assert_eq!((r.b, r.c), (2, 0));
        assert_eq!(mcnemar_test(&a, &a, &truth, &u).p_value, 1.0);
    }

    #[test]
    fn calibration_on_table1() {
        let s = table1_scores();
        let expert = labels(LabelMethod::Expert, &[("s", "animal")]);
        let c = calibrate_threshold_vs_expert(&s, &expert, &[0.2, 0.4, 0.6]).unwrap();
        // hand count: t=0.2 -> animal, echo, loud agree; t=0.4 adds walking; t=0.6 all five
        assert_eq!(c.agreement, [(0.2, 3), (0.4, 4), (0.6, 5)]);
        assert_eq!(c.threshold, 0.6);
        assert!(c.disagreements.is_empty());
        assert!(calibrate_threshold_vs_expert(&s, &expert, &[]).is_err());
    }

    #[test]
    fn calibration_edges() {
        let s = table1_scores();
        // expert equals crowd at 0.4 exactly
        let expert = crowdtruth_labels(&s, 0.4);
        let c = calibrate_threshold_vs_expert(&s, &expert, &[0.3, 0.4]).unwrap();
        assert_eq!(c.threshold, 0.4);
        assert_eq!(c.agreement[1].1, 5);
        let none = LabelSet::new(LabelMethod::Expert);
        let c = calibrate_threshold_vs_expert(&s, &none, &default_grid()).unwrap();
        assert_eq!(c.threshold, 0.8);
        let c = calibrate_threshold_vs_expert(&s, &none, &[0.1, 0.2, 0.35]).unwrap();
        assert_eq!(c.threshold, 0.35);
        assert_eq!(c.disagreements.len(), 2);
        // 0.3160 stays positive at 0.3, so 0.2 and 0.3 tie and the lower wins
        let c = calibrate_threshold_vs_expert(&s, &none, &[0.2, 0.3]).unwrap();
        assert_eq!(c.threshold, 0.2);
    }
}
