//! Spam removal and in-task effort consistency checks.
//!
//! A worker is flagged when any of their metrics leaves the task's
//! standard-deviation band: `wwa < mean - k*std`, `wma < mean - k*std`, or
//! (optionally) `na > mean + k*std`. Only low agreement and high annotation
//! counts are penalized.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::metrics::compute_all_metrics;
use crate::model::{Judgment, WorkerMetrics};
use crate::rng::keyed_rng;
use crate::stats::{mean, population_std};
use crate::vector_space::VectorSet;

const DEGENERATE_STD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpamReason {
    LowWwa,
    LowWma,
    HighNa,
    FailedEffortCheck,
}

impl SpamReason {
    pub fn as_str(self) -> &'static str {
        match self {
            SpamReason::LowWwa => "low_wwa",
            SpamReason::LowWma => "low_wma",
            SpamReason::HighNa => "high_na",
            SpamReason::FailedEffortCheck => "failed_effort_check",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "low_wwa" => Some(SpamReason::LowWwa),
            "low_wma" => Some(SpamReason::LowWma),
            "high_na" => Some(SpamReason::HighNa),
            "failed_effort_check" => Some(SpamReason::FailedEffortCheck),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpamVerdict {
    pub worker_id: String,
    pub is_spam: bool,
    pub reasons: BTreeSet<SpamReason>,
    pub wwa: f64,
    pub wma: f64,
    pub na: f64,
}

impl SpamVerdict {
    fn from_metrics(m: &WorkerMetrics) -> Self {
        SpamVerdict {
            worker_id: m.worker_id.clone(),
            is_spam: false,
            reasons: BTreeSet::new(),
            wwa: m.wwa,
            wma: m.wma,
            na: m.na,
        }
    }

    pub fn flag(&mut self, reason: SpamReason) {
        self.reasons.insert(reason);
        self.is_spam = true;
    }
}

/// Judgment-level effort rules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EffortRules {
    /// The explicit "nothing applies" option of a closed task, if any.
    pub none_option: Option<String>,
    /// Judgments with at most this many annotations need a justification
    /// (3 for expression highlighting).
    pub explain_at_or_below: Option<usize>,
}

impl Default for EffortRules {
    fn default() -> Self {
        EffortRules {
            none_option: Some("none".to_string()),
            explain_at_or_below: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct EffortRejection {
    pub worker_id: String,
    pub unit_id: String,
    pub rule: &'static str,
}

/// Splits judgments into accepted ones and effort-check failures. A judgment
/// fails when it selects nothing (or only the "none" option) without a
/// justification, or when it falls at or below the explanation cutoff
/// without one.
pub fn apply_effort_checks(
    judgments: &[Judgment],
    rules: &EffortRules,
) -> (Vec<Judgment>, Vec<EffortRejection>) {
    let mut accepted = Vec::with_capacity(judgments.len());
    let mut rejected = Vec::new();
    for j in judgments {
        let explained = j.has_justification();
        let only_none = match &rules.none_option {
            Some(none) => j.raw_annotations.iter().all(|a| a == none),
            None => j.raw_annotations.is_empty(),
        };
        let rule = if only_none && !explained {
            Some("no_annotation_without_justification")
        } else if rules
            .explain_at_or_below
            .is_some_and(|cut| j.raw_annotations.len() <= cut)
            && !explained
        {
            Some("few_annotations_without_justification")
        } else {
            None
        };
        match rule {
            Some(rule) => rejected.push(EffortRejection {
                worker_id: j.worker_id.clone(),
                unit_id: j.unit_id.clone(),
                rule,
            }),
            None => accepted.push(j.clone()),
        }
    }
    (accepted, rejected)
}

/// Standard-deviation band test over all workers of a task. Returns one
/// verdict per worker in input order.
pub fn detect_spammers(metrics: &[WorkerMetrics], k: f64, use_na: bool) -> Vec<SpamVerdict> {
    let mut verdicts: Vec<SpamVerdict> = metrics.iter().map(SpamVerdict::from_metrics).collect();
    if metrics.len() < 2 {
        log::warn!(
            "spam detection needs at least 2 workers, got {}; nothing flagged",
            metrics.len()
        );
        return verdicts;
    }
    let column = |f: fn(&WorkerMetrics) -> f64| -> (f64, f64) {
        let xs: Vec<f64> = metrics.iter().map(f).collect();
        (mean(&xs), population_std(&xs))
    };
    let (wwa_mu, wwa_sd) = column(|m| m.wwa);
    let (wma_mu, wma_sd) = column(|m| m.wma);
    let (na_mu, na_sd) = column(|m| m.na);

    for (m, v) in metrics.iter().zip(verdicts.iter_mut()) {
        if wwa_sd > DEGENERATE_STD && m.wwa < wwa_mu - k * wwa_sd {
            v.flag(SpamReason::LowWwa);
        }
        if wma_sd > DEGENERATE_STD && m.wma < wma_mu - k * wma_sd {
            v.flag(SpamReason::LowWma);
        }
        if use_na && na_sd > DEGENERATE_STD && m.na > na_mu + k * na_sd {
            v.flag(SpamReason::HighNa);
        }
    }
    verdicts
}

/// Adds `failed_effort_check` to the verdict of every worker with a rejected
/// judgment. Workers without a verdict yet get one with zeroed metrics.
pub fn merge_effort_failures(verdicts: &mut Vec<SpamVerdict>, rejections: &[EffortRejection]) {
    let failed: BTreeSet<&str> = rejections.iter().map(|r| r.worker_id.as_str()).collect();
    for v in verdicts.iter_mut() {
        if failed.contains(v.worker_id.as_str()) {
            v.flag(SpamReason::FailedEffortCheck);
        }
    }
    let known: BTreeSet<String> = verdicts.iter().map(|v| v.worker_id.clone()).collect();
    for w in failed {
        if !known.contains(w) {
            let mut v = SpamVerdict {
                worker_id: w.to_string(),
                is_spam: false,
                reasons: BTreeSet::new(),
                wwa: 0.0,
                wma: 0.0,
                na: 0.0,
            };
            v.flag(SpamReason::FailedEffortCheck);
            verdicts.push(v);
        }
    }
    verdicts.sort_by(|a, b| a.worker_id.cmp(&b.worker_id));
}

fn spam_ids(verdicts: &[SpamVerdict]) -> BTreeSet<&str> {
    verdicts
        .iter()
        .filter(|v| v.is_spam)
        .map(|v| v.worker_id.as_str())
        .collect()
}

/// Drops every judgment of a spam worker. Surviving judgments are untouched.
pub fn filter_spam(judgments: &[Judgment], verdicts: &[SpamVerdict]) -> Vec<Judgment> {
    let spam = spam_ids(verdicts);
    let kept: Vec<Judgment> = judgments
        .iter()
        .filter(|j| !spam.contains(j.worker_id.as_str()))
        .cloned()
        .collect();
    if kept.is_empty() && !judgments.is_empty() {
        log::warn!("every worker was flagged as spam; the filtered dataset is empty");
    }
    kept
}

/// Vector-level counterpart of [`filter_spam`].
pub fn filter_spam_vectors(vectors: &VectorSet, verdicts: &[SpamVerdict]) -> VectorSet {
    let spam = spam_ids(verdicts);
    vectors.retain_vectors(|v| !spam.contains(v.worker_id.as_str()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpamSettings {
    pub k: f64,
    pub use_na: bool,
    /// Re-run detection on the survivors until nobody new is flagged.
    pub fixpoint: bool,
}

impl Default for SpamSettings {
    fn default() -> Self {
        SpamSettings {
            k: 1.0,
            use_na: true,
            fixpoint: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpamOutcome {
    /// One verdict per worker, sorted by id.
    pub verdicts: Vec<SpamVerdict>,
    pub filtered: VectorSet,
    pub rounds: usize,
}

/// Detects spammers on `vectors`, merges effort-check failures, and returns
/// the filtered vectors. Single pass unless `settings.fixpoint`.
pub fn remove_spam(
    vectors: &VectorSet,
    rejections: &[EffortRejection],
    settings: &SpamSettings,
) -> SpamOutcome {
    let (metrics, _) = compute_all_metrics(vectors);
    let mut verdicts = detect_spammers(&metrics, settings.k, settings.use_na);
    merge_effort_failures(&mut verdicts, rejections);
    let mut filtered = filter_spam_vectors(vectors, &verdicts);
    let mut rounds = 1;

    // repeat on the survivors until nobody new is flagged
    if settings.fixpoint {
        loop {
            let (metrics, _) = compute_all_metrics(&filtered);
            let fresh = detect_spammers(&metrics, settings.k, settings.use_na);
            let newly: Vec<SpamVerdict> = fresh.into_iter().filter(|v| v.is_spam).collect();
            if newly.is_empty() {
                break;
            }
            rounds += 1;
            let by_id: BTreeMap<&str, &SpamVerdict> =
                newly.iter().map(|v| (v.worker_id.as_str(), v)).collect();
            for v in verdicts.iter_mut() {
                if let Some(n) = by_id.get(v.worker_id.as_str()) {
                    v.reasons.extend(n.reasons.iter().copied());
                    v.is_spam = true;
                    v.wwa = n.wwa;
                    v.wma = n.wma;
                    v.na = n.na;
                }
            }
            filtered = filter_spam_vectors(&filtered, &verdicts);
        }
    }

    SpamOutcome {
        verdicts,
        filtered,
        rounds,
    }
}

/// Seeded random sample of up to `n` judgments from flagged workers, for
/// manual review. Output is sorted by (worker, unit).
pub fn review_sample(
    judgments: &[Judgment],
    verdicts: &[SpamVerdict],
    n: usize,
    seed: u64,
) -> Vec<Judgment> {
    let spam = spam_ids(verdicts);
    let mut pool: Vec<&Judgment> = judgments
        .iter()
        .filter(|j| spam.contains(j.worker_id.as_str()))
        .collect();
    pool.sort_by(|a, b| (&a.worker_id, &a.unit_id).cmp(&(&b.worker_id, &b.unit_id)));
    let take = n.min(pool.len());
    let mut rng = keyed_rng(seed, "review", "");
    let mut picked: Vec<usize> = sample(&mut rng, pool.len(), take).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| pool[i].clone()).collect()
}
