//! Shared domain types: judgments, vocabularies, vectors, metrics and label sets.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One worker's raw answer set on one media unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub worker_id: String,
    pub unit_id: String,
    /// Ordered set of answer tokens. Closed tasks carry option ids, open-ended
    /// tasks carry free-text keywords or highlighted expressions.
    pub raw_annotations: Vec<String>,
    pub justification: Option<String>,
    pub task_id: String,
}

impl Judgment {
    pub fn new<I, S>(worker_id: &str, unit_id: &str, annotations: I, task_id: &str) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut raw = Vec::new();
        for a in annotations {
            let a = a.into();
            if !raw.contains(&a) {
                raw.push(a);
            }
        }
        Judgment {
            worker_id: worker_id.to_string(),
            unit_id: unit_id.to_string(),
            raw_annotations: raw,
            justification: None,
            task_id: task_id.to_string(),
        }
    }

    /// Stores the trimmed text; blank text means no justification.
    pub fn with_justification(mut self, text: &str) -> Self {
        let text = text.trim();
        self.justification = (!text.is_empty()).then(|| text.to_string());
        self
    }

    pub fn has_justification(&self) -> bool {
        self.justification
            .as_deref()
            .is_some_and(|j| !j.trim().is_empty())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VocabularyScope {
    Global,
    PerUnit,
}

/// The ordered, finite answer space of a task (or of one unit, for open-ended tasks).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyRepr")]
pub struct AnnotationVocabulary {
    pub task_id: String,
    pub scope: VocabularyScope,
    entries: Vec<String>,
    cluster_map: BTreeMap<String, String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

#[derive(Deserialize)]
struct VocabularyRepr {
    task_id: String,
    scope: VocabularyScope,
    entries: Vec<String>,
    cluster_map: BTreeMap<String, String>,
}

impl TryFrom<VocabularyRepr> for AnnotationVocabulary {
    type Error = Error;

    fn try_from(r: VocabularyRepr) -> Result<Self> {
        Self::from_parts(&r.task_id, r.scope, r.entries, r.cluster_map)
    }
}

impl AnnotationVocabulary {
    /// Closed-task vocabulary: entries keep the given order, identity cluster map.
    pub fn closed<I, S>(task_id: &str, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let entries: Vec<String> = entries.into_iter().map(Into::into).collect();
        let cluster_map = entries.iter().map(|e| (e.clone(), e.clone())).collect();
        Self::from_parts(task_id, VocabularyScope::Global, entries, cluster_map)
    }

    /// Per-unit vocabulary: entries are sorted lexicographically.
    pub fn per_unit(
        task_id: &str,
        entries: impl IntoIterator<Item = String>,
        cluster_map: BTreeMap<String, String>,
    ) -> Result<Self> {
        let mut entries: Vec<String> = entries.into_iter().collect();
        entries.sort();
        Self::from_parts(task_id, VocabularyScope::PerUnit, entries, cluster_map)
    }

    /// Entries in the given order with an identity cluster map.
    pub fn with_scope(task_id: &str, scope: VocabularyScope, entries: Vec<String>) -> Result<Self> {
        let cluster_map = entries.iter().map(|e| (e.clone(), e.clone())).collect();
        Self::from_parts(task_id, scope, entries, cluster_map)
    }

    fn from_parts(
        task_id: &str,
        scope: VocabularyScope,
        entries: Vec<String>,
        cluster_map: BTreeMap<String, String>,
    ) -> Result<Self> {
        let mut index = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if index.insert(e.clone(), i).is_some() {
                return Err(Error::InvalidVocabulary(format!("duplicate entry {e:?}")));
            }
        }
        if let Some((raw, target)) = cluster_map.iter().find(|(_, t)| !index.contains_key(*t)) {
            return Err(Error::InvalidVocabulary(format!(
                "token {raw:?} maps to {target:?}, which is not an entry"
            )));
        }
        Ok(AnnotationVocabulary {
            task_id: task_id.to_string(),
            scope,
            entries,
            cluster_map,
            index,
        })
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn cluster_map(&self) -> &BTreeMap<String, String> {
        &self.cluster_map
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index_of(&self, annotation_id: &str) -> Option<usize> {
        self.index.get(annotation_id).copied()
    }

    /// Resolves a raw token to the index of its vocabulary entry.
    pub fn resolve(&self, token: &str) -> Option<usize> {
        self.cluster_map.get(token).and_then(|id| self.index_of(id))
    }
}

/// Boolean vector over the vocabulary encoding one worker's choices on one unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerVector {
    pub worker_id: String,
    pub unit_id: String,
    pub bits: Vec<bool>,
}

impl WorkerVector {
    pub fn zeros(worker_id: &str, unit_id: &str, len: usize) -> Self {
        WorkerVector {
            worker_id: worker_id.to_string(),
            unit_id: unit_id.to_string(),
            bits: vec![false; len],
        }
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn as_counts(&self) -> Vec<u32> {
        self.bits.iter().map(|&b| u32::from(b)).collect()
    }
}

/// Componentwise sum of the worker vectors of one unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MediaUnitVector {
    pub unit_id: String,
    pub counts: Vec<u32>,
    pub n_workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerMetrics {
    pub worker_id: String,
    /// Worker-worker agreement.
    pub wwa: f64,
    /// Worker-media unit agreement.
    pub wma: f64,
    /// Average annotations per unit.
    pub na: f64,
    pub n_units: usize,
}

/// Clarity of one (unit, annotation) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitAnnotationScore {
    pub unit_id: String,
    pub annotation_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMethod {
    Crowdtruth,
    MajorityVote,
    Single,
    Expert,
    Trusted,
}

impl LabelMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelMethod::Crowdtruth => "crowdtruth",
            LabelMethod::MajorityVote => "majority_vote",
            LabelMethod::Single => "single",
            LabelMethod::Expert => "expert",
            LabelMethod::Trusted => "trusted",
        }
    }
}

impl fmt::Display for LabelMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for LabelMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "crowdtruth" => Ok(LabelMethod::Crowdtruth),
            "majority" | "majority_vote" => Ok(LabelMethod::MajorityVote),
            "single" => Ok(LabelMethod::Single),
            "expert" => Ok(LabelMethod::Expert),
            "trusted" => Ok(LabelMethod::Trusted),
            other => Err(Error::Config(format!("unknown label method {other:?}"))),
        }
    }
}

/// A (unit, annotation) key.
pub type PairKey = (String, String);

/// Binary labels over (unit, annotation) pairs. Absent pairs are negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSet {
    pub method: LabelMethod,
    #[serde(with = "pair_entries")]
    pub labels: BTreeMap<PairKey, bool>,
    pub threshold: Option<f64>,
}

impl LabelSet {
    pub fn new(method: LabelMethod) -> Self {
        LabelSet {
            method,
            labels: BTreeMap::new(),
            threshold: None,
        }
    }

    pub fn insert(&mut self, unit_id: &str, annotation_id: &str, label: bool) {
        self.labels
            .insert((unit_id.to_string(), annotation_id.to_string()), label);
    }

    pub fn is_positive(&self, unit_id: &str, annotation_id: &str) -> bool {
        self.labels
            .get(&(unit_id.to_string(), annotation_id.to_string()))
            .copied()
            .unwrap_or(false)
    }

    pub fn positives(&self) -> BTreeSet<PairKey> {
        self.labels
            .iter()
            .filter(|(_, v)| **v)
            .map(|(k, _)| k.clone())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

// JSON maps need string keys, so labels travel as a list of triples.
mod pair_entries {
    use super::PairKey;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeMap;

    pub fn serialize<S: Serializer>(
        map: &BTreeMap<PairKey, bool>,
        s: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        let v: Vec<(&str, &str, bool)> = map
            .iter()
            .map(|((u, a), l)| (u.as_str(), a.as_str(), *l))
            .collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<BTreeMap<PairKey, bool>, D::Error> {
        let v: Vec<(String, String, bool)> = Vec::deserialize(d)?;
        Ok(v.into_iter().map(|(u, a, l)| ((u, a), l)).collect())
    }
}

/// Confusion counts and micro-averaged scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaluationOutcome {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

impl EvaluationOutcome {
    /// Derives the scores from confusion counts. Empty denominators give 0.
    pub fn from_counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        let ratio = |num: u64, den: u64| {
            if den == 0 {
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if tp == 0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        let accuracy = ratio(tp + tn, tp + fp + fn_ + tn);
        EvaluationOutcome {
            tp,
            fp,
            fn_,
            tn,
            precision,
            recall,
            f1,
            accuracy,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Violation {
    DuplicatePair {
        worker_id: String,
        unit_id: String,
        /// Zero-based positions of the offending judgments in the input.
        first: usize,
        second: usize,
    },
    UnknownAnnotation {
        worker_id: String,
        unit_id: String,
        token: String,
    },
    EmptyJudgment {
        worker_id: String,
        unit_id: String,
    },
    TooManyAnnotations {
        worker_id: String,
        unit_id: String,
        count: usize,
        limit: usize,
    },
}

impl Violation {
    /// Fatal violations make a dataset unusable. The others reject a single
    /// judgment and are resolved downstream.
    pub fn is_fatal(&self) -> bool {
        matches!(
            self,
            Violation::DuplicatePair { .. } | Violation::UnknownAnnotation { .. }
        )
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Violation::DuplicatePair { .. } => "duplicate_pair",
            Violation::UnknownAnnotation { .. } => "unknown_annotation",
            Violation::EmptyJudgment { .. } => "empty_judgment",
            Violation::TooManyAnnotations { .. } => "too_many_annotations",
        }
    }

    pub fn ids(&self) -> (&str, &str) {
        match self {
            Violation::DuplicatePair {
                worker_id, unit_id, ..
            }
            | Violation::UnknownAnnotation {
                worker_id, unit_id, ..
            }
            | Violation::EmptyJudgment { worker_id, unit_id }
            | Violation::TooManyAnnotations {
                worker_id, unit_id, ..
            } => (worker_id, unit_id),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicatePair { worker_id, unit_id, first, second } => write!(
                f,
                "worker {worker_id} judged unit {unit_id} twice (records {first} and {second})"
            ),
            Violation::UnknownAnnotation { worker_id, unit_id, token } => write!(
                f,
                "worker {worker_id} on unit {unit_id}: {token:?} is not in the vocabulary"
            ),
            Violation::EmptyJudgment { worker_id, unit_id } => write!(
                f,
                "worker {worker_id} on unit {unit_id}: no annotations and no justification"
            ),
            Violation::TooManyAnnotations { worker_id, unit_id, count, limit } => write!(
                f,
                "worker {worker_id} on unit {unit_id}: {count} annotations exceed the limit of {limit}"
            ),
        }
    }
}

/// Checks the judgment invariants. Violations are returned, never raised.
///
/// `vocab` is the global vocabulary of a closed task; pass `None` for
/// open-ended tasks, whose answer space is derived from the judgments.
pub fn validate_dataset(
    judgments: &[Judgment],
    vocab: Option<&AnnotationVocabulary>,
    max_annotations: Option<usize>,
) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen: HashMap<(&str, &str), usize> = HashMap::new();
    for (pos, j) in judgments.iter().enumerate() {
        if let Some(first) = seen.insert((&j.worker_id, &j.unit_id), pos) {
            out.push(Violation::DuplicatePair {
                worker_id: j.worker_id.clone(),
                unit_id: j.unit_id.clone(),
                first,
                second: pos,
            });
        }
        if j.raw_annotations.is_empty() && !j.has_justification() {
            out.push(Violation::EmptyJudgment {
                worker_id: j.worker_id.clone(),
                unit_id: j.unit_id.clone(),
            });
        }
        if let Some(vocab) = vocab {
            for token in &j.raw_annotations {
                if vocab.resolve(token).is_none() {
                    out.push(Violation::UnknownAnnotation {
                        worker_id: j.worker_id.clone(),
                        unit_id: j.unit_id.clone(),
                        token: token.clone(),
                    });
                }
            }
        }
        if let Some(limit) = max_annotations {
            if j.raw_annotations.len() > limit {
                out.push(Violation::TooManyAnnotations {
                    worker_id: j.worker_id.clone(),
                    unit_id: j.unit_id.clone(),
                    count: j.raw_annotations.len(),
                    limit,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> AnnotationVocabulary {
        AnnotationVocabulary::closed("t1", ["cause", "treat", "none"]).unwrap()
    }

    #[test]
    fn valid_fixture_has_no_violations() {
        let js = vec![
            Judgment::new("w1", "u1", ["cause", "treat"], "t1"),
            Judgment::new("w2", "u1", ["treat"], "t1"),
            Judgment::new("w1", "u2", Vec::<String>::new(), "t1").with_justification("no relation"),
        ];
        assert!(validate_dataset(&js, Some(&vocab()), None).is_empty());
    }

    #[test]
    fn duplicate_pair_is_reported_once() {
        let js = vec![
            Judgment::new("w1", "u1", ["cause"], "t1"),
            Judgment::new("w1", "u1", ["treat"], "t1"),
        ];
        let v = validate_dataset(&js, Some(&vocab()), None);
        assert_eq!(v.len(), 1);
        assert!(matches!(
            v[0],
            Violation::DuplicatePair {
                first: 0,
                second: 1,
                ..
            }
        ));
        assert!(v[0].is_fatal());
    }

    #[test]
    fn unknown_token_is_reported() {
        let js = vec![Judgment::new("w1", "u1", ["prevent"], "t1")];
        let v = validate_dataset(&js, Some(&vocab()), None);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind(), "unknown_annotation");
    }

    #[test]
    fn empty_without_justification_and_over_limit() {
        let js = vec![
            Judgment::new("w1", "u1", Vec::<String>::new(), "t1"),
            Judgment::new("w2", "u1", ["a", "b", "c"], "t1"),
        ];
        let v = validate_dataset(&js, None, Some(2));
        assert_eq!(v.len(), 2);
        assert!(v.iter().all(|x| !x.is_fatal()));
    }

    #[test]
    fn vocabulary_rejects_duplicates_and_dangling_cluster_targets() {
        assert!(AnnotationVocabulary::closed("t", ["a", "a"]).is_err());
        let mut map = BTreeMap::new();
        map.insert("dogs".to_string(), "dog".to_string());
        assert!(AnnotationVocabulary::per_unit("t", vec!["cat".to_string()], map).is_err());
    }

    #[test]
    fn per_unit_entries_are_sorted() {
        let v = AnnotationVocabulary::per_unit(
            "t",
            vec!["walking".into(), "animal".into()],
            BTreeMap::from([
                ("walking".to_string(), "walking".to_string()),
                ("animal".to_string(), "animal".to_string()),
            ]),
        )
        .unwrap();
        assert_eq!(v.entries(), ["animal", "walking"]);
        assert_eq!(v.resolve("walking"), Some(1));
    }

    #[test]
    fn outcome_conventions() {
        let o = EvaluationOutcome::from_counts(0, 0, 0, 5);
        assert_eq!(
            (o.precision, o.recall, o.f1, o.accuracy),
            (0.0, 0.0, 0.0, 1.0)
        );
        let o = EvaluationOutcome::from_counts(2, 1, 1, 0);
        assert!((o.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(o.total(), 4);
    }

    #[test]
    fn label_lookup() {
        let mut l = LabelSet::new(LabelMethod::Expert);
        l.insert("u1", "a", true);
        l.insert("u1", "b", false);
        assert!(l.is_positive("u1", "a"));
        assert!(!l.is_positive("u1", "b"));
        assert!(!l.is_positive("u1", "c"));
        assert!(!l.is_positive("u0", "a"));
    }
}
