//! Worker and media unit vectors, and the answer-space reduction that turns
//! open-ended answers into a finite per-unit vocabulary.
//!
//! Closed tasks map every judgment onto the task's global option list. For
//! open-ended tasks the vocabulary of a unit only exists once all of its
//! judgments are in: tokens are normalized, grouped syntactically (stemming and
//! single-edit spelling variants) and optionally semantically (embedding cosine),
//! and each group becomes one vector component.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AnnotationVocabulary, Judgment, MediaUnitVector, PairKey, WorkerVector};

/// Default cosine similarity above which two keywords are merged.
pub const DEFAULT_SIMILARITY_THRESHOLD: f64 = 0.7;

/// Lowercases and collapses internal whitespace.
pub fn normalize_token(raw: &str) -> String {
    raw.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Pretrained word vectors, read-only once loaded.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            vectors: HashMap::new(),
        }
    }

    pub fn insert(&mut self, token: &str, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Config(format!(
                "embedding for {token:?} has {} components, expected {}",
                vector.len(),
                self.dim
            )));
        }
        self.vectors.insert(token.to_string(), vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }

    /// Vector for a (possibly multi-word) keyword: the exact entry, then the
    /// underscore-joined phrase, then the mean of its word vectors. `None` if
    /// any word is missing.
    pub fn phrase_vector(&self, keyword: &str) -> Option<Vec<f64>> {
        if let Some(v) = self.get(keyword) {
            return Some(v.to_vec());
        }
        let words: Vec<&str> = keyword.split_whitespace().collect();
        if words.len() > 1 {
            if let Some(v) = self.get(&words.join("_")) {
                return Some(v.to_vec());
            }
        }
        if words.is_empty() {
            return None;
        }
        let mut acc = vec![0.0; self.dim];
        for w in &words {
            let v = self.get(w)?;
            for (a, x) in acc.iter_mut().zip(v) {
                *a += x;
            }
        }
        let n = words.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Some(acc)
    }
}

/// Plain cosine similarity of two real vectors; 0 if either has zero norm.
pub fn real_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// How each reduced token ended up in its cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceAction {
    Representative,
    Stem,
    Spelling,
    Semantic,
    Stopword,
    NoEmbedding,
}

impl TraceAction {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceAction::Representative => "representative",
            TraceAction::Stem => "stem",
            TraceAction::Spelling => "spelling",
            TraceAction::Semantic => "semantic",
            TraceAction::Stopword => "stopword",
            TraceAction::NoEmbedding => "no_embedding",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub representative: String,
    pub members: Vec<String>,
    /// Per member: the relation that linked it to its neighbour on the way to
    /// the representative.
    pub actions: Vec<TraceAction>,
}

/// Audit record of the answer-space reduction of one unit.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ReductionTrace {
    pub unit_id: String,
    pub clusters: Vec<Cluster>,
    pub removed_stopwords: Vec<String>,
    /// Tokens that had no embedding and so were never merged semantically.
    pub missing_embeddings: Vec<String>,
}

impl ReductionTrace {
    /// One (representative, member, action) row per reduced token, plus a
    /// `no_embedding` row for tokens without a vector and a `stopword` row per
    /// removed word.
    pub fn rows(&self) -> Vec<(String, String, TraceAction)> {
        let missing: BTreeSet<&String> = self.missing_embeddings.iter().collect();
        let mut rows = Vec::new();
        for c in &self.clusters {
            for (m, action) in c.members.iter().zip(&c.actions) {
                rows.push((c.representative.clone(), m.clone(), *action));
                if missing.contains(m) {
                    rows.push((
                        c.representative.clone(),
                        m.clone(),
                        TraceAction::NoEmbedding,
                    ));
                }
            }
        }
        for s in &self.removed_stopwords {
            rows.push((String::new(), s.clone(), TraceAction::Stopword));
        }
        rows
    }
}

/// The set of reduced tokens one worker gave on one unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkerTokens {
    pub worker_id: String,
    pub unit_id: String,
    pub tokens: BTreeSet<String>,
    pub removed_stopwords: BTreeSet<String>,
}

/// Splits highlighted expressions into words and drops stopwords. A word is
/// attributed to the worker if it occurs in any of their expressions.
pub fn tokenize_expressions(
    judgments: &[Judgment],
    stopwords: &BTreeSet<String>,
) -> Vec<WorkerTokens> {
    judgments
        .iter()
        .map(|j| {
            let mut tokens = BTreeSet::new();
            let mut removed = BTreeSet::new();
            for expr in &j.raw_annotations {
                for word in expr.split_whitespace() {
                    let word = word.to_lowercase();
                    if stopwords.contains(&word) {
                        removed.insert(word);
                    } else {
                        tokens.insert(word);
                    }
                }
            }
            WorkerTokens {
                worker_id: j.worker_id.clone(),
                unit_id: j.unit_id.clone(),
                tokens,
                removed_stopwords: removed,
            }
        })
        .collect()
}

/// Keeps each keyword atomic (multi-word keywords are not split), normalized.
pub fn keyword_tokens(judgments: &[Judgment]) -> Vec<WorkerTokens> {
    judgments
        .iter()
        .map(|j| WorkerTokens {
            worker_id: j.worker_id.clone(),
            unit_id: j.unit_id.clone(),
            tokens: j
                .raw_annotations
                .iter()
                .map(|t| normalize_token(t))
                .filter(|t| !t.is_empty())
                .collect(),
            removed_stopwords: BTreeSet::new(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct ClusterOptions<'a> {
    pub stemming: bool,
    pub spelling: bool,
    /// Spelling merges only apply when the shorter form has at least this many characters.
    pub spelling_min_len: usize,
    pub embeddings: Option<&'a EmbeddingTable>,
    pub similarity_threshold: f64,
}

impl Default for ClusterOptions<'_> {
    fn default() -> Self {
        ClusterOptions {
            stemming: true,
            spelling: true,
            spelling_min_len: 4,
            embeddings: None,
            similarity_threshold: DEFAULT_SIMILARITY_THRESHOLD,
        }
    }
}

impl ClusterOptions<'_> {
    /// No merging at all: every token is its own entry.
    pub fn identity() -> Self {
        ClusterOptions {
            stemming: false,
            spelling: false,
            ..Default::default()
        }
    }
}

fn stem_key(stemmer: &Stemmer, token: &str) -> String {
    token
        .split_whitespace()
        .map(|w| stemmer.stem(w).into_owned())
        .collect::<Vec<_>>()
        .join(" ")
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns whether the two sets were distinct.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        // smaller index wins so the forest shape does not depend on call order
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi] = lo;
        true
    }
}

/// Reduces the tokens of one unit to a per-unit vocabulary.
///
/// Tokens are merged by single-link closure over three relations: equal stems,
/// edit distance of at most one, and embedding cosine at or above the
/// threshold. The representative of a cluster is its most frequent member
/// (frequency = number of workers using it), ties broken lexicographically.
pub fn cluster_keywords(
    task_id: &str,
    unit_id: &str,
    worker_tokens: &[&WorkerTokens],
    options: &ClusterOptions<'_>,
) -> Result<(AnnotationVocabulary, ReductionTrace)> {
    let mut freq: BTreeMap<String, usize> = BTreeMap::new();
    let mut stopwords = BTreeSet::new();
    for wt in worker_tokens {
        for t in &wt.tokens {
            *freq.entry(t.clone()).or_default() += 1;
        }
        stopwords.extend(wt.removed_stopwords.iter().cloned());
    }
    let tokens: Vec<&String> = freq.keys().collect();
    let n = tokens.len();
    let mut sets = DisjointSet::new(n);
    // merges that joined two clusters, as a spanning forest
    let mut links: Vec<Vec<(usize, TraceAction)>> = vec![Vec::new(); n];
    let mut link = |sets: &mut DisjointSet, a: usize, b: usize, action: TraceAction| {
        if sets.union(a, b) {
            links[a].push((b, action));
            links[b].push((a, action));
        }
    };

    if options.stemming {
        let stemmer = Stemmer::create(Algorithm::English);
        let mut by_stem: HashMap<String, usize> = HashMap::new();
        for (i, t) in tokens.iter().enumerate() {
            match by_stem.entry(stem_key(&stemmer, t)) {
                std::collections::hash_map::Entry::Occupied(e) => {
                    link(&mut sets, *e.get(), i, TraceAction::Stem)
                }
                std::collections::hash_map::Entry::Vacant(e) => {
                    e.insert(i);
                }
            }
        }
    }

    if options.spelling {
        for i in 0..n {
            for k in (i + 1)..n {
                let (a, b) = (tokens[i], tokens[k]);
                let shorter = a.chars().count().min(b.chars().count());
                if shorter >= options.spelling_min_len && strsim::levenshtein(a, b) <= 1 {
                    link(&mut sets, i, k, TraceAction::Spelling);
                }
            }
        }
    }

    let mut missing = Vec::new();
    if let Some(table) = options.embeddings {
        let vecs: Vec<Option<Vec<f64>>> = tokens.iter().map(|t| table.phrase_vector(t)).collect();
        for (t, v) in tokens.iter().zip(&vecs) {
            if v.is_none() {
                missing.push((*t).clone());
            }
        }
        for (i, vi) in vecs.iter().enumerate() {
            let Some(vi) = vi else { continue };
            for (k, vk) in vecs.iter().enumerate().skip(i + 1) {
                let Some(vk) = vk else { continue };
                if real_cosine(vi, vk) >= options.similarity_threshold {
                    link(&mut sets, i, k, TraceAction::Semantic);
                }
            }
        }
    }

    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let root = sets.find(i);
        groups.entry(root).or_default().push(i);
    }

    let mut clusters = Vec::with_capacity(groups.len());
    let mut cluster_map = BTreeMap::new();
    for members in groups.values() {
        // members are in lexicographic order, so max_by keeps the first on ties
        let rep = members
            .iter()
            .copied()
            .max_by(|&a, &b| freq[tokens[a]].cmp(&freq[tokens[b]]).then(b.cmp(&a)))
            .expect("non-empty group");
        let representative = tokens[rep].clone();
        let mut how: BTreeMap<usize, TraceAction> =
            BTreeMap::from([(rep, TraceAction::Representative)]);
        let mut queue = std::collections::VecDeque::from([rep]);
        while let Some(x) = queue.pop_front() {
            for &(y, action) in &links[x] {
                if let std::collections::btree_map::Entry::Vacant(e) = how.entry(y) {
                    e.insert(action);
                    queue.push_back(y);
                }
            }
        }
        let actions: Vec<TraceAction> = members.iter().map(|i| how[i]).collect();
        let members: Vec<String> = members.iter().map(|&i| tokens[i].clone()).collect();
        for m in &members {
            cluster_map.insert(m.clone(), representative.clone());
        }
        clusters.push(Cluster {
            representative,
            members,
            actions,
        });
    }
    clusters.sort_by(|a, b| a.representative.cmp(&b.representative));

    let vocab = AnnotationVocabulary::per_unit(
        task_id,
        clusters.iter().map(|c| c.representative.clone()),
        cluster_map,
    )?;
    let trace = ReductionTrace {
        unit_id: unit_id.to_string(),
        clusters,
        removed_stopwords: stopwords.into_iter().collect(),
        missing_embeddings: missing,
    };
    Ok((vocab, trace))
}

/// One vector per judgment; bit `i` is set iff entry `i` was selected.
pub fn build_closed_vectors(
    judgments: &[Judgment],
    vocab: &AnnotationVocabulary,
) -> Result<Vec<WorkerVector>> {
    judgments
        .iter()
        .map(|j| {
            let mut v = WorkerVector::zeros(&j.worker_id, &j.unit_id, vocab.len());
            for token in &j.raw_annotations {
                let i = vocab.resolve(token).ok_or_else(|| Error::UnknownToken {
                    unit_id: j.unit_id.clone(),
                    token: token.clone(),
                })?;
                v.bits[i] = true;
            }
            Ok(v)
        })
        .collect()
}

/// Bit set iff any of the worker's tokens maps to that entry.
pub fn build_open_vectors(
    tokens: &[&WorkerTokens],
    vocab: &AnnotationVocabulary,
) -> Vec<WorkerVector> {
    tokens
        .iter()
        .map(|wt| {
            let mut v = WorkerVector::zeros(&wt.worker_id, &wt.unit_id, vocab.len());
            for t in &wt.tokens {
                if let Some(i) = vocab.resolve(t) {
                    v.bits[i] = true;
                }
            }
            v
        })
        .collect()
}

/// Componentwise sum of the worker vectors of one unit.
pub fn build_media_unit_vector(unit_id: &str, vectors: &[WorkerVector]) -> Result<MediaUnitVector> {
    let dim = vectors.first().map_or(0, |v| v.bits.len());
    let mut counts = vec![0u32; dim];
    for v in vectors {
        if v.bits.len() != dim {
            return Err(Error::MixedLengths {
                unit_id: unit_id.to_string(),
                expected: dim,
                found: v.bits.len(),
            });
        }
        for (c, &b) in counts.iter_mut().zip(&v.bits) {
            *c += u32::from(b);
        }
    }
    Ok(MediaUnitVector {
        unit_id: unit_id.to_string(),
        counts,
        n_workers: vectors.len(),
    })
}

/// Vocabulary and worker vectors of one unit.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitSpace {
    pub unit_id: String,
    pub vocabulary: Arc<AnnotationVocabulary>,
    /// Sorted by worker id.
    pub vectors: Vec<WorkerVector>,
}

impl UnitSpace {
    pub fn media_unit_vector(&self) -> MediaUnitVector {
        let mut counts = vec![0u32; self.vocabulary.len()];
        for v in &self.vectors {
            for (c, &b) in counts.iter_mut().zip(&v.bits) {
                *c += u32::from(b);
            }
        }
        MediaUnitVector {
            unit_id: self.unit_id.clone(),
            counts,
            n_workers: self.vectors.len(),
        }
    }
}

/// All vectorized units of a task, keyed and iterated by unit id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VectorSet {
    pub task_id: String,
    units: BTreeMap<String, UnitSpace>,
}

impl VectorSet {
    pub fn new(task_id: &str) -> Self {
        VectorSet {
            task_id: task_id.to_string(),
            units: BTreeMap::new(),
        }
    }

    /// Adds a unit. Vectors must all match the vocabulary length.
    pub fn insert_unit(
        &mut self,
        unit_id: &str,
        vocabulary: Arc<AnnotationVocabulary>,
        mut vectors: Vec<WorkerVector>,
    ) -> Result<()> {
        if let Some(v) = vectors.iter().find(|v| v.bits.len() != vocabulary.len()) {
            return Err(Error::MixedLengths {
                unit_id: unit_id.to_string(),
                expected: vocabulary.len(),
                found: v.bits.len(),
            });
        }
        vectors.sort_by(|a, b| a.worker_id.cmp(&b.worker_id));
        self.units.insert(
            unit_id.to_string(),
            UnitSpace {
                unit_id: unit_id.to_string(),
                vocabulary,
                vectors,
            },
        );
        Ok(())
    }

    pub fn units(&self) -> impl Iterator<Item = &UnitSpace> {
        self.units.values()
    }

    pub fn unit(&self, unit_id: &str) -> Option<&UnitSpace> {
        self.units.get(unit_id)
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn worker_ids(&self) -> BTreeSet<String> {
        self.units
            .values()
            .flat_map(|u| u.vectors.iter().map(|v| v.worker_id.clone()))
            .collect()
    }

    pub fn media_unit_vectors(&self) -> Vec<MediaUnitVector> {
        self.units
            .values()
            .map(UnitSpace::media_unit_vector)
            .collect()
    }

    /// Every (unit, vocabulary entry) pair: the evaluation universe.
    pub fn universe(&self) -> Vec<PairKey> {
        self.units
            .values()
            .flat_map(|u| {
                u.vocabulary
                    .entries()
                    .iter()
                    .map(move |a| (u.unit_id.clone(), a.clone()))
            })
            .collect()
    }

    /// Copy keeping only the vectors `keep` accepts. Units (and their
    /// vocabularies) are kept even when no vector survives.
    pub fn retain_vectors(&self, mut keep: impl FnMut(&WorkerVector) -> bool) -> VectorSet {
        let units = self
            .units
            .iter()
            .map(|(id, u)| {
                let vectors = u.vectors.iter().filter(|v| keep(v)).cloned().collect();
                (
                    id.clone(),
                    UnitSpace {
                        unit_id: u.unit_id.clone(),
                        vocabulary: Arc::clone(&u.vocabulary),
                        vectors,
                    },
                )
            })
            .collect();
        VectorSet {
            task_id: self.task_id.clone(),
            units,
        }
    }

    /// Copy with each unit's vectors replaced by `pick(unit)`.
    pub fn map_units(&self, mut pick: impl FnMut(&UnitSpace) -> Vec<WorkerVector>) -> VectorSet {
        let units = self
            .units
            .iter()
            .map(|(id, u)| {
                let mut vectors = pick(u);
                vectors.sort_by(|a, b| a.worker_id.cmp(&b.worker_id));
                (
                    id.clone(),
                    UnitSpace {
                        unit_id: u.unit_id.clone(),
                        vocabulary: Arc::clone(&u.vocabulary),
                        vectors,
                    },
                )
            })
            .collect();
        VectorSet {
            task_id: self.task_id.clone(),
            units,
        }
    }
}

fn group_by_unit<T>(items: &[T], unit_of: impl Fn(&T) -> &str) -> BTreeMap<&str, Vec<&T>> {
    let mut map: BTreeMap<&str, Vec<&T>> = BTreeMap::new();
    for it in items {
        map.entry(unit_of(it)).or_default().push(it);
    }
    map
}

/// Vectorizes a closed task against its global vocabulary.
pub fn vectorize_closed(
    task_id: &str,
    judgments: &[Judgment],
    vocab: AnnotationVocabulary,
) -> Result<VectorSet> {
    let vocab = Arc::new(vocab);
    let mut set = VectorSet::new(task_id);
    for (unit, js) in group_by_unit(judgments, |j| &j.unit_id) {
        let owned: Vec<Judgment> = js.into_iter().cloned().collect();
        let vectors = build_closed_vectors(&owned, &vocab)?;
        set.insert_unit(unit, Arc::clone(&vocab), vectors)?;
    }
    Ok(set)
}

/// Vectorizes an open-ended task: each unit gets its own reduced vocabulary.
pub fn vectorize_open(
    task_id: &str,
    tokens: &[WorkerTokens],
    options: &ClusterOptions<'_>,
) -> Result<(VectorSet, Vec<ReductionTrace>)> {
    let mut set = VectorSet::new(task_id);
    let mut traces = Vec::new();
    for (unit, wts) in group_by_unit(tokens, |t| &t.unit_id) {
        let (vocab, trace) = cluster_keywords(task_id, unit, &wts, options)?;
        let vectors = build_open_vectors(&wts, &vocab);
        set.insert_unit(unit, Arc::new(vocab), vectors)?;
        traces.push(trace);
    }
    Ok((set, traces))
}
