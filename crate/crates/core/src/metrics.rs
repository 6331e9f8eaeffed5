//! Disagreement-aware quality metrics over worker and media unit vectors.
//!
//! * media unit-annotation score: cosine between the media unit vector and the
//!   one-hot vector of an annotation, i.e. `counts[a] / ||counts||`.
//! * worker-worker agreement (wwa): for every partner sharing units with the
//!   worker, the mean cosine over the common units; then the unweighted mean
//!   over partners.
//! * worker-media unit agreement (wma): mean over the worker's units of the
//!   cosine between their vector and the media unit vector with their own
//!   vector subtracted.
//! * annotations per unit (na): mean number of selections per unit.
//!
//! Cosine conventions for degenerate inputs: two zero vectors agree (1), a
//! zero vector against a non-zero one disagrees (0).

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::model::{MediaUnitVector, UnitAnnotationScore, WorkerMetrics, WorkerVector};
use crate::stats::CompensatedSum;
use crate::vector_space::VectorSet;

/// Cosine of two non-negative count vectors with the zero-vector conventions.
pub fn agreement_cosine(a: &[u32], b: &[u32]) -> f64 {
    let mut dot = 0u64;
    let mut na = 0u64;
    let mut nb = 0u64;
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (u64::from(x), u64::from(y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    match (na == 0, nb == 0) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => dot as f64 / ((na as f64).sqrt() * (nb as f64).sqrt()),
    }
}

fn bits_cosine(a: &[bool], b: &[bool]) -> f64 {
    let mut dot = 0u64;
    let mut na = 0u64;
    let mut nb = 0u64;
    for (&x, &y) in a.iter().zip(b) {
        dot += u64::from(x && y);
        na += u64::from(x);
        nb += u64::from(y);
    }
    match (na == 0, nb == 0) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => dot as f64 / ((na as f64).sqrt() * (nb as f64).sqrt()),
    }
}

/// Score of annotation `index` on a unit. Zero for a zero media unit vector.
pub fn unit_annotation_score_at(muv: &MediaUnitVector, index: usize) -> f64 {
    let norm_sq: u64 = muv
        .counts
        .iter()
        .map(|&c| u64::from(c) * u64::from(c))
        .sum();
    if norm_sq == 0 {
        return 0.0;
    }
    f64::from(muv.counts[index]) / (norm_sq as f64).sqrt()
}

/// Media unit-annotation score for a named annotation of a unit.
pub fn unit_annotation_score(
    vectors: &VectorSet,
    unit_id: &str,
    annotation_id: &str,
) -> Result<UnitAnnotationScore> {
    let unknown = || Error::UnknownAnnotation {
        unit_id: unit_id.to_string(),
        annotation_id: annotation_id.to_string(),
    };
    let unit = vectors.unit(unit_id).ok_or_else(unknown)?;
    let index = unit
        .vocabulary
        .index_of(annotation_id)
        .ok_or_else(unknown)?;
    Ok(UnitAnnotationScore {
        unit_id: unit_id.to_string(),
        annotation_id: annotation_id.to_string(),
        score: unit_annotation_score_at(&unit.media_unit_vector(), index),
    })
}

/// All annotation scores of one unit, in vocabulary order.
pub fn unit_scores(muv: &MediaUnitVector) -> Vec<f64> {
    (0..muv.counts.len())
        .map(|i| unit_annotation_score_at(muv, i))
        .collect()
}

fn vectors_of<'a>(vectors: &'a VectorSet, worker_id: &str) -> Vec<(&'a str, &'a WorkerVector)> {
    vectors
        .units()
        .filter_map(|u| {
            u.vectors
                .binary_search_by(|v| v.worker_id.as_str().cmp(worker_id))
                .ok()
                .map(|i| (u.unit_id.as_str(), &u.vectors[i]))
        })
        .collect()
}

/// Mean cosine between two workers over the units they both annotated.
/// `None` when they share no unit.
pub fn pairwise_agreement(vectors: &VectorSet, a: &str, b: &str) -> Option<f64> {
    let mut sum = CompensatedSum::default();
    let mut n = 0usize;
    for u in vectors.units() {
        let find = |w: &str| {
            u.vectors
                .binary_search_by(|v| v.worker_id.as_str().cmp(w))
                .ok()
                .map(|i| &u.vectors[i])
        };
        if let (Some(va), Some(vb)) = (find(a), find(b)) {
            sum.add(bits_cosine(&va.bits, &vb.bits));
            n += 1;
        }
    }
    (n > 0).then(|| sum.total() / n as f64)
}

/// Worker-worker agreement of one worker; 0 when nobody shares a unit with them.
pub fn worker_worker_agreement(vectors: &VectorSet, worker_id: &str) -> f64 {
    let partners: Vec<String> = vectors
        .worker_ids()
        .into_iter()
        .filter(|w| w != worker_id)
        .collect();
    let mut sum = CompensatedSum::default();
    let mut n = 0usize;
    for p in &partners {
        if let Some(a) = pairwise_agreement(vectors, worker_id, p) {
            sum.add(a);
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum.total() / n as f64
    }
}

/// Worker-media unit agreement of one worker, with leave-one-out aggregation.
pub fn worker_media_unit_agreement(vectors: &VectorSet, worker_id: &str) -> f64 {
    let mut sum = CompensatedSum::default();
    let mut n = 0usize;
    for u in vectors.units() {
        let Ok(i) = u
            .vectors
            .binary_search_by(|v| v.worker_id.as_str().cmp(worker_id))
        else {
            continue;
        };
        let muv = u.media_unit_vector();
        sum.add(leave_one_out_cosine(&muv.counts, &u.vectors[i].bits));
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum.total() / n as f64
    }
}

fn leave_one_out_cosine(counts: &[u32], own: &[bool]) -> f64 {
    let own_counts: Vec<u32> = own.iter().map(|&b| u32::from(b)).collect();
    let rest: Vec<u32> = counts
        .iter()
        .zip(&own_counts)
        .map(|(&c, &o)| c - o)
        .collect();
    agreement_cosine(&own_counts, &rest)
}

/// Mean number of selected annotations per unit for one worker.
pub fn avg_annotations_per_unit(vectors: &VectorSet, worker_id: &str) -> f64 {
    let units = vectors_of(vectors, worker_id);
    if units.is_empty() {
        return 0.0;
    }
    let mut sum = CompensatedSum::default();
    for (_, v) in &units {
        sum.add(v.count_ones() as f64);
    }
    sum.total() / units.len() as f64
}

/// Worker metrics for every worker (sorted by id) and a score for every
/// (unit, vocabulary entry) pair (sorted by unit, then vocabulary order).
pub fn compute_all_metrics(vectors: &VectorSet) -> (Vec<WorkerMetrics>, Vec<UnitAnnotationScore>) {
    let workers: Vec<String> = vectors.worker_ids().into_iter().collect();
    let index: HashMap<&str, usize> = workers
        .iter()
        .enumerate()
        .map(|(i, w)| (w.as_str(), i))
        .collect();
    let n = workers.len();

    let mut pair_sums: BTreeMap<(usize, usize), (CompensatedSum, usize)> = BTreeMap::new();
    let mut wma = vec![(CompensatedSum::default(), 0usize); n];
    let mut na = vec![(CompensatedSum::default(), 0usize); n];
    let mut scores = Vec::new();

    for u in vectors.units() {
        let muv = u.media_unit_vector();
        for (entry, s) in u.vocabulary.entries().iter().zip(unit_scores(&muv)) {
            scores.push(UnitAnnotationScore {
                unit_id: u.unit_id.clone(),
                annotation_id: entry.clone(),
                score: s,
            });
        }
        let ids: Vec<usize> = u
            .vectors
            .iter()
            .map(|v| index[v.worker_id.as_str()])
            .collect();
        for (k, v) in u.vectors.iter().enumerate() {
            let w = ids[k];
            wma[w].0.add(leave_one_out_cosine(&muv.counts, &v.bits));
            wma[w].1 += 1;
            na[w].0.add(v.count_ones() as f64);
            na[w].1 += 1;
            for (l, other) in u.vectors.iter().enumerate().skip(k + 1) {
                let key = (w.min(ids[l]), w.max(ids[l]));
                let e = pair_sums.entry(key).or_default();
                e.0.add(bits_cosine(&v.bits, &other.bits));
                e.1 += 1;
            }
        }
    }

    let mut partner = vec![(CompensatedSum::default(), 0usize); n];
    for (&(a, b), (sum, count)) in &pair_sums {
        let mean = sum.total() / *count as f64;
        partner[a].0.add(mean);
        partner[a].1 += 1;
        partner[b].0.add(mean);
        partner[b].1 += 1;
    }

    let mean = |(s, c): &(CompensatedSum, usize)| if *c == 0 { 0.0 } else { s.total() / *c as f64 };
    let metrics = workers
        .iter()
        .enumerate()
        .map(|(i, w)| WorkerMetrics {
            worker_id: w.clone(),
            wwa: mean(&partner[i]),
            wma: mean(&wma[i]),
            na: mean(&na[i]),
            n_units: na[i].1,
        })
        .collect();
    (metrics, scores)
}
