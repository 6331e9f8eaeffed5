//! Synthetic fixtures shared by the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use crowdtruth::{AnnotationVocabulary, LabelMethod, LabelSet, VectorSet, WorkerVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn vocab(n: usize) -> Arc<AnnotationVocabulary> {
    Arc::new(AnnotationVocabulary::closed("t", (0..n).map(|i| format!("a{i}"))).unwrap())
}

pub fn wv(worker: &str, unit: &str, bits: Vec<bool>) -> WorkerVector {
    WorkerVector {
        worker_id: worker.into(),
        unit_id: unit.into(),
        bits,
    }
}

/// Per-unit selection probabilities: labels with probability >= 0.5 are true.
pub struct AmbiguityTask {
    pub n_labels: usize,
    pub probs: Vec<Vec<f64>>,
}

impl AmbiguityTask {
    /// Each unit has 1-2 true labels (p in [0.6, 0.9]) and noise labels
    /// (p in [0, 0.15]).
    pub fn generate(rng: &mut ChaCha8Rng, n_units: usize, n_labels: usize) -> Self {
        let probs = (0..n_units)
            .map(|_| {
                let n_true = rng.random_range(1..=2);
                let mut p: Vec<f64> = (0..n_labels).map(|_| rng.random_range(0.0..0.15)).collect();
                for _ in 0..n_true {
                    let i = rng.random_range(0..n_labels);
                    p[i] = rng.random_range(0.6..0.9);
                }
                p
            })
            .collect();
        AmbiguityTask { n_labels, probs }
    }

    pub fn truth(&self) -> LabelSet {
        let mut set = LabelSet::new(LabelMethod::Trusted);
        for (u, p) in self.probs.iter().enumerate() {
            for (i, &pi) in p.iter().enumerate() {
                set.insert(&format!("u{u:03}"), &format!("a{i}"), pi >= 0.5);
            }
        }
        set
    }

    /// Every worker draws each label independently; an empty draw falls back to
    /// the most likely label.
    pub fn honest_vector(&self, rng: &mut ChaCha8Rng, unit: usize) -> Vec<bool> {
        let p = &self.probs[unit];
        let mut bits: Vec<bool> = p.iter().map(|&pi| rng.random_bool(pi)).collect();
        if !bits.iter().any(|b| *b) {
            let best = (0..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
            bits[best] = true;
        }
        bits
    }

    pub fn vectors(&self, rng: &mut ChaCha8Rng, n_workers: usize) -> VectorSet {
        let v = vocab(self.n_labels);
        let mut set = VectorSet::new("t");
        for u in 0..self.probs.len() {
            let unit = format!("u{u:03}");
            let vectors = (0..n_workers)
                .map(|w| wv(&format!("w{w:02}"), &unit, self.honest_vector(rng, u)))
                .collect();
            set.insert_unit(&unit, Arc::clone(&v), vectors).unwrap();
        }
        set
    }
}

/// Honest crowd plus two injected spammers: `spam_const` always picks `a0`,
/// `spam_all` picks everything.
pub fn spam_task(seed: u64, n_honest: usize, n_units: usize, n_labels: usize) -> VectorSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let task = AmbiguityTask::generate(&mut rng, n_units, n_labels);
    let v = vocab(n_labels);
    let mut set = VectorSet::new("t");
    for u in 0..n_units {
        let unit = format!("u{u:03}");
        let mut vectors: Vec<WorkerVector> = (0..n_honest)
            .map(|w| {
                wv(
                    &format!("honest{w:02}"),
                    &unit,
                    task.honest_vector(&mut rng, u),
                )
            })
            .collect();
        let mut constant = vec![false; n_labels];
        constant[0] = true;
        vectors.push(wv("spam_const", &unit, constant));
        vectors.push(wv("spam_all", &unit, vec![true; n_labels]));
        set.insert_unit(&unit, Arc::clone(&v), vectors).unwrap();
    }
    set
}
