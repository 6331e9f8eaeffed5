use std::collections::BTreeSet;

use crowdtruth::vector_space::{cluster_keywords, real_cosine, ClusterOptions, WorkerTokens};
use crowdtruth::EmbeddingTable;
use proptest::prelude::*;

const POOL: [&str; 18] = [
    "dog",
    "dogs",
    "barking",
    "bark",
    "barks",
    "rain",
    "rainn",
    "storm",
    "thunder",
    "thunderstorm",
    "car",
    "cars",
    "engine",
    "engines",
    "bird",
    "birds",
    "chirp",
    "chirping",
];

fn embeddings() -> EmbeddingTable {
    let mut t = EmbeddingTable::new(3);
    for (w, v) in [
        ("dog", [1.0, 0.0, 0.0]),
        ("bark", [0.9, 0.3, 0.0]),
        ("storm", [0.0, 1.0, 0.1]),
        ("thunder", [0.0, 0.95, 0.2]),
        ("car", [0.0, 0.1, 1.0]),
        ("bird", [0.5, 0.5, 0.5]),
    ] {
        t.insert(w, v.to_vec()).unwrap();
    }
    t
}

fn worker_tokens() -> impl Strategy<Value = Vec<WorkerTokens>> {
    prop::collection::vec(prop::collection::btree_set(0..POOL.len(), 1..5), 1..7).prop_map(|ws| {
        ws.into_iter()
            .enumerate()
            .map(|(w, idx)| WorkerTokens {
                worker_id: format!("w{w}"),
                unit_id: "u".into(),
                tokens: idx.into_iter().map(|i| POOL[i].to_string()).collect(),
                removed_stopwords: BTreeSet::new(),
            })
            .collect()
    })
}

fn entries(tokens: &[WorkerTokens], opts: &ClusterOptions<'_>) -> Vec<String> {
    let refs: Vec<&WorkerTokens> = tokens.iter().collect();
    cluster_keywords("t", "u", &refs, opts)
        .unwrap()
        .0
        .entries()
        .to_vec()
}

proptest! {
    #[test]
    fn reducing_twice_changes_nothing(tokens in worker_tokens()) {
        let table = embeddings();
        let opts = ClusterOptions { embeddings: Some(&table), ..Default::default() };
        let once = entries(&tokens, &opts);
        let again = vec![WorkerTokens {
            worker_id: "w".into(),
            unit_id: "u".into(),
            tokens: once.iter().cloned().collect(),
            removed_stopwords: BTreeSet::new(),
        }];
        prop_assert_eq!(entries(&again, &opts), once);
    }

    #[test]
    fn semantic_merging_only_shrinks(tokens in worker_tokens(), t in 0.5f64..1.0) {
        let table = embeddings();
        let syntactic = entries(&tokens, &ClusterOptions::default());
        let semantic = entries(&tokens, &ClusterOptions { embeddings: Some(&table), similarity_threshold: t, ..Default::default() });
        let raw = entries(&tokens, &ClusterOptions::identity());
        prop_assert!(semantic.len() <= syntactic.len());
        prop_assert!(syntactic.len() <= raw.len());
    }

    #[test]
    fn worker_order_does_not_matter(tokens in worker_tokens()) {
        let table = embeddings();
        let opts = ClusterOptions { embeddings: Some(&table), ..Default::default() };
        let refs: Vec<&WorkerTokens> = tokens.iter().collect();
        let rev: Vec<&WorkerTokens> = tokens.iter().rev().collect();
        let a = cluster_keywords("t", "u", &refs, &opts).unwrap();
        let b = cluster_keywords("t", "u", &rev, &opts).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn every_token_maps_to_its_cluster_representative(tokens in worker_tokens()) {
        let refs: Vec<&WorkerTokens> = tokens.iter().collect();
        let (vocab, trace) = cluster_keywords("t", "u", &refs, &ClusterOptions::default()).unwrap();
        let mut sorted = vocab.entries().to_vec();
        sorted.sort();
        prop_assert_eq!(&sorted, &vocab.entries().to_vec());
        for c in &trace.clusters {
            for m in &c.members {
                prop_assert_eq!(vocab.resolve(m), vocab.index_of(&c.representative));
            }
        }
    }

    #[test]
    fn embedding_merge_iff_cosine_reaches_threshold(
        a in prop::array::uniform3(-1.0f64..1.0),
        b in prop::array::uniform3(-1.0f64..1.0),
        t in 0.0f64..1.0,
    ) {
        let mut table = EmbeddingTable::new(3);
        table.insert("alpha", a.to_vec()).unwrap();
        table.insert("zeta", b.to_vec()).unwrap();
        let tokens = vec![WorkerTokens {
            worker_id: "w".into(),
            unit_id: "u".into(),
            tokens: ["alpha".to_string(), "zeta".to_string()].into(),
            removed_stopwords: BTreeSet::new(),
        }];
        let opts = ClusterOptions { embeddings: Some(&table), similarity_threshold: t, ..Default::default() };
        let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        let norm = |v: &[f64; 3]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let cos = dot / (norm(&a) * norm(&b));
        prop_assume!((cos - t).abs() > 1e-9 && norm(&a) > 1e-6 && norm(&b) > 1e-6);
        prop_assert!((real_cosine(&a, &b) - cos).abs() < 1e-12);
        prop_assert_eq!(entries(&tokens, &opts).len() == 1, cos >= t);
    }
}
