use std::collections::BTreeSet;
use std::sync::Arc;

use crowdtruth::io::{parse_judgments, read_vector_set, write_judgments, write_vector_set};
use crowdtruth::vector_space::{keyword_tokens, vectorize_open, ClusterOptions};
use crowdtruth::{AnnotationVocabulary, Judgment, LabelMethod, LabelSet, VectorSet, WorkerVector};
use proptest::prelude::*;

fn judgments() -> impl Strategy<Value = Vec<Judgment>> {
    let cell = "[a-z][a-z ,\"]{0,8}[a-z]";
    prop::collection::btree_map(
        ("w[0-9]", "u[0-9]"),
        (
            prop::collection::vec(cell, 0..4),
            prop::option::of("[A-Za-z][A-Za-z ,.]{0,15}"),
        ),
        0..20,
    )
    .prop_map(|m| {
        m.into_iter()
            .map(|((w, u), (ann, just))| {
                let j = Judgment::new(&w, &u, ann, "task");
                match just {
                    Some(text) => j.with_justification(&text),
                    None => j,
                }
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn judgment_file_round_trip(js in judgments()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("j.csv");
        write_judgments(&path, &js).unwrap();
        prop_assert_eq!(parse_judgments(&path, "other").unwrap(), js);
    }

    #[test]
    fn vector_files_round_trip(bits in prop::collection::vec(prop::collection::vec(any::<bool>(), 4), 0..8)) {
        let vocab = Arc::new(AnnotationVocabulary::closed("t", ["none", "cause", "treat", "side effect"]).unwrap());
        let mut set = VectorSet::new("t");
        let vectors: Vec<WorkerVector> = bits
            .into_iter()
            .enumerate()
            .map(|(w, b)| WorkerVector { worker_id: format!("w{w}"), unit_id: "u1".into(), bits: b })
            .collect();
        set.insert_unit("u1", Arc::clone(&vocab), vectors).unwrap();
        set.insert_unit("u2", vocab, vec![]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (vp, wp) = (dir.path().join("vocabulary.csv"), dir.path().join("vectors.csv"));
        write_vector_set(&vp, &wp, &set).unwrap();
        prop_assert_eq!(read_vector_set(&vp, &wp, "t").unwrap(), set);
    }

    #[test]
    fn label_set_json_round_trip(pairs in prop::collection::btree_map(("u[0-9]", "[a-z]{1,5}"), any::<bool>(), 0..20)) {
        let mut set = LabelSet::new(LabelMethod::Crowdtruth);
        set.threshold = Some(0.45);
        for ((u, a), v) in pairs {
            set.insert(&u, &a, v);
        }
        let text = serde_json::to_string(&set).unwrap();
        prop_assert_eq!(serde_json::from_str::<LabelSet>(&text).unwrap(), set);
    }
}

#[test]
fn open_vectors_round_trip_through_files() {
    let js = vec![
        Judgment::new("w1", "s1", ["dog", "barking"], "snd"),
        Judgment::new("w2", "s1", ["dogs", "bark"], "snd"),
        Judgment::new("w1", "s2", ["rain"], "snd"),
    ];
    let (set, _) = vectorize_open("snd", &keyword_tokens(&js), &ClusterOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (vp, wp) = (
        dir.path().join("vocabulary.csv"),
        dir.path().join("vectors.csv"),
    );
    write_vector_set(&vp, &wp, &set).unwrap();
    let back = read_vector_set(&vp, &wp, "snd").unwrap();
    assert_eq!(back.universe(), set.universe());
    for (a, b) in back.units().zip(set.units()) {
        assert_eq!(a.vectors, b.vectors);
        assert_eq!(a.vocabulary.entries(), b.vocabulary.entries());
    }
    let entries: BTreeSet<_> = back
        .unit("s1")
        .unwrap()
        .vocabulary
        .entries()
        .iter()
        .cloned()
        .collect();
    assert_eq!(entries.len(), 2, "{entries:?}");
}

#[test]
fn vocabulary_json_round_trip() {
    let v = AnnotationVocabulary::closed("t", ["cause", "treat"]).unwrap();
    let text = serde_json::to_string(&v).unwrap();
    let back: AnnotationVocabulary = serde_json::from_str(&text).unwrap();
    assert_eq!(back.index_of("treat"), Some(1));
    assert_eq!(back, v);
}
