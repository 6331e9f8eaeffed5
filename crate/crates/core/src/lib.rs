//! Disagreement-aware aggregation of crowdsourced annotations.
//!
//! Workers' answers on each media unit become binary vectors over the unit's
//! answer space. From those vectors the crate computes media unit–annotation
//! scores, worker agreement metrics and spam verdicts, turns scores into labels,
//! and evaluates labels against trusted judgments.
//!
//! ```
//! use std::sync::Arc;
//! use crowdtruth::{metrics, AnnotationVocabulary, VectorSet, WorkerVector};
//!
//! let vocab = Arc::new(AnnotationVocabulary::closed("t", ["cause", "treat"]).unwrap());
//! let mut set = VectorSet::new("t");
//! let vectors = vec![
//!     WorkerVector { worker_id: "w1".into(), unit_id: "u1".into(), bits: vec![true, false] },
//!     WorkerVector { worker_id: "w2".into(), unit_id: "u1".into(), bits: vec![true, true] },
//! ];
//! set.insert_unit("u1", vocab, vectors).unwrap();
//!
//! let (workers, scores) = metrics::compute_all_metrics(&set);
//! assert_eq!(workers.len(), 2);
//! // counts (2, 1): cause scores 2/sqrt(5)
//! assert!((scores[0].score - 2.0 / 5f64.sqrt()).abs() < 1e-12);
//! ```

mod error;

pub mod config;
pub mod eval;
pub mod io;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod quality;
pub mod rng;
pub mod stats;
pub mod vector_space;

pub use config::{OpenMode, TaskConfig, TaskType};
pub use error::{Error, Result};
pub use model::{
    AnnotationVocabulary, EvaluationOutcome, Judgment, LabelMethod, LabelSet, MediaUnitVector,
    PairKey, UnitAnnotationScore, Violation, VocabularyScope, WorkerMetrics, WorkerVector,
};
pub use pipeline::Pipeline;
pub use vector_space::{EmbeddingTable, VectorSet};
