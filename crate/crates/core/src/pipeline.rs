//! File-based pipeline: each stage reads the artifacts of the previous one from
//! the output directory and writes its own, so every intermediate can be
//! inspected. A stage whose inputs are missing runs its predecessor first.
//!
//! | stage       | writes                                                              |
//! |-------------|---------------------------------------------------------------------|
//! | `ingest`    | `judgments_clean.csv`, `violations.csv`, `effort_rejections.csv`    |
//! | `vectorize` | `vocabulary.csv`, `vectors.csv`, `reduction_trace.csv` (open-ended) |
//! | `metrics`   | `raw_unit_annotation_scores.csv`, `raw_worker_metrics.csv`          |
//! | `spam`      | `spam_verdicts.csv`, `review_sample.csv`, `vectors_filtered.csv`, `worker_metrics.csv`, `unit_annotation_scores.csv` |
//! | `aggregate` | `labels_<method>.csv`                                               |
//! | `evaluate`  | `evaluation.csv`                                                    |
//! | `sweep`     | `sweep.csv`                                                         |
//! | `ablate`    | `ablation.csv`                                                      |
//! | `mcnemar`   | `mcnemar.csv`                                                       |
//! | `calibrate` | `calibration.csv`, `disagreements.csv`                              |
//! | `report`    | `summary.txt`                                                       |

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::config::{OpenMode, TaskConfig, TaskType};
use crate::error::{Error, Result};
use crate::eval::{
    calibrate_threshold_vs_expert, crowdtruth_labels, default_grid, evaluate, majority_vote_labels,
    mcnemar_test, scores_of, single_annotator_labels, threshold_sweep, worker_ablation,
};
use crate::io;
use crate::metrics::compute_all_metrics;
use crate::model::{
    validate_dataset, EvaluationOutcome, Judgment, LabelMethod, LabelSet, Violation,
};
use crate::quality::{apply_effort_checks, remove_spam, review_sample, EffortRules, SpamSettings};
use crate::vector_space::{
    keyword_tokens, tokenize_expressions, vectorize_closed, vectorize_open, ClusterOptions,
    VectorSet,
};

pub const JUDGMENTS_CLEAN: &str = "judgments_clean.csv";
pub const VIOLATIONS: &str = "violations.csv";
pub const EFFORT_REJECTIONS: &str = "effort_rejections.csv";
pub const VOCABULARY: &str = "vocabulary.csv";
pub const VECTORS: &str = "vectors.csv";
pub const VECTORS_FILTERED: &str = "vectors_filtered.csv";
pub const REDUCTION_TRACE: &str = "reduction_trace.csv";
pub const RAW_SCORES: &str = "raw_unit_annotation_scores.csv";
pub const RAW_WORKER_METRICS: &str = "raw_worker_metrics.csv";
pub const SPAM_VERDICTS: &str = "spam_verdicts.csv";
pub const REVIEW_SAMPLE: &str = "review_sample.csv";
pub const WORKER_METRICS: &str = "worker_metrics.csv";
pub const SCORES: &str = "unit_annotation_scores.csv";
pub const EVALUATION: &str = "evaluation.csv";
pub const SWEEP: &str = "sweep.csv";
pub const ABLATION: &str = "ablation.csv";
pub const MCNEMAR: &str = "mcnemar.csv";
pub const CALIBRATION: &str = "calibration.csv";
pub const DISAGREEMENTS: &str = "disagreements.csv";
pub const SUMMARY: &str = "summary.txt";

/// Labeling regimes that `aggregate` can produce.
pub const AGGREGATE_METHODS: [LabelMethod; 3] = [
    LabelMethod::Crowdtruth,
    LabelMethod::MajorityVote,
    LabelMethod::Single,
];

/// File name of the labels written for `method`.
pub fn labels_file_name(method: LabelMethod) -> String {
    let name = match method {
        LabelMethod::MajorityVote => "majority",
        other => other.as_str(),
    };
    format!("labels_{name}.csv")
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    pub config: TaskConfig,
    pub out_dir: PathBuf,
}

impl Pipeline {
    pub fn new(config: TaskConfig, out_dir: impl Into<PathBuf>) -> Self {
        Pipeline {
            config,
            out_dir: out_dir.into(),
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn ensure(&self, name: &str, stage: impl FnOnce(&Self) -> Result<String>) -> Result<()> {
        if !self.path(name).exists() {
            let line = stage(self)?;
            log::info!("{line}");
        }
        Ok(())
    }

    fn required<'a>(&self, path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
        path.as_deref()
            .ok_or_else(|| Error::Config(format!("{key} is not set")))
    }

    /// Parses and validates the judgments, then applies the effort checks.
    /// Fails after writing `violations.csv` when any violation is fatal.
    pub fn ingest(&self) -> Result<String> {
        let cfg = &self.config;
        cfg.validate()?;
        let path = self.required(&cfg.judgments_file, "judgments_file")?;
        let judgments = io::parse_judgments(path, &cfg.task_id)?;
        let vocab = match cfg.task_type {
            TaskType::Closed => Some(io::load_vocabulary(
                self.required(&cfg.vocabulary_file, "vocabulary_file")?,
                &cfg.task_id,
            )?),
            TaskType::OpenEnded => None,
        };
        let violations = validate_dataset(&judgments, vocab.as_ref(), cfg.max_annotations);
        io::write_violations(&self.path(VIOLATIONS), &violations)?;
        let fatal = violations.iter().filter(|v| v.is_fatal()).count();
        if fatal > 0 {
            return Err(Error::Validation {
                count: fatal,
                report: self.path(VIOLATIONS),
            });
        }

        let oversized: BTreeSet<(&str, &str)> = violations
            .iter()
            .filter(|v| matches!(v, Violation::TooManyAnnotations { .. }))
            .map(Violation::ids)
            .collect();
        let kept: Vec<Judgment> = judgments
            .iter()
            .filter(|j| !oversized.contains(&(j.worker_id.as_str(), j.unit_id.as_str())))
            .cloned()
            .collect();
        let rules = EffortRules {
            none_option: cfg.none_option.clone(),
            explain_at_or_below: cfg.explain_at_or_below,
        };
        let (accepted, rejected) = apply_effort_checks(&kept, &rules);
        io::write_judgments(&self.path(JUDGMENTS_CLEAN), &accepted)?;
        io::write_effort_rejections(&self.path(EFFORT_REJECTIONS), &rejected)?;
        Ok(format!(
            "ingest: {} judgments read, {} accepted, {} violations, {} effort rejections",
            judgments.len(),
            accepted.len(),
            violations.len(),
            rejected.len()
        ))
    }

    /// Builds worker vectors; open-ended tasks also get their per-unit reduced
    /// vocabularies and a reduction trace.
    pub fn vectorize(&self) -> Result<String> {
        self.ensure(JUDGMENTS_CLEAN, Self::ingest)?;
        let cfg = &self.config;
        let judgments = io::parse_judgments(&self.path(JUDGMENTS_CLEAN), &cfg.task_id)?;
        let set = match cfg.task_type {
            TaskType::Closed => {
                let vocab = io::load_vocabulary(
                    self.required(&cfg.vocabulary_file, "vocabulary_file")?,
                    &cfg.task_id,
                )?;
                vectorize_closed(&cfg.task_id, &judgments, vocab)?
            }
            TaskType::OpenEnded => {
                let stopwords = match &cfg.stopword_file {
                    Some(p) => io::load_stopwords(p)?,
                    None => BTreeSet::new(),
                };
                let embeddings = cfg
                    .embedding_file
                    .as_deref()
                    .map(io::load_embeddings)
                    .transpose()?;
                let (tokens, options) = match cfg.open_mode {
                    OpenMode::Keywords => (
                        keyword_tokens(&judgments),
                        ClusterOptions {
                            embeddings: embeddings.as_ref(),
                            similarity_threshold: cfg.embedding_similarity_threshold,
                            ..Default::default()
                        },
                    ),
                    OpenMode::Expressions => (
                        tokenize_expressions(&judgments, &stopwords),
                        ClusterOptions::identity(),
                    ),
                };
                let (set, traces) = vectorize_open(&cfg.task_id, &tokens, &options)?;
                io::write_reduction_trace(&self.path(REDUCTION_TRACE), &traces)?;
                set
            }
        };
        io::write_vector_set(&self.path(VOCABULARY), &self.path(VECTORS), &set)?;
        Ok(format!(
            "vectorize: {} units, {} workers, {} (unit, annotation) pairs",
            set.len(),
            set.worker_ids().len(),
            set.universe().len()
        ))
    }

    pub fn load_vectors(&self) -> Result<VectorSet> {
        self.ensure(VECTORS, Self::vectorize)?;
        io::read_vector_set(
            &self.path(VOCABULARY),
            &self.path(VECTORS),
            &self.config.task_id,
        )
    }

    pub fn load_filtered_vectors(&self) -> Result<VectorSet> {
        self.ensure(VECTORS_FILTERED, Self::spam)?;
        io::read_vector_set(
            &self.path(VOCABULARY),
            &self.path(VECTORS_FILTERED),
            &self.config.task_id,
        )
    }

    /// Metrics on all workers, before spam removal.
    pub fn metrics(&self) -> Result<String> {
        let set = self.load_vectors()?;
        let (metrics, scores) = compute_all_metrics(&set);
        io::write_scores(&self.path(RAW_SCORES), &scores)?;
        io::write_worker_metrics(&self.path(RAW_WORKER_METRICS), &metrics, &[])?;
        Ok(format!(
            "metrics: {} workers, {} unit-annotation scores",
            metrics.len(),
            scores.len()
        ))
    }

    /// Flags spammers, drops their vectors and recomputes the scores.
    pub fn spam(&self) -> Result<String> {
        self.ensure(RAW_WORKER_METRICS, Self::metrics)?;
        let cfg = &self.config;
        let set = self.load_vectors()?;
        let rejections = io::read_effort_rejections(&self.path(EFFORT_REJECTIONS))?;
        let settings = SpamSettings {
            k: cfg.spam_k,
            use_na: cfg.use_na_in_spam,
            fixpoint: cfg.spam_fixpoint,
        };
        let outcome = remove_spam(&set, &rejections, &settings);
        io::write_spam_verdicts(&self.path(SPAM_VERDICTS), &outcome.verdicts)?;

        let judgments = io::parse_judgments(&self.path(JUDGMENTS_CLEAN), &cfg.task_id)?;
        let sample = review_sample(
            &judgments,
            &outcome.verdicts,
            cfg.review_sample_size,
            cfg.random_seed,
        );
        io::write_judgments(&self.path(REVIEW_SAMPLE), &sample)?;

        io::write_vector_set(
            &self.path(VOCABULARY),
            &self.path(VECTORS_FILTERED),
            &outcome.filtered,
        )?;
        let metrics: Vec<_> = outcome
            .verdicts
            .iter()
            .map(|v| crate::model::WorkerMetrics {
                worker_id: v.worker_id.clone(),
                wwa: v.wwa,
                wma: v.wma,
                na: v.na,
                n_units: 0,
            })
            .collect();
        io::write_worker_metrics(&self.path(WORKER_METRICS), &metrics, &outcome.verdicts)?;
        io::write_scores(&self.path(SCORES), &scores_of(&outcome.filtered))?;
        let flagged = outcome.verdicts.iter().filter(|v| v.is_spam).count();
        Ok(format!(
            "spam: {flagged} of {} workers flagged ({} round(s))",
            outcome.verdicts.len(),
            outcome.rounds
        ))
    }

    fn labels_for(&self, method: LabelMethod, set: &VectorSet) -> Result<LabelSet> {
        Ok(match method {
            LabelMethod::Crowdtruth => {
                crowdtruth_labels(&scores_of(set), self.config.crowdtruth_threshold)
            }
            LabelMethod::MajorityVote => majority_vote_labels(set),
            LabelMethod::Single => single_annotator_labels(set, self.config.random_seed),
            other => {
                return Err(Error::Config(format!(
                    "{other} labels are loaded from a file, not aggregated"
                )))
            }
        })
    }

    /// Writes `labels_<method>.csv` over the full evaluation universe.
    pub fn aggregate(&self, method: LabelMethod) -> Result<String> {
        let set = self.load_filtered_vectors()?;
        let labels = self.labels_for(method, &set)?;
        io::write_labels(
            &self.path(&labels_file_name(method)),
            &labels,
            &set.universe(),
        )?;
        Ok(format!(
            "aggregate: {} labels, {} positive of {} pairs",
            method,
            labels.positives().len(),
            set.universe().len()
        ))
    }

    fn load_method_labels(&self, method: LabelMethod, set: &VectorSet) -> Result<LabelSet> {
        let name = labels_file_name(method);
        self.ensure(&name, |p| p.aggregate(method))?;
        let universe = set.universe().into_iter().collect();
        Ok(io::load_labels(&self.path(&name), method, Some(&universe))?.0)
    }

    fn load_truth(&self, set: &VectorSet) -> Result<LabelSet> {
        let path = self.required(&self.config.truth_file, "truth_file")?;
        let universe = set.universe().into_iter().collect();
        Ok(io::load_labels(path, LabelMethod::Trusted, Some(&universe))?.0)
    }

    /// Evaluates every aggregation method against the trusted labels.
    pub fn evaluate(&self) -> Result<String> {
        let set = self.load_filtered_vectors()?;
        let truth = self.load_truth(&set)?;
        let universe = set.universe();
        let mut rows: Vec<(String, EvaluationOutcome)> = Vec::new();
        for method in AGGREGATE_METHODS {
            let labels = self.load_method_labels(method, &set)?;
            rows.push((method.to_string(), evaluate(&labels, &truth, &universe)));
        }
        io::write_evaluation(&self.path(EVALUATION), &rows)?;
        let mut line = String::from("evaluate:");
        for (name, o) in &rows {
            let _ = write!(line, " {name} F1 {:.4};", o.f1);
        }
        line.pop();
        Ok(line)
    }

    fn grid(&self) -> Vec<f64> {
        self.config.thresholds.clone().unwrap_or_else(default_grid)
    }

    pub fn sweep(&self) -> Result<String> {
        let set = self.load_filtered_vectors()?;
        let truth = self.load_truth(&set)?;
        let result = threshold_sweep(&scores_of(&set), &truth, &set.universe(), &self.grid())?;
        io::write_sweep(&self.path(SWEEP), &result)?;
        Ok(match result.best() {
            Some((t, o)) => format!("sweep: best threshold {t:.2} with F1 {:.4}", o.f1),
            None => "sweep: no thresholds".to_string(),
        })
    }

    /// Worker ablation. Without an explicit list, every count from 1 to the
    /// largest number of workers on a unit.
    pub fn ablate(&self) -> Result<String> {
        let set = self.load_filtered_vectors()?;
        let truth = self.load_truth(&set)?;
        let list = match &self.config.ablation_workers {
            Some(l) => l.clone(),
            None => {
                let max = set.units().map(|u| u.vectors.len()).max().unwrap_or(0);
                (1..=max.max(1)).collect()
            }
        };
        let result = worker_ablation(
            &set,
            &truth,
            self.config.crowdtruth_threshold,
            &list,
            self.config.random_seed,
        )?;
        io::write_ablation(&self.path(ABLATION), &result)?;
        let f1s: Vec<String> = result
            .points
            .iter()
            .map(|p| format!("{}:{:.3}", p.max_workers, p.outcome.f1))
            .collect();
        Ok(format!("ablate: F1 by max workers {}", f1s.join(" ")))
    }

    /// McNemar test between two label files, or crowdtruth against each other
    /// aggregation method when no files are given.
    pub fn mcnemar(&self, pair: Option<(&Path, &Path)>) -> Result<String> {
        let set = self.load_filtered_vectors()?;
        let truth = self.load_truth(&set)?;
        let universe = set.universe();
        let members: BTreeSet<_> = universe.iter().cloned().collect();
        let mut rows = Vec::new();
        match pair {
            Some((a, b)) => {
                let name = |p: &Path| {
                    let stem = p
                        .file_stem()
                        .map_or_else(String::new, |s| s.to_string_lossy().into_owned());
                    stem.strip_prefix("labels_")
                        .map(str::to_string)
                        .unwrap_or(stem)
                };
                let (la, _) = io::load_labels(a, LabelMethod::Crowdtruth, Some(&members))?;
                let (lb, _) = io::load_labels(b, LabelMethod::Crowdtruth, Some(&members))?;
                rows.push((name(a), name(b), mcnemar_test(&la, &lb, &truth, &universe)));
            }
            None => {
                let ct = self.load_method_labels(LabelMethod::Crowdtruth, &set)?;
                for method in [LabelMethod::MajorityVote, LabelMethod::Single] {
                    let other = self.load_method_labels(method, &set)?;
                    rows.push((
                        LabelMethod::Crowdtruth.to_string(),
                        method.to_string(),
                        mcnemar_test(&ct, &other, &truth, &universe),
                    ));
                }
            }
        }
        io::write_mcnemar(&self.path(MCNEMAR), &rows)?;
        let parts: Vec<String> = rows
            .iter()
            .map(|(a, b, r)| format!("{a} vs {b} p={:.4e}", r.p_value))
            .collect();
        Ok(format!("mcnemar: {}", parts.join("; ")))
    }

    /// Threshold with the most crowd/expert agreement, plus the disagreements
    /// for manual review.
    pub fn calibrate(&self, expert: Option<&Path>) -> Result<String> {
        let set = self.load_filtered_vectors()?;
        let path = match expert {
            Some(p) => p,
            None => self.required(&self.config.expert_file, "expert_file")?,
        };
        let (expert, _) = io::load_expert_labels(path, &set)?;
        let cal = calibrate_threshold_vs_expert(&scores_of(&set), &expert, &self.grid())?;
        io::write_calibration(&self.path(CALIBRATION), &self.path(DISAGREEMENTS), &cal)?;
        Ok(format!(
            "calibrate: threshold {:.2}, {} disagreements",
            cal.threshold,
            cal.disagreements.len()
        ))
    }

    /// Human-readable summary of whatever artifacts exist.
    pub fn report(&self) -> Result<String> {
        let mut text = format!(
            "task: {} ({})\n",
            self.config.task_id, self.config.task_type
        );
        if self.path(VECTORS).exists() {
            let set = self.load_vectors()?;
            let _ = writeln!(
                text,
                "units: {}\nworkers: {}\npairs: {}",
                set.len(),
                set.worker_ids().len(),
                set.universe().len()
            );
        }
        if self.path(SPAM_VERDICTS).exists() {
            let verdicts = io::read_spam_verdicts(&self.path(SPAM_VERDICTS))?;
            let flagged: Vec<&str> = verdicts
                .iter()
                .filter(|v| v.is_spam)
                .map(|v| v.worker_id.as_str())
                .collect();
            let _ = writeln!(
                text,
                "spam workers: {} [{}]",
                flagged.len(),
                flagged.join(", ")
            );
        }
        for name in [EVALUATION, SWEEP, ABLATION, MCNEMAR, CALIBRATION] {
            let path = self.path(name);
            if path.exists() {
                let body = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                let _ = write!(text, "\n{name}\n{body}");
            }
        }
        io::write_text(&self.path(SUMMARY), &text)?;
        Ok(format!("report: wrote {}", self.path(SUMMARY).display()))
    }

    /// Every stage in order. Stages that need trusted or expert labels are
    /// skipped when the config names none.
    pub fn run_all(&self) -> Result<Vec<String>> {
        let mut lines = vec![
            self.ingest()?,
            self.vectorize()?,
            self.metrics()?,
            self.spam()?,
        ];
        for method in AGGREGATE_METHODS {
            lines.push(self.aggregate(method)?);
        }
        if self.config.truth_file.is_some() {
            lines.push(self.evaluate()?);
            lines.push(self.sweep()?);
            lines.push(self.ablate()?);
            lines.push(self.mcnemar(None)?);
        }
        if self.config.expert_file.is_some() {
            lines.push(self.calibrate(None)?);
        }
        lines.push(self.report()?);
        Ok(lines)
    }
}
