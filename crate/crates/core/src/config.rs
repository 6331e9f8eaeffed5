//! Task configuration: a flat `key = value` text file.
//!
//! ```text
//! # medical relation extraction
//! task_id = medrel
//! task_type = closed
//! judgments_file = judgments.csv
//! vocabulary_file = relations.txt
//! crowdtruth_threshold = 0.6
//! ```
//!
//! Relative paths resolve against the directory of the config file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::vector_space::DEFAULT_SIMILARITY_THRESHOLD;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskType {
    Closed,
    OpenEnded,
}

impl FromStr for TaskType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "closed" => Ok(TaskType::Closed),
            "open_ended" | "open-ended" | "open" => Ok(TaskType::OpenEnded),
            other => Err(Error::Config(format!("unknown task_type {other:?}"))),
        }
    }
}

impl fmt::Display for TaskType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskType::Closed => "closed",
            TaskType::OpenEnded => "open_ended",
        })
    }
}

/// How open-ended answers are turned into tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpenMode {
    /// Free-text keywords, kept atomic and clustered.
    Keywords,
    /// Highlighted expressions, split into words with stopwords removed.
    Expressions,
}

impl FromStr for OpenMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "keywords" => Ok(OpenMode::Keywords),
            "expressions" => Ok(OpenMode::Expressions),
            other => Err(Error::Config(format!("unknown open_mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskConfig {
    pub task_id: String,
    pub task_type: TaskType,
    pub open_mode: OpenMode,
    pub judgments_file: Option<PathBuf>,
    pub vocabulary_file: Option<PathBuf>,
    pub stopword_file: Option<PathBuf>,
    pub embedding_file: Option<PathBuf>,
    /// Trusted labels used by evaluate, sweep, ablate and mcnemar.
    pub truth_file: Option<PathBuf>,
    pub expert_file: Option<PathBuf>,
    pub embedding_similarity_threshold: f64,
    /// Standard-deviation multiplier of the spam band.
    pub spam_k: f64,
    pub use_na_in_spam: bool,
    pub spam_fixpoint: bool,
    pub crowdtruth_threshold: f64,
    pub random_seed: u64,
    /// Closed-task option meaning "nothing applies"; needs a justification.
    pub none_option: Option<String>,
    /// Judgments with at most this many annotations need a justification.
    pub explain_at_or_below: Option<usize>,
    /// Judgments with more annotations are rejected at ingest.
    pub max_annotations: Option<usize>,
    pub thresholds: Option<Vec<f64>>,
    pub ablation_workers: Option<Vec<usize>>,
    pub review_sample_size: usize,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            task_id: "task".to_string(),
            task_type: TaskType::Closed,
            open_mode: OpenMode::Keywords,
            judgments_file: None,
            vocabulary_file: None,
            stopword_file: None,
            embedding_file: None,
            truth_file: None,
            expert_file: None,
            embedding_similarity_threshold: DEFAULT_SIMILARITY_THRESHOLD,
            spam_k: 1.0,
            use_na_in_spam: true,
            spam_fixpoint: false,
            crowdtruth_threshold: 0.5,
            random_seed: 0,
            none_option: Some("none".to_string()),
            explain_at_or_below: None,
            max_annotations: None,
            thresholds: None,
            ablation_workers: None,
            review_sample_size: 20,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!(
            "{key}: expected a boolean, got {value:?}"
        ))),
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

impl TaskConfig {
    /// Sets one key. Used by both the file parser and command-line overrides.
    pub fn set(&mut self, key: &str, value: &str, base: Option<&Path>) -> Result<()> {
        let path = |v: &str| {
            let p = PathBuf::from(v);
            match base {
                Some(b) if p.is_relative() => b.join(p),
                _ => p,
            }
        };
        let opt = |v: &str| (!v.is_empty()).then(|| v.to_string());
        match key {
            "task_id" => self.task_id = value.to_string(),
            "task_type" => self.task_type = value.parse()?,
            "open_mode" => self.open_mode = value.parse()?,
            "judgments_file" => self.judgments_file = opt(value).map(|v| path(&v)),
            "vocabulary_file" => self.vocabulary_file = opt(value).map(|v| path(&v)),
            "stopword_file" => self.stopword_file = opt(value).map(|v| path(&v)),
            "embedding_file" => self.embedding_file = opt(value).map(|v| path(&v)),
            "truth_file" => self.truth_file = opt(value).map(|v| path(&v)),
            "expert_file" => self.expert_file = opt(value).map(|v| path(&v)),
            "embedding_similarity_threshold" => {
                self.embedding_similarity_threshold = parse_num(key, value)?
            }
            "spam_k" => self.spam_k = parse_num(key, value)?,
            "use_na_in_spam" => self.use_na_in_spam = parse_bool(key, value)?,
            "spam_fixpoint" => self.spam_fixpoint = parse_bool(key, value)?,
            "crowdtruth_threshold" => self.crowdtruth_threshold = parse_num(key, value)?,
            "random_seed" => self.random_seed = parse_num(key, value)?,
            "none_option" => self.none_option = opt(value),
            "explain_at_or_below" => {
                self.explain_at_or_below = opt(value).map(|v| parse_num(key, &v)).transpose()?
            }
            "max_annotations" => {
                self.max_annotations = opt(value).map(|v| parse_num(key, &v)).transpose()?
            }
            "thresholds" => self.thresholds = Some(parse_list(key, value)?),
            "ablation_workers" => self.ablation_workers = Some(parse_list(key, value)?),
            "review_sample_size" => self.review_sample_size = parse_num(key, value)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut cfg = TaskConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(key.trim(), value.trim(), base)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent())
    }

    /// Checks cross-field invariants.
    pub fn validate(&self) -> Result<()> {
        if self.task_type == TaskType::Closed && self.vocabulary_file.is_none() {
            return Err(Error::Config("closed tasks need vocabulary_file".into()));
        }
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be in [0, 1], got {v}")))
            }
        };
        unit(
            "embedding_similarity_threshold",
            self.embedding_similarity_threshold,
        )?;
        unit("crowdtruth_threshold", self.crowdtruth_threshold)?;
        if self.spam_k.is_nan() || self.spam_k <= 0.0 {
            return Err(Error::Config(format!(
                "spam_k must be > 0, got {}",
                self.spam_k
            )));
        }
        Ok(())
    }
}
