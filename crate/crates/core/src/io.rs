//! Readers and writers for the on-disk formats.
//!
//! Inputs: `judgments.csv` (`worker_id,unit_id,annotations,justification,task_id`,
//! annotations `|`-separated), one-entry-per-line vocabulary and stopword files,
//! label files (`unit_id,annotation_id,label`) and whitespace-separated
//! embedding tables. Outputs are CSV with scores printed to 6 decimals, so the
//! same inputs always produce the same bytes.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use csv::{ReaderBuilder, StringRecord, Trim, Writer};

use crate::error::{Error, Result};
use crate::eval::{AblationResult, Calibration, McNemarResult, SweepResult};
use crate::model::{
    AnnotationVocabulary, EvaluationOutcome, Judgment, LabelMethod, LabelSet, PairKey,
    UnitAnnotationScore, Violation, VocabularyScope, WorkerMetrics, WorkerVector,
};
use crate::quality::{EffortRejection, SpamReason, SpamVerdict};
use crate::vector_space::{EmbeddingTable, ReductionTrace, VectorSet};

pub const ANNOTATION_SEPARATOR: char = '|';
pub const JUDGMENT_HEADER: [&str; 5] = [
    "worker_id",
    "unit_id",
    "annotations",
    "justification",
    "task_id",
];

fn fmt6(x: f64) -> String {
    format!("{x:.6}")
}

fn open_csv(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(ReaderBuilder::new().trim(Trim::All).from_reader(file))
}

fn writer(path: &Path) -> Result<Writer<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(Writer::from_writer(file))
}

struct Columns {
    idx: HashMap<String, usize>,
}

impl Columns {
    fn new(headers: &StringRecord) -> Self {
        Columns {
            idx: headers
                .iter()
                .enumerate()
                .map(|(i, h)| (h.to_string(), i))
                .collect(),
        }
    }

    fn require(&self, path: &Path, name: &str) -> Result<usize> {
        self.idx
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingColumn {
                path: path.to_path_buf(),
                column: name.to_string(),
            })
    }

    fn optional(&self, name: &str) -> Option<usize> {
        self.idx.get(name).copied()
    }
}

fn record_line(rec: &StringRecord) -> usize {
    rec.position().map_or(0, |p| p.line() as usize)
}

/// Splits an annotations cell, trimming items and dropping empty or repeated ones.
pub fn split_annotations(cell: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for item in cell
        .split(ANNOTATION_SEPARATOR)
        .map(str::trim)
        .filter(|s| !s.is_empty())
    {
        if !out.iter().any(|o| o == item) {
            out.push(item.to_string());
        }
    }
    out
}

/// Reads a judgment file. `default_task_id` fills a missing or empty task_id.
///
/// Rows are identified by their line number in the file (header is line 1).
pub fn parse_judgments(path: &Path, default_task_id: &str) -> Result<Vec<Judgment>> {
    let mut rdr = open_csv(path)?;
    let cols = Columns::new(rdr.headers()?);
    let worker = cols.require(path, "worker_id")?;
    let unit = cols.require(path, "unit_id")?;
    let ann = cols.require(path, "annotations")?;
    let just = cols.optional("justification");
    let task = cols.optional("task_id");

    let mut seen: HashMap<(String, String), usize> = HashMap::new();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            row: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record_line(&rec);
        let field = |i: usize| rec.get(i).unwrap_or("");
        let (w, u) = (field(worker), field(unit));
        if w.is_empty() || u.is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                row: line,
                message: "empty worker_id or unit_id".into(),
            });
        }
        if let Some(first) = seen.insert((w.to_string(), u.to_string()), line) {
            return Err(Error::DuplicateRow {
                path: path.to_path_buf(),
                worker_id: w.to_string(),
                unit_id: u.to_string(),
                first,
                second: line,
            });
        }
        let task_id = task
            .map(field)
            .filter(|t| !t.is_empty())
            .unwrap_or(default_task_id);
        let mut j = Judgment::new(w, u, split_annotations(field(ann)), task_id);
        if let Some(i) = just {
            j = j.with_justification(field(i));
        }
        out.push(j);
    }
    Ok(out)
}

pub fn write_judgments(path: &Path, judgments: &[Judgment]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(JUDGMENT_HEADER)?;
    for j in judgments {
        let ann = j.raw_annotations.join(&ANNOTATION_SEPARATOR.to_string());
        w.write_record([
            j.worker_id.as_str(),
            j.unit_id.as_str(),
            ann.as_str(),
            j.justification.as_deref().unwrap_or(""),
            j.task_id.as_str(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Non-empty trimmed lines of a text file.
pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if !line.is_empty() {
            out.push(line.to_string());
        }
    }
    Ok(out)
}

pub fn load_vocabulary(path: &Path, task_id: &str) -> Result<AnnotationVocabulary> {
    AnnotationVocabulary::closed(task_id, read_lines(path)?)
}

pub fn load_stopwords(path: &Path) -> Result<BTreeSet<String>> {
    Ok(read_lines(path)?
        .into_iter()
        .map(|w| w.to_lowercase())
        .collect())
}

/// Token followed by its components, whitespace-separated. A leading
/// `count dim` header line (word2vec text format) is skipped.
pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable> {
    let lines = read_lines(path)?;
    let mut table: Option<EmbeddingTable> = None;
    for (n, line) in lines.iter().enumerate() {
        let mut parts = line.split_whitespace();
        let token = parts.next().unwrap_or_default();
        let values: std::result::Result<Vec<f64>, _> = parts.map(str::parse::<f64>).collect();
        let values = values.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            row: n + 1,
            message: e.to_string(),
        })?;
        if n == 0 && values.len() == 1 && token.parse::<usize>().is_ok() {
            continue;
        }
        let t = table.get_or_insert_with(|| EmbeddingTable::new(values.len()));
        t.insert(token, values).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            row: n + 1,
            message: e.to_string(),
        })?;
    }
    Ok(table.unwrap_or_default())
}

/// Reads `unit_id,annotation_id,label` rows. Pairs outside `universe` (when
/// given) are skipped and counted. Absent pairs are negative.
pub fn load_labels(
    path: &Path,
    method: LabelMethod,
    universe: Option<&BTreeSet<PairKey>>,
) -> Result<(LabelSet, usize)> {
    let mut rdr = open_csv(path)?;
    let cols = Columns::new(rdr.headers()?);
    let unit = cols.require(path, "unit_id")?;
    let ann = cols.require(path, "annotation_id")?;
    let lab = cols.require(path, "label")?;
    let mut set = LabelSet::new(method);
    let mut skipped = 0;
    for rec in rdr.records() {
        let rec = rec?;
        let line = record_line(&rec);
        let key = (
            rec.get(unit).unwrap_or("").to_string(),
            rec.get(ann).unwrap_or("").to_string(),
        );
        let label = match rec.get(lab).unwrap_or("") {
            "1" | "true" => true,
            "0" | "false" => false,
            other => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    row: line,
                    message: format!("label must be 0 or 1, got {other:?}"),
                })
            }
        };
        if universe.is_some_and(|u| !u.contains(&key)) {
            log::warn!(
                "{}:{line}: unknown unit/annotation ({}, {}), row skipped",
                path.display(),
                key.0,
                key.1
            );
            skipped += 1;
            continue;
        }
        set.labels.insert(key, label);
    }
    if skipped > 0 {
        log::warn!("{}: {skipped} row(s) skipped", path.display());
    }
    Ok((set, skipped))
}

/// Expert labels restricted to the pairs of a vectorized dataset.
pub fn load_expert_labels(path: &Path, vectors: &VectorSet) -> Result<(LabelSet, usize)> {
    let universe: BTreeSet<PairKey> = vectors.universe().into_iter().collect();
    load_labels(path, LabelMethod::Expert, Some(&universe))
}

/// One row per universe pair, `label` 0 or 1.
pub fn write_labels(path: &Path, labels: &LabelSet, universe: &[PairKey]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["unit_id", "annotation_id", "label"])?;
    for key in universe {
        let v = labels.labels.get(key).copied().unwrap_or(false);
        w.write_record([key.0.as_str(), key.1.as_str(), if v { "1" } else { "0" }])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_scores(path: &Path, scores: &[UnitAnnotationScore]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["unit_id", "annotation_id", "score"])?;
    for s in scores {
        w.write_record([s.unit_id.as_str(), s.annotation_id.as_str(), &fmt6(s.score)])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_scores(path: &Path) -> Result<Vec<UnitAnnotationScore>> {
    let mut rdr = open_csv(path)?;
    let cols = Columns::new(rdr.headers()?);
    let (u, a, s) = (
        cols.require(path, "unit_id")?,
        cols.require(path, "annotation_id")?,
        cols.require(path, "score")?,
    );
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let score = rec.get(s).unwrap_or("").parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            row: record_line(&rec),
            message: "score is not a number".into(),
        })?;
        out.push(UnitAnnotationScore {
            unit_id: rec.get(u).unwrap_or("").to_string(),
            annotation_id: rec.get(a).unwrap_or("").to_string(),
            score,
        });
    }
    Ok(out)
}

/// `spam_flag` is 1 for workers with a spam verdict.
pub fn write_worker_metrics(
    path: &Path,
    metrics: &[WorkerMetrics],
    verdicts: &[SpamVerdict],
) -> Result<()> {
    let spam: BTreeSet<&str> = verdicts
        .iter()
        .filter(|v| v.is_spam)
        .map(|v| v.worker_id.as_str())
        .collect();
    let mut w = writer(path)?;
    w.write_record(["worker_id", "wwa", "wma", "na", "spam_flag"])?;
    for m in metrics {
        let flag = if spam.contains(m.worker_id.as_str()) {
            "1"
        } else {
            "0"
        };
        w.write_record([
            m.worker_id.as_str(),
            &fmt6(m.wwa),
            &fmt6(m.wma),
            &fmt6(m.na),
            flag,
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_spam_verdicts(path: &Path, verdicts: &[SpamVerdict]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["worker_id", "is_spam", "reasons", "wwa", "wma", "na"])?;
    for v in verdicts {
        let reasons: Vec<&str> = v.reasons.iter().map(|r| r.as_str()).collect();
        w.write_record([
            v.worker_id.as_str(),
            if v.is_spam { "1" } else { "0" },
            &reasons.join("|"),
            &fmt6(v.wwa),
            &fmt6(v.wma),
            &fmt6(v.na),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_spam_verdicts(path: &Path) -> Result<Vec<SpamVerdict>> {
    let mut rdr = open_csv(path)?;
    let cols = Columns::new(rdr.headers()?);
    let idx: Vec<usize> = ["worker_id", "is_spam", "reasons", "wwa", "wma", "na"]
        .iter()
        .map(|c| cols.require(path, c))
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = record_line(&rec);
        let get = |i: usize| rec.get(idx[i]).unwrap_or("");
        let num = |i: usize| {
            get(i).parse::<f64>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                row: line,
                message: format!("bad number {:?}", get(i)),
            })
        };
        let reasons = get(2)
            .split('|')
            .filter(|s| !s.is_empty())
            .map(|s| {
                SpamReason::parse(s).ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    row: line,
                    message: format!("unknown reason {s:?}"),
                })
            })
            .collect::<Result<BTreeSet<_>>>()?;
        out.push(SpamVerdict {
            worker_id: get(0).to_string(),
            is_spam: get(1) == "1",
            reasons,
            wwa: num(3)?,
            wma: num(4)?,
            na: num(5)?,
        });
    }
    Ok(out)
}

pub fn write_effort_rejections(path: &Path, rejections: &[EffortRejection]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["worker_id", "unit_id", "rule"])?;
    for r in rejections {
        w.write_record([r.worker_id.as_str(), r.unit_id.as_str(), r.rule])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_effort_rejections(path: &Path) -> Result<Vec<EffortRejection>> {
    let mut rdr = open_csv(path)?;
    let cols = Columns::new(rdr.headers()?);
    let (w, u, r) = (
        cols.require(path, "worker_id")?,
        cols.require(path, "unit_id")?,
        cols.require(path, "rule")?,
    );
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let rule = match rec.get(r).unwrap_or("") {
            "no_annotation_without_justification" => "no_annotation_without_justification",
            "few_annotations_without_justification" => "few_annotations_without_justification",
            other => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    row: record_line(&rec),
                    message: format!("unknown rule {other:?}"),
                })
            }
        };
        out.push(EffortRejection {
            worker_id: rec.get(w).unwrap_or("").to_string(),
            unit_id: rec.get(u).unwrap_or("").to_string(),
            rule,
        });
    }
    Ok(out)
}

pub fn write_violations(path: &Path, violations: &[Violation]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["kind", "worker_id", "unit_id", "fatal", "detail"])?;
    for v in violations {
        let (wid, uid) = v.ids();
        w.write_record([
            v.kind(),
            wid,
            uid,
            if v.is_fatal() { "1" } else { "0" },
            &v.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes the per-unit vocabularies (`vocabulary.csv`, in index order) and the
/// worker vectors (`vectors.csv`, selected entries `|`-joined).
pub fn write_vector_set(vocab_path: &Path, vectors_path: &Path, set: &VectorSet) -> Result<()> {
    let mut w = writer(vocab_path)?;
    w.write_record(["unit_id", "annotation_id", "scope"])?;
    for u in set.units() {
        let scope = match u.vocabulary.scope {
            VocabularyScope::Global => "global",
            VocabularyScope::PerUnit => "per_unit",
        };
        for a in u.vocabulary.entries() {
            w.write_record([u.unit_id.as_str(), a.as_str(), scope])?;
        }
        if u.vocabulary.is_empty() {
            // keeps units with an empty answer space
            w.write_record([u.unit_id.as_str(), "", scope])?;
        }
    }
    w.flush().map_err(|e| Error::io(vocab_path, e))?;

    let mut w = writer(vectors_path)?;
    w.write_record(["unit_id", "worker_id", "annotations"])?;
    for u in set.units() {
        for v in &u.vectors {
            let chosen: Vec<&str> = u
                .vocabulary
                .entries()
                .iter()
                .zip(&v.bits)
                .filter(|(_, b)| **b)
                .map(|(a, _)| a.as_str())
                .collect();
            w.write_record([u.unit_id.as_str(), v.worker_id.as_str(), &chosen.join("|")])?;
        }
    }
    w.flush().map_err(|e| Error::io(vectors_path, e))
}

pub fn read_vector_set(vocab_path: &Path, vectors_path: &Path, task_id: &str) -> Result<VectorSet> {
    let mut rdr = open_csv(vocab_path)?;
    let cols = Columns::new(rdr.headers()?);
    let (u, a, s) = (
        cols.require(vocab_path, "unit_id")?,
        cols.require(vocab_path, "annotation_id")?,
        cols.require(vocab_path, "scope")?,
    );
    let mut entries: BTreeMap<String, (VocabularyScope, Vec<String>)> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let scope = match rec.get(s).unwrap_or("") {
            "global" => VocabularyScope::Global,
            _ => VocabularyScope::PerUnit,
        };
        let e = entries
            .entry(rec.get(u).unwrap_or("").to_string())
            .or_insert_with(|| (scope, Vec::new()));
        let ann = rec.get(a).unwrap_or("");
        if !ann.is_empty() {
            e.1.push(ann.to_string());
        }
    }

    let mut rdr = open_csv(vectors_path)?;
    let cols = Columns::new(rdr.headers()?);
    let (u, w, a) = (
        cols.require(vectors_path, "unit_id")?,
        cols.require(vectors_path, "worker_id")?,
        cols.require(vectors_path, "annotations")?,
    );
    let mut selections: BTreeMap<String, Vec<(String, Vec<String>)>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        selections
            .entry(rec.get(u).unwrap_or("").to_string())
            .or_default()
            .push((
                rec.get(w).unwrap_or("").to_string(),
                split_annotations(rec.get(a).unwrap_or("")),
            ));
    }

    let mut set = VectorSet::new(task_id);
    // closed tasks share one vocabulary
    let mut shared: Option<Arc<AnnotationVocabulary>> = None;
    for (unit, (scope, list)) in entries {
        let vocab = match (&shared, scope) {
            (Some(v), VocabularyScope::Global) if v.entries() == list.as_slice() => Arc::clone(v),
            _ => {
                let v = Arc::new(AnnotationVocabulary::with_scope(task_id, scope, list)?);
                if scope == VocabularyScope::Global {
                    shared = Some(Arc::clone(&v));
                }
                v
            }
        };
        let mut vectors = Vec::new();
        for (worker, chosen) in selections.remove(&unit).unwrap_or_default() {
            let mut v = WorkerVector::zeros(&worker, &unit, vocab.len());
            for c in chosen {
                let i = vocab.index_of(&c).ok_or_else(|| Error::UnknownToken {
                    unit_id: unit.clone(),
                    token: c.clone(),
                })?;
                v.bits[i] = true;
            }
            vectors.push(v);
        }
        set.insert_unit(&unit, vocab, vectors)?;
    }
    if let Some(unit) = selections.keys().next() {
        return Err(Error::Parse {
            path: vectors_path.to_path_buf(),
            row: 0,
            message: format!("unit {unit} has vectors but no vocabulary"),
        });
    }
    Ok(set)
}

pub fn write_reduction_trace(path: &Path, traces: &[ReductionTrace]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["unit_id", "representative", "member", "action"])?;
    for t in traces {
        for (rep, member, action) in t.rows() {
            w.write_record([
                t.unit_id.as_str(),
                rep.as_str(),
                member.as_str(),
                action.as_str(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn outcome_fields(o: &EvaluationOutcome) -> [String; 8] {
    [
        o.tp.to_string(),
        o.fp.to_string(),
        o.fn_.to_string(),
        o.tn.to_string(),
        fmt6(o.precision),
        fmt6(o.recall),
        fmt6(o.f1),
        fmt6(o.accuracy),
    ]
}

pub fn write_evaluation(path: &Path, rows: &[(String, EvaluationOutcome)]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "method",
        "tp",
        "fp",
        "fn",
        "tn",
        "precision",
        "recall",
        "f1",
        "accuracy",
    ])?;
    for (name, o) in rows {
        let mut rec = vec![name.clone()];
        rec.extend(outcome_fields(o));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_sweep(path: &Path, sweep: &SweepResult) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "threshold",
        "tp",
        "fp",
        "fn",
        "tn",
        "precision",
        "recall",
        "f1",
        "accuracy",
    ])?;
    for (t, o) in &sweep.points {
        let mut rec = vec![fmt6(*t)];
        rec.extend(outcome_fields(o));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_ablation(path: &Path, ablation: &AblationResult) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "max_workers",
        "n_units",
        "precision",
        "recall",
        "f1",
        "accuracy",
    ])?;
    for p in &ablation.points {
        let o = &p.outcome;
        w.write_record([
            p.max_workers.to_string(),
            p.n_units_used.to_string(),
            fmt6(o.precision),
            fmt6(o.recall),
            fmt6(o.f1),
            fmt6(o.accuracy),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_mcnemar(path: &Path, rows: &[(String, String, McNemarResult)]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["method_a", "method_b", "b", "c", "statistic", "p_value"])?;
    for (a, b, r) in rows {
        w.write_record([
            a.clone(),
            b.clone(),
            r.b.to_string(),
            r.c.to_string(),
            fmt6(r.statistic),
            format!("{:.6e}", r.p_value),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_calibration(
    agreement_path: &Path,
    disagreement_path: &Path,
    cal: &Calibration,
) -> Result<()> {
    let mut w = writer(agreement_path)?;
    w.write_record(["threshold", "agreement", "chosen"])?;
    for (t, n) in &cal.agreement {
        let chosen = if *t == cal.threshold { "1" } else { "0" };
        w.write_record([fmt6(*t), n.to_string(), chosen.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(agreement_path, e))?;

    let mut w = writer(disagreement_path)?;
    w.write_record(["unit_id", "annotation_id", "crowd", "expert"])?;
    for d in &cal.disagreements {
        w.write_record([
            d.unit_id.as_str(),
            d.annotation_id.as_str(),
            if d.crowd { "1" } else { "0" },
            if d.expert { "1" } else { "0" },
        ])?;
    }
    w.flush().map_err(|e| Error::io(disagreement_path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
