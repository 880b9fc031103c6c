//! LLM teacher annotation: prompt construction, response parsing, caching
//! and the retrying annotation driver.

mod cache;
mod individual;
pub mod mock;
mod parse;
mod prompt;

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::Passage;
use crate::par::{self, Execution};
use crate::student::{Classifier, RELEVANCE_LABEL};
use crate::taxonomy::{LabelVector, Taxonomy};

pub use cache::{cache_key, MemoryCache, NoCache, ResponseCache};
pub use individual::{individual_threshold, sample_individual, IndividualSampling, IndividualThresholds};
pub use parse::{
    format_multilabel_response, parse_multilabel_response, parse_relevance_response, parse_single_label_response,
};
pub use prompt::{
    build_multilabel_prompt, build_relevance_prompt, individual_node_from_prompt, passage_from_prompt, PromptMode,
    LABEL_PREFIX,
};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TeacherError {
    #[error("passage text is empty")]
    EmptyPassage,
    #[error("unknown taxonomy node `{0}`")]
    UnknownNode(String),
    #[error("teacher unreachable: {0}")]
    Unreachable(String),
    #[error("teacher request failed: {0}")]
    Request(String),
    #[error("unparseable teacher response: {0}")]
    Unparseable(String),
    #[error("invalid teacher configuration: {0}")]
    Config(String),
    #[error("cache error: {0}")]
    Cache(String),
    #[error("teacher unreachable for all {0} passages")]
    AllUnreachable(usize),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("annotation file error: {0}")]
    Export(String),
}

/// A text-completion model used as the label source.
pub trait Teacher: Send + Sync {
    fn model_name(&self) -> &str;
    fn complete(&self, prompt: &str) -> Result<String, TeacherError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TeacherConfig {
    pub endpoint: String,
    pub model_name: String,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub max_parallel: usize,
    pub retry_limit: u32,
    #[serde(with = "millis")]
    pub timeout: Duration,
    /// First retry delay; doubles on each further retry.
    #[serde(with = "millis")]
    pub backoff_base: Duration,
    /// Sampling temperature sent to the endpoint; `None` leaves the endpoint default.
    pub temperature: Option<f64>,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        TeacherConfig {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model_name: "gpt-4".into(),
            api_key: None,
            max_parallel: 4,
            retry_limit: 3,
            timeout: Duration::from_secs(60),
            backoff_base: Duration::from_millis(500),
            temperature: None,
        }
    }
}

impl TeacherConfig {
    pub fn validate(&self) -> Result<(), TeacherError> {
        if self.max_parallel == 0 {
            return Err(TeacherError::Config("max_parallel must be at least 1".into()));
        }
        if self.model_name.is_empty() {
            return Err(TeacherError::Config("model_name is empty".into()));
        }
        Ok(())
    }

    fn backoff(&self, attempt: u32) -> Duration {
        self.backoff_base.saturating_mul(1u32 << attempt.min(10)).min(Duration::from_secs(60))
    }
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_millis)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Teacher,
    Human,
    Student,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordLabels {
    Relevance(bool),
    Concerns(LabelVector),
}

impl RecordLabels {
    pub fn to_vector(&self) -> LabelVector {
        match self {
            RecordLabels::Relevance(b) => LabelVector::from_bools(vec![*b]),
            RecordLabels::Concerns(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub passage_id: String,
    pub labels: RecordLabels,
    pub provenance: Provenance,
    pub raw_response: Option<String>,
    /// False when no parseable response was obtained; labels are then all zero.
    pub valid: bool,
    pub retries_used: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationTask {
    Relevance,
    Multilabel,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotationReport {
    pub total: usize,
    pub valid: usize,
    pub invalid: usize,
    pub cache_hits: usize,
    pub teacher_calls: usize,
    pub retries: usize,
    /// `(passage_id, last error)` for every invalid record.
    pub failures: Vec<(String, String)>,
}

impl AnnotationReport {
    pub fn cache_hit_rate(&self) -> f64 {
        let lookups = self.cache_hits + self.teacher_calls;
        if lookups == 0 {
            0.0
        } else {
            self.cache_hits as f64 / lookups as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct Annotation {
    pub records: Vec<AnnotationRecord>,
    pub report: AnnotationReport,
}

pub(crate) struct Counters {
    pub hits: AtomicUsize,
    pub calls: AtomicUsize,
}

pub(crate) struct Attempt<T> {
    pub value: Option<T>,
    pub raw: Option<String>,
    pub retries: u32,
    pub reached: bool,
    pub last_error: Option<TeacherError>,
}

/// Cache lookup, then up to `retry_limit` retries with exponential backoff.
/// Only responses that parse are cached.
pub(crate) fn ask<T>(
    prompt: &str,
    key: &str,
    teacher: &dyn Teacher,
    cache: &dyn ResponseCache,
    cfg: &TeacherConfig,
    counters: &Counters,
    parse: impl Fn(&str) -> Result<T, TeacherError>,
) -> Attempt<T> {
    if let Some(raw) = cache.get(key) {
        if let Ok(v) = parse(&raw) {
            counters.hits.fetch_add(1, Ordering::Relaxed);
            return Attempt { value: Some(v), raw: Some(raw), retries: 0, reached: true, last_error: None };
        }
    }
    let mut out = Attempt { value: None, raw: None, retries: 0, reached: false, last_error: None };
    for attempt in 0..=cfg.retry_limit {
        if attempt > 0 {
            std::thread::sleep(cfg.backoff(attempt - 1));
        }
        out.retries = attempt;
        counters.calls.fetch_add(1, Ordering::Relaxed);
        match teacher.complete(prompt) {
            Ok(raw) => {
                out.reached = true;
                match parse(&raw) {
                    Ok(v) => {
                        if let Err(e) = cache.put(key, &raw) {
                            out.last_error = Some(e);
                        }
                        out.value = Some(v);
                        out.raw = Some(raw);
                        return out;
                    }
                    Err(e) => {
                        out.raw = Some(raw);
                        out.last_error = Some(e);
                    }
                }
            }
            Err(e) => {
                if !matches!(e, TeacherError::Unreachable(_)) {
                    out.reached = true;
                }
                out.last_error = Some(e);
            }
        }
    }
    out
}

/// Annotates every passage with the teacher. Produces one record per
/// passage in input order; the only hard error is a teacher that could not
/// be reached for any passage.
pub fn annotate_corpus(
    passages: &[Passage],
    task: AnnotationTask,
    taxonomy: &Taxonomy,
    teacher: &dyn Teacher,
    cache: &dyn ResponseCache,
    cfg: &TeacherConfig,
) -> Result<Annotation, TeacherError> {
    cfg.validate()?;
    let counters = Counters { hits: AtomicUsize::new(0), calls: AtomicUsize::new(0) };
    let model = teacher.model_name().to_string();

    let results: Vec<(AnnotationRecord, bool, Option<String>)> = par::map_bounded(passages, cfg.max_parallel, |p| {
        let prompt = match task {
            AnnotationTask::Relevance => build_relevance_prompt(&p.text),
            AnnotationTask::Multilabel => build_multilabel_prompt(&p.text, taxonomy, &PromptMode::AllInOne),
        };
        let prompt = match prompt {
            Ok(prompt) => prompt,
            Err(e) => {
                let labels = default_labels(task, taxonomy);
                let rec = invalid_record(&p.passage_id, labels, None, 0);
                return (rec, true, Some(e.to_string()));
            }
        };
        let key = cache_key(&prompt, &model, None);
        let (labels, attempt) = match task {
            AnnotationTask::Relevance => {
                ask(&prompt, &key, teacher, cache, cfg, &counters, parse_relevance_response).split(RecordLabels::Relevance)
            }
            AnnotationTask::Multilabel => {
                ask(&prompt, &key, teacher, cache, cfg, &counters, |r| parse_multilabel_response(r, taxonomy))
                    .split(RecordLabels::Concerns)
            }
        };
        match labels {
            Some(labels) => (
                AnnotationRecord {
                    passage_id: p.passage_id.clone(),
                    labels,
                    provenance: Provenance::Teacher,
                    raw_response: attempt.raw,
                    valid: true,
                    retries_used: attempt.retries,
                },
                true,
                None,
            ),
            None => {
                let rec = invalid_record(&p.passage_id, default_labels(task, taxonomy), attempt.raw, attempt.retries);
                (rec, attempt.reached, attempt.last_error.map(|e| e.to_string()))
            }
        }
    });

    if !passages.is_empty() && results.iter().all(|(_, reached, _)| !reached) {
        return Err(TeacherError::AllUnreachable(passages.len()));
    }

    let mut report = AnnotationReport {
        total: results.len(),
        cache_hits: counters.hits.load(Ordering::Relaxed),
        teacher_calls: counters.calls.load(Ordering::Relaxed),
        ..AnnotationReport::default()
    };
    let mut records = Vec::with_capacity(results.len());
    for (rec, _, err) in results {
        report.retries += rec.retries_used as usize;
        if rec.valid {
            report.valid += 1;
        } else {
            report.invalid += 1;
            report.failures.push((rec.passage_id.clone(), err.unwrap_or_else(|| "unknown".into())));
        }
        records.push(rec);
    }
    Ok(Annotation { records, report })
}

impl<T> Attempt<T> {
    fn split<U>(self, f: impl FnOnce(T) -> U) -> (Option<U>, Attempt<()>) {
        let rest = Attempt { value: None, raw: self.raw, retries: self.retries, reached: self.reached, last_error: self.last_error };
        (self.value.map(f), rest)
    }
}

fn default_labels(task: AnnotationTask, t: &Taxonomy) -> RecordLabels {
    match task {
        AnnotationTask::Relevance => RecordLabels::Relevance(false),
        AnnotationTask::Multilabel => RecordLabels::Concerns(LabelVector::zeros(t.len())),
    }
}

fn invalid_record(passage_id: &str, labels: RecordLabels, raw: Option<String>, retries: u32) -> AnnotationRecord {
    AnnotationRecord {
        passage_id: passage_id.to_string(),
        labels,
        provenance: Provenance::Teacher,
        raw_response: raw,
        valid: false,
        retries_used: retries,
    }
}

/// Keeps the passages the relevance model marks positive, in order.
pub fn relevance_filter_pipeline<C: Classifier + ?Sized>(
    passages: &[Passage],
    relevance_model: &C,
    exec: Execution,
) -> Vec<Passage> {
    let texts: Vec<&str> = passages.iter().map(|p| p.text.as_str()).collect();
    let preds = relevance_model.predict_batch(&texts, exec);
    passages.iter().zip(preds).filter(|(_, pr)| pr.labels.get(0)).map(|(p, _)| p.clone()).collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct ExportLine {
    passage_id: String,
    labels: BTreeMap<String, u8>,
    provenance: Provenance,
    valid: bool,
}

/// Label ids used on the wire for a record set.
fn wire_ids(task: AnnotationTask, t: &Taxonomy) -> Vec<String> {
    match task {
        AnnotationTask::Relevance => vec![RELEVANCE_LABEL.to_string()],
        AnnotationTask::Multilabel => t.ids().map(str::to_string).collect(),
    }
}

/// Writes one JSON object per record.
pub fn export_jsonl<W: Write>(
    records: &[AnnotationRecord],
    t: &Taxonomy,
    mut out: W,
) -> Result<(), TeacherError> {
    for r in records {
        let task = match r.labels {
            RecordLabels::Relevance(_) => AnnotationTask::Relevance,
            RecordLabels::Concerns(_) => AnnotationTask::Multilabel,
        };
        let labels = wire_ids(task, t).into_iter().zip(r.labels.to_vector().iter()).map(|(id, b)| (id, b as u8)).collect();
        let line = ExportLine { passage_id: r.passage_id.clone(), labels, provenance: r.provenance, valid: r.valid };
        let json = serde_json::to_string(&line).map_err(|e| TeacherError::Export(e.to_string()))?;
        writeln!(out, "{json}").map_err(|e| TeacherError::Export(e.to_string()))?;
    }
    Ok(())
}

/// Reads an annotation export back. Relevance files have the single label
/// `relevant`; anything else must cover every taxonomy node.
pub fn import_jsonl<R: BufRead>(input: R, t: &Taxonomy) -> Result<Vec<AnnotationRecord>, TeacherError> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line.map_err(|e| TeacherError::Export(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: ExportLine =
            serde_json::from_str(&line).map_err(|e| TeacherError::Export(format!("line {}: {e}", n + 1)))?;
        let bit = |id: &str| -> Result<bool, TeacherError> {
            match parsed.labels.get(id) {
                Some(0) => Ok(false),
                Some(1) => Ok(true),
                Some(v) => Err(TeacherError::Export(format!("line {}: label {id} has value {v}", n + 1))),
                None => Err(TeacherError::Export(format!("line {}: missing label {id}", n + 1))),
            }
        };
        let labels = if parsed.labels.len() == 1 && parsed.labels.contains_key(RELEVANCE_LABEL) {
            RecordLabels::Relevance(bit(RELEVANCE_LABEL)?)
        } else {
            RecordLabels::Concerns(LabelVector::from_bools(t.ids().map(bit).collect::<Result<_, _>>()?))
        };
        out.push(AnnotationRecord {
            passage_id: parsed.passage_id,
            labels,
            provenance: parsed.provenance,
            raw_response: None,
            valid: parsed.valid,
            retries_used: 0,
        });
    }
    Ok(out)
}
