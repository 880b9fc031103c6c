//! JSONL files exchanged by the CLI subcommands.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use concern_core::analytics::{aggregate_article, ArticleLabel};
use concern_core::ingest::Document;
use concern_core::student::Prediction;
use concern_core::teacher::{import_jsonl, AnnotationRecord, Provenance, TeacherError};
use concern_core::taxonomy::{LabelVector, Taxonomy};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path} line {line}: {reason}")]
    Record { path: String, line: usize, reason: String },
    #[error("{path}: {source}")]
    Labels { path: String, source: TeacherError },
    #[error("{0}")]
    Mismatch(String),
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io { path: path.display().to_string(), source }
}

pub fn open(path: &Path) -> Result<BufReader<File>, CorpusError> {
    File::open(path).map(BufReader::new).map_err(io(path))
}

pub fn create(path: &Path) -> Result<BufWriter<File>, CorpusError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io(dir))?;
    }
    File::create(path).map(BufWriter::new).map_err(io(path))
}

/// One passage in a corpus file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassageRecord {
    pub passage_id: String,
    pub doc_id: String,
    pub start: usize,
    pub end: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date: Option<NaiveDate>,
    pub text: String,
}

impl PassageRecord {
    pub fn from_document(doc: &Document) -> impl Iterator<Item = PassageRecord> + '_ {
        doc.passages.iter().map(|p| PassageRecord {
            passage_id: p.passage_id.clone(),
            doc_id: p.doc_id.clone(),
            start: p.start,
            end: p.end,
            date: doc.published_at,
            text: p.text.clone(),
        })
    }
}

pub fn write_jsonl<T: Serialize, W: Write>(items: impl IntoIterator<Item = T>, mut out: W) -> std::io::Result<()> {
    for it in items {
        serde_json::to_writer(&mut out, &it)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_passages(path: &Path) -> Result<Vec<PassageRecord>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| CorpusError::Record {
            path: path.display().to_string(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_labels(path: &Path, t: &Taxonomy) -> Result<Vec<AnnotationRecord>, CorpusError> {
    import_jsonl(open(path)?, t).map_err(|source| CorpusError::Labels { path: path.display().to_string(), source })
}

/// Label file line written by `classify`: the annotation export shape plus
/// per-label scores.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionLine {
    pub passage_id: String,
    pub labels: BTreeMap<String, u8>,
    pub scores: BTreeMap<String, f64>,
    pub provenance: Provenance,
    pub valid: bool,
}

impl PredictionLine {
    pub fn new(passage_id: &str, label_ids: &[String], p: &Prediction) -> Self {
        PredictionLine {
            passage_id: passage_id.to_string(),
            labels: label_ids.iter().cloned().zip(p.labels.iter().map(u8::from)).collect(),
            scores: label_ids.iter().cloned().zip(p.scores.iter().copied()).collect(),
            provenance: Provenance::Student,
            valid: true,
        }
    }
}

/// Label vectors keyed by passage id, valid records only.
pub fn label_index(records: &[AnnotationRecord]) -> HashMap<&str, LabelVector> {
    records.iter().filter(|r| r.valid).map(|r| (r.passage_id.as_str(), r.labels.to_vector())).collect()
}

/// Per-article labels (OR over passages) for every dated document, sorted by
/// (date, doc_id). Passages without a label record are an error.
pub fn article_labels(passages: &[PassageRecord], labels: &[AnnotationRecord]) -> Result<Vec<ArticleLabel>, CorpusError> {
    let index = label_index(labels);
    let mut docs: BTreeMap<&str, (Option<NaiveDate>, Vec<LabelVector>)> = BTreeMap::new();
    for p in passages {
        let v = index
            .get(p.passage_id.as_str())
            .ok_or_else(|| CorpusError::Mismatch(format!("no valid label record for passage `{}`", p.passage_id)))?;
        let e = docs.entry(&p.doc_id).or_insert((p.date, Vec::new()));
        e.1.push(v.clone());
    }
    let mut out = Vec::new();
    for (doc_id, (date, vs)) in docs {
        let Some(date) = date else { continue };
        let labels = aggregate_article(&vs).map_err(|e| CorpusError::Mismatch(e.to_string()))?;
        out.push(ArticleLabel { doc_id: doc_id.to_string(), date, labels });
    }
    out.sort_by(|a, b| a.date.cmp(&b.date).then_with(|| a.doc_id.cmp(&b.doc_id)));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use concern_core::teacher::RecordLabels;

    fn rec(id: &str, t: &Taxonomy, ids: &[&str]) -> AnnotationRecord {
        AnnotationRecord {
            passage_id: id.into(),
            labels: RecordLabels::Concerns(t.vector_from_ids(ids.iter().copied()).unwrap()),
            provenance: Provenance::Teacher,
            raw_response: None,
            valid: true,
            retries_used: 0,
        }
    }

    fn passage(pid: &str, doc: &str, date: Option<&str>) -> PassageRecord {
        PassageRecord {
            passage_id: pid.into(),
            doc_id: doc.into(),
            start: 0,
            end: 1,
            date: date.map(|d| d.parse().unwrap()),
            text: "x".into(),
        }
    }

    #[test]
    fn articles_are_or_of_passages_sorted_by_date() {
        let t = Taxonomy::default_vaccine();
        let ps = [
            passage("b:0", "b", Some("2020-01-02")),
            passage("b:1", "b", Some("2020-01-02")),
            passage("a:0", "a", Some("2020-01-03")),
            passage("u:0", "u", None),
        ];
        let ls = [rec("b:0", &t, &["1"]), rec("b:1", &t, &["2"]), rec("a:0", &t, &[]), rec("u:0", &t, &["3"])];
        let arts = article_labels(&ps, &ls).unwrap();
        assert_eq!(arts.len(), 2);
        assert_eq!(arts[0].doc_id, "b");
        assert_eq!(t.label_set(&arts[0].labels).unwrap(), ["1", "2"]);
        assert!(article_labels(&ps, &ls[..2]).is_err());
    }
}
