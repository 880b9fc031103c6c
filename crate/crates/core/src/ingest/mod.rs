//! Turning raw text, uploaded files and fetched HTML into [`Document`]s made of
//! [`Passage`]s with exact character offsets.

mod file;
pub mod html;
mod segment;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use file::{ingest_bytes, DocumentStream, FileFormat, IngestReport, SkippedRecord};
pub use segment::{segment, Span, DEFAULT_MAX_PASSAGE_LEN};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("input text is empty")]
    EmptyInput,
    #[error("input is not valid UTF-8")]
    InvalidUtf8,
    #[error("schema error: {0}")]
    Schema(String),
    #[error("no article text could be extracted from the page")]
    EmptyExtraction,
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Text,
    File,
    Url,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub passage_id: String,
    pub doc_id: String,
    /// Character (Unicode scalar) offsets into the document's `raw_text`.
    pub start: usize,
    pub end: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub source: SourceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub published_at: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fetched_at: Option<DateTime<Utc>>,
    pub raw_text: String,
    pub passages: Vec<Passage>,
}

/// Caller-supplied metadata for a single document.
#[derive(Debug, Clone, Default)]
pub struct DocumentMeta {
    pub id: Option<String>,
    pub url: Option<String>,
    pub date: Option<NaiveDate>,
    pub fetched_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, Copy)]
pub struct IngestOptions {
    pub max_passage_len: usize,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions { max_passage_len: DEFAULT_MAX_PASSAGE_LEN }
    }
}

/// Content-derived document id: identical text from the same source kind gets
/// the same id.
pub fn content_id(source: SourceKind, text: &str) -> String {
    let mut h = Sha256::new();
    h.update(format!("{source:?}").as_bytes());
    h.update([0]);
    h.update(text.as_bytes());
    format!("doc-{}", &hex::encode(h.finalize())[..16])
}

impl Passage {
    /// A passage not tied to a stored document; it is its own document.
    pub fn standalone(passage_id: impl Into<String>, text: impl Into<String>) -> Passage {
        let passage_id = passage_id.into();
        let text = text.into();
        Passage { doc_id: passage_id.clone(), passage_id, start: 0, end: text.chars().count(), text }
    }
}

impl Document {
    pub fn build(
        source: SourceKind,
        raw_text: String,
        meta: DocumentMeta,
        opts: IngestOptions,
    ) -> Result<Document, IngestError> {
        if raw_text.trim().is_empty() {
            return Err(IngestError::EmptyInput);
        }
        let doc_id = meta.id.unwrap_or_else(|| content_id(source, &raw_text));
        let passages = segment(&raw_text, opts.max_passage_len)
            .into_iter()
            .enumerate()
            .map(|(i, span)| Passage {
                passage_id: format!("{doc_id}:{i}"),
                doc_id: doc_id.clone(),
                start: span.start,
                end: span.end,
                text: span.text,
            })
            .collect();
        Ok(Document {
            doc_id,
            source,
            url: meta.url,
            published_at: meta.date,
            fetched_at: meta.fetched_at,
            raw_text,
            passages,
        })
    }

    /// Character slice `[start, end)` of `raw_text`.
    pub fn slice_chars(&self, start: usize, end: usize) -> String {
        self.raw_text.chars().skip(start).take(end.saturating_sub(start)).collect()
    }
}

pub fn ingest_text(body: &str, meta: DocumentMeta) -> Result<Document, IngestError> {
    ingest_text_with(body, meta, IngestOptions::default())
}

pub fn ingest_text_with(
    body: &str,
    meta: DocumentMeta,
    opts: IngestOptions,
) -> Result<Document, IngestError> {
    Document::build(SourceKind::Text, body.to_string(), meta, opts)
}

/// Builds a document from an already fetched HTML page. Network access lives
/// with the caller; this only extracts and segments.
pub fn ingest_html(html: &str, meta: DocumentMeta, opts: IngestOptions) -> Result<Document, IngestError> {
    let text = html::extract_main_text(html);
    if text.trim().is_empty() {
        return Err(IngestError::EmptyExtraction);
    }
    Document::build(SourceKind::Url, text, meta, opts)
}
