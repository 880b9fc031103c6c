//! Streaming ingestion of JSONL, CSV and plain-text uploads.

use std::io::BufRead;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{content_id, Document, DocumentMeta, IngestError, IngestOptions, SourceKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileFormat {
    Jsonl,
    Csv,
    Plain,
}

impl FromStr for FileFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "ndjson" => Ok(FileFormat::Jsonl),
            "csv" => Ok(FileFormat::Csv),
            "plain" | "txt" | "text" => Ok(FileFormat::Plain),
            other => Err(format!("unknown file format `{other}` (expected jsonl, csv or plain)")),
        }
    }
}

/// A record that could not be turned into a document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedRecord {
    /// 1-based line number in the uploaded file.
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct IngestReport {
    pub documents: Vec<Document>,
    pub skipped: Vec<SkippedRecord>,
}

#[derive(Deserialize)]
struct JsonlRecord {
    #[serde(default)]
    id: Option<String>,
    #[serde(default)]
    url: Option<String>,
    #[serde(default)]
    date: Option<String>,
    text: String,
}

fn parse_date(raw: Option<&str>) -> Result<Option<NaiveDate>, String> {
    match raw.map(str::trim).filter(|s| !s.is_empty()) {
        None => Ok(None),
        Some(s) => NaiveDate::parse_from_str(s, "%Y-%m-%d")
            .map(Some)
            .map_err(|_| format!("date `{s}` is not YYYY-MM-DD")),
    }
}

fn nonempty(s: Option<String>) -> Option<String> {
    s.filter(|v| !v.trim().is_empty())
}

fn record_document(
    line: u64,
    id: Option<String>,
    url: Option<String>,
    date: Option<&str>,
    text: String,
    opts: IngestOptions,
) -> Result<Document, SkippedRecord> {
    let skip = |reason: String| SkippedRecord { line, reason };
    let date = parse_date(date).map_err(skip)?;
    if text.trim().is_empty() {
        return Err(skip("`text` is empty".into()));
    }
    let id = nonempty(id).unwrap_or_else(|| format!("{}-{line}", content_id(SourceKind::File, &text)));
    let meta = DocumentMeta { id: Some(id), url: nonempty(url), date, fetched_at: None };
    Document::build(SourceKind::File, text, meta, opts).map_err(|e| skip(e.to_string()))
}

/// Lazily yields one document per record; memory use is bounded by the
/// largest single record.
pub enum DocumentStream<R: BufRead> {
    Jsonl { reader: R, line: u64, buf: Vec<u8>, opts: IngestOptions },
    Csv { records: csv::StringRecordsIntoIter<R>, cols: CsvColumns, opts: IngestOptions },
    Plain { body: Option<Result<Document, SkippedRecord>> },
}

#[derive(Debug, Clone, Copy)]
pub struct CsvColumns {
    text: usize,
    id: Option<usize>,
    url: Option<usize>,
    date: Option<usize>,
}

impl<R: BufRead> DocumentStream<R> {
    pub fn new(mut reader: R, format: FileFormat, opts: IngestOptions) -> Result<Self, IngestError> {
        match format {
            FileFormat::Jsonl => Ok(DocumentStream::Jsonl { reader, line: 0, buf: Vec::new(), opts }),
            FileFormat::Csv => {
                let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
                let headers = rdr
                    .headers()
                    .map_err(|e| IngestError::Schema(format!("cannot read CSV header: {e}")))?
                    .clone();
                let find = |name: &str| headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name));
                let text = find("text")
                    .ok_or_else(|| IngestError::Schema("CSV header has no `text` column".into()))?;
                let cols = CsvColumns { text, id: find("id"), url: find("url"), date: find("date") };
                Ok(DocumentStream::Csv { records: rdr.into_records(), cols, opts })
            }
            FileFormat::Plain => {
                let mut bytes = Vec::new();
                reader.read_to_end(&mut bytes)?;
                let body = String::from_utf8(bytes).map_err(|_| IngestError::InvalidUtf8)?;
                if body.trim().is_empty() {
                    return Err(IngestError::EmptyInput);
                }
                let doc = Document::build(SourceKind::File, body, DocumentMeta::default(), opts)
                    .map_err(|e| SkippedRecord { line: 1, reason: e.to_string() });
                Ok(DocumentStream::Plain { body: Some(doc) })
            }
        }
    }
}

impl<R: BufRead> Iterator for DocumentStream<R> {
    type Item = Result<Document, SkippedRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        match self {
            DocumentStream::Plain { body } => body.take(),
            DocumentStream::Jsonl { reader, line, buf, opts } => loop {
                buf.clear();
                match reader.read_until(b'\n', buf) {
                    Ok(0) => return None,
                    Ok(_) => {}
                    Err(e) => {
                        *line += 1;
                        return Some(Err(SkippedRecord { line: *line, reason: e.to_string() }));
                    }
                }
                *line += 1;
                let Ok(text) = std::str::from_utf8(buf) else {
                    return Some(Err(SkippedRecord { line: *line, reason: "invalid UTF-8".into() }));
                };
                if text.trim().is_empty() {
                    continue;
                }
                let rec: JsonlRecord = match serde_json::from_str(text) {
                    Ok(r) => r,
                    Err(e) => return Some(Err(SkippedRecord { line: *line, reason: e.to_string() })),
                };
                return Some(record_document(*line, rec.id, rec.url, rec.date.as_deref(), rec.text, *opts));
            },
            DocumentStream::Csv { records, cols, opts } => {
                let rec = records.next()?;
                Some(match rec {
                    Err(e) => {
                        let line = e.position().map(|p| p.line()).unwrap_or(0);
                        Err(SkippedRecord { line, reason: e.to_string() })
                    }
                    Ok(r) => {
                        let line = r.position().map(|p| p.line()).unwrap_or(0);
                        let get = |i: Option<usize>| i.and_then(|i| r.get(i)).map(str::to_string);
                        match r.get(cols.text) {
                            None => Err(SkippedRecord { line, reason: "missing `text` field".into() }),
                            Some(text) => record_document(
                                line,
                                get(cols.id),
                                get(cols.url),
                                get(cols.date).as_deref(),
                                text.to_string(),
                                *opts,
                            ),
                        }
                    }
                })
            }
        }
    }
}

/// Ingests a whole upload, collecting documents and skipped-record reports.
pub fn ingest_bytes(bytes: &[u8], format: FileFormat, opts: IngestOptions) -> Result<IngestReport, IngestError> {
    let mut report = IngestReport::default();
    for item in DocumentStream::new(bytes, format, opts)? {
        match item {
            Ok(doc) => report.documents.push(doc),
            Err(skip) => report.skipped.push(skip),
        }
    }
    Ok(report)
}
