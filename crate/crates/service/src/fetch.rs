//! Fetching article pages for URL uploads.

use std::time::Duration;

use chrono::Utc;
use thiserror::Error;

use concern_core::ingest::{ingest_html, Document, DocumentMeta, IngestError, IngestOptions};

pub const FETCH_TIMEOUT: Duration = Duration::from_secs(10);
pub const FETCH_RETRIES: u32 = 2;

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("invalid URL `{0}`: only http and https are supported")]
    InvalidUrl(String),
    #[error("fetch failed: {0}")]
    Network(String),
    #[error("server answered HTTP {0}")]
    Status(u16),
    #[error("content type `{0}` is not HTML")]
    NotHtml(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

pub fn check_url(url: &str) -> Result<(), FetchError> {
    let lower = url.trim().to_ascii_lowercase();
    let rest = lower.strip_prefix("http://").or_else(|| lower.strip_prefix("https://"));
    match rest {
        Some(host) if !host.is_empty() && !host.starts_with('/') => Ok(()),
        _ => Err(FetchError::InvalidUrl(url.to_string())),
    }
}

/// Downloads `url` (blocking) and ingests its main text. Network errors and
/// 5xx answers are retried up to [`FETCH_RETRIES`] times.
pub fn fetch_document(url: &str, date: Option<chrono::NaiveDate>) -> Result<Document, FetchError> {
    check_url(url)?;
    let client = reqwest::blocking::Client::builder()
        .timeout(FETCH_TIMEOUT)
        .build()
        .map_err(|e| FetchError::Network(e.to_string()))?;
    let mut last = FetchError::Network("no attempt made".into());
    for attempt in 0..=FETCH_RETRIES {
        if attempt > 0 {
            std::thread::sleep(Duration::from_millis(200 << attempt));
        }
        let resp = match client.get(url).send() {
            Ok(r) => r,
            Err(e) => {
                last = FetchError::Network(e.to_string());
                continue;
            }
        };
        let status = resp.status();
        if status.is_server_error() {
            last = FetchError::Status(status.as_u16());
            continue;
        }
        if !status.is_success() {
            return Err(FetchError::Status(status.as_u16()));
        }
        let ctype = resp
            .headers()
            .get(reqwest::header::CONTENT_TYPE)
            .and_then(|v| v.to_str().ok())
            .unwrap_or("")
            .to_string();
        if !ctype.is_empty() && !ctype.to_ascii_lowercase().contains("html") {
            return Err(FetchError::NotHtml(ctype));
        }
        let html = match resp.text() {
            Ok(t) => t,
            Err(e) => {
                last = FetchError::Network(e.to_string());
                continue;
            }
        };
        let meta = DocumentMeta { id: None, url: Some(url.to_string()), date, fetched_at: Some(Utc::now()) };
        return Ok(ingest_html(&html, meta, IngestOptions::default())?);
    }
    Err(last)
}
