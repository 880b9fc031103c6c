//! Running loaded models over ingested documents.

use std::collections::BTreeSet;
use std::sync::Arc;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use concern_core::analytics::{aggregate_article, ArticleLabel};
use concern_core::ingest::{Document, SourceKind};
use concern_core::par::Execution;
use concern_core::student::{Classifier, StudentError, StudentModel};
use concern_core::taxonomy::{LabelVector, Taxonomy};

use crate::store::{sha256_hex, Store, StoreError};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("no multilabel model is loaded")]
    Missing,
    #[error("model file {path}: {source}")]
    Invalid { path: String, source: StudentError },
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Models shared read-only by every request and job.
#[derive(Clone, Default)]
pub struct Models {
    pub relevance: Option<Arc<dyn Classifier>>,
    pub multilabel: Option<Arc<dyn Classifier>>,
}

impl Models {
    /// Loads `models/relevance.bin` and `models/multilabel.bin` when present.
    pub fn load(store: &Store, taxonomy: &Taxonomy) -> Result<Models, ModelError> {
        let load = |name: &str| -> Result<Option<Arc<dyn Classifier>>, ModelError> {
            match store.load_model_bytes(name)? {
                None => Ok(None),
                Some(bytes) => {
                    let m = StudentModel::load_for(&bytes, taxonomy).map_err(|source| ModelError::Invalid {
                        path: store.model_path(name).display().to_string(),
                        source,
                    })?;
                    Ok(Some(Arc::new(m)))
                }
            }
        };
        Ok(Models { relevance: load("relevance")?, multilabel: load("multilabel")? })
    }

    pub fn multilabel(&self) -> Result<&Arc<dyn Classifier>, ModelError> {
        self.multilabel.as_ref().ok_or(ModelError::Missing)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassageResult {
    pub passage_id: String,
    pub start: usize,
    pub end: usize,
    pub text: String,
    /// Relevance decision when a relevance model ran first.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevant: Option<bool>,
    pub scores: Vec<f64>,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedDocument {
    pub doc_id: String,
    pub source: SourceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub published_at: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fetched_at: Option<DateTime<Utc>>,
    pub raw_text_sha256: String,
    pub raw_text: String,
    pub taxonomy_version: String,
    pub label_ids: Vec<String>,
    pub passages: Vec<PassageResult>,
    pub article_labels: Vec<String>,
}

impl ClassifiedDocument {
    /// Article labels must equal the union of passage labels.
    pub fn article_labels_consistent(&self) -> bool {
        let union: BTreeSet<&str> = self.passages.iter().flat_map(|p| p.labels.iter().map(String::as_str)).collect();
        let article: BTreeSet<&str> = self.article_labels.iter().map(String::as_str).collect();
        union == article && article.len() == self.article_labels.len()
    }

    pub fn article_vector(&self, t: &Taxonomy) -> LabelVector {
        t.vector_from_ids(self.article_labels.iter()).unwrap_or_else(|_| LabelVector::zeros(t.len()))
    }

    pub fn passage_vectors(&self, t: &Taxonomy) -> Vec<LabelVector> {
        self.passages
            .iter()
            .map(|p| t.vector_from_ids(p.labels.iter()).unwrap_or_else(|_| LabelVector::zeros(t.len())))
            .collect()
    }

    pub fn article_label(&self, t: &Taxonomy) -> Option<ArticleLabel> {
        Some(ArticleLabel { doc_id: self.doc_id.clone(), date: self.published_at?, labels: self.article_vector(t) })
    }

    /// Persists the document; raw text goes to the blob store.
    pub fn save(&self, store: &Store) -> Result<(), StoreError> {
        store.put_blob(self.raw_text.as_bytes())?;
        let mut stub = self.clone();
        stub.raw_text.clear();
        store.save_json("documents", &self.doc_id, &stub)
    }

    pub fn load(store: &Store, doc_id: &str) -> Result<ClassifiedDocument, StoreError> {
        let mut doc: ClassifiedDocument = store.load_json("documents", doc_id)?;
        doc.fill_raw_text(store)?;
        Ok(doc)
    }

    /// Every stored document, raw text included.
    pub fn load_all(store: &Store) -> Result<Vec<ClassifiedDocument>, StoreError> {
        let mut docs: Vec<ClassifiedDocument> = store.load_all("documents")?;
        for d in &mut docs {
            d.fill_raw_text(store)?;
        }
        Ok(docs)
    }

    fn fill_raw_text(&mut self, store: &Store) -> Result<(), StoreError> {
        let bytes = store.get_blob(&self.raw_text_sha256)?;
        self.raw_text = String::from_utf8(bytes).map_err(|e| StoreError::Serde(e.to_string()))?;
        Ok(())
    }
}

/// Classifies every passage of `doc`. With a relevance model, passages it
/// rejects get no concern labels and zero scores.
pub fn classify_document(
    doc: &Document,
    models: &Models,
    taxonomy: &Taxonomy,
    exec: Execution,
) -> Result<ClassifiedDocument, ModelError> {
    let ml = models.multilabel()?;
    let label_ids: Vec<String> = ml.label_ids().to_vec();
    let texts: Vec<&str> = doc.passages.iter().map(|p| p.text.as_str()).collect();
    let relevant: Vec<Option<bool>> = match &models.relevance {
        Some(r) => r.predict_batch(&texts, exec).into_iter().map(|p| Some(p.labels.get(0))).collect(),
        None => vec![None; texts.len()],
    };
    let preds = ml.predict_batch(&texts, exec);
    let mut vectors = Vec::with_capacity(texts.len());
    let passages = doc
        .passages
        .iter()
        .zip(preds)
        .zip(&relevant)
        .map(|((p, pred), rel)| {
            let (scores, labels) = if *rel == Some(false) {
                (vec![0.0; label_ids.len()], LabelVector::zeros(label_ids.len()))
            } else {
                (pred.scores, pred.labels)
            };
            let names = labels.positives().map(|i| label_ids[i].clone()).collect();
            vectors.push(labels);
            PassageResult {
                passage_id: p.passage_id.clone(),
                start: p.start,
                end: p.end,
                text: p.text.clone(),
                relevant: *rel,
                scores,
                labels: names,
            }
        })
        .collect();
    let article = aggregate_article(&vectors).unwrap_or_else(|_| LabelVector::zeros(label_ids.len()));
    Ok(ClassifiedDocument {
        doc_id: doc.doc_id.clone(),
        source: doc.source,
        url: doc.url.clone(),
        published_at: doc.published_at,
        fetched_at: doc.fetched_at,
        raw_text_sha256: sha256_hex(doc.raw_text.as_bytes()),
        raw_text: doc.raw_text.clone(),
        taxonomy_version: taxonomy.version().to_string(),
        article_labels: article.positives().map(|i| label_ids[i].clone()).collect(),
        label_ids,
        passages,
    })
}
