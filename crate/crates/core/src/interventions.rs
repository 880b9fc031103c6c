//! Intervention handouts tagged with concern labels, matched to a query by
//! Jaccard similarity of label sets.

use std::collections::BTreeSet;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::student::{Classifier, Prediction};
use crate::taxonomy::{LabelVector, Taxonomy};

pub const EXAMPLE_STORE: &str = include_str!("../data/interventions.jsonl");

#[derive(Debug, Error, PartialEq, Eq)]
pub enum InterventionError {
    #[error("no concerns detected in the query")]
    NoConcerns,
    #[error("intervention store is empty")]
    EmptyStore,
    #[error("top_k must be at least 1")]
    ZeroTopK,
    #[error("line {line}: {reason}")]
    Invalid { line: usize, reason: String },
    #[error("query has {actual} labels but the taxonomy has {expected}")]
    QueryShape { expected: usize, actual: usize },
    #[error("read error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Audience {
    Patient,
    Expert,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterventionDoc {
    #[serde(rename = "id")]
    pub intervention_id: String,
    pub title: String,
    pub audience: Audience,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<String>,
    pub labels: BTreeSet<String>,
}

/// `|a ∩ b| / |a ∪ b|`, with `J(∅, ∅) = 0`.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InterventionStore {
    docs: Vec<InterventionDoc>,
}

impl InterventionStore {
    /// Builds a store after checking every doc against the taxonomy.
    pub fn new(docs: Vec<InterventionDoc>, t: &Taxonomy) -> Result<Self, InterventionError> {
        let mut seen = BTreeSet::new();
        for (i, d) in docs.iter().enumerate() {
            validate(d, t, &mut seen).map_err(|reason| InterventionError::Invalid { line: i + 1, reason })?;
        }
        Ok(InterventionStore { docs })
    }

    pub fn load_jsonl<R: BufRead>(input: R, t: &Taxonomy) -> Result<Self, InterventionError> {
        let mut docs = Vec::new();
        let mut seen = BTreeSet::new();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| InterventionError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let invalid = |reason: String| InterventionError::Invalid { line: i + 1, reason };
            let doc: InterventionDoc = serde_json::from_str(&line).map_err(|e| invalid(e.to_string()))?;
            validate(&doc, t, &mut seen).map_err(invalid)?;
            docs.push(doc);
        }
        Ok(InterventionStore { docs })
    }

    pub fn example(t: &Taxonomy) -> Result<Self, InterventionError> {
        Self::load_jsonl(EXAMPLE_STORE.as_bytes(), t)
    }

    pub fn docs(&self) -> &[InterventionDoc] {
        &self.docs
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&InterventionDoc> {
        self.docs.iter().find(|d| d.intervention_id == id)
    }
}

fn validate(d: &InterventionDoc, t: &Taxonomy, seen: &mut BTreeSet<String>) -> Result<(), String> {
    if d.intervention_id.trim().is_empty() {
        return Err("empty id".into());
    }
    if !seen.insert(d.intervention_id.clone()) {
        return Err(format!("duplicate id `{}`", d.intervention_id));
    }
    if d.labels.is_empty() {
        return Err(format!("`{}` has no labels", d.intervention_id));
    }
    if let Some(bad) = d.labels.iter().find(|l| t.index_of(l).is_none()) {
        return Err(format!("`{}` has unknown label `{bad}`", d.intervention_id));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionMatch {
    pub intervention: InterventionDoc,
    pub score: f64,
}

/// Ranks the store by Jaccard similarity to `query` (descending, then id
/// ascending) and returns at most `top_k` matches.
pub fn match_interventions(
    query: &BTreeSet<String>,
    store: &InterventionStore,
    top_k: usize,
) -> Result<Vec<InterventionMatch>, InterventionError> {
    if query.is_empty() {
        return Err(InterventionError::NoConcerns);
    }
    if store.is_empty() {
        return Err(InterventionError::EmptyStore);
    }
    if top_k == 0 {
        return Err(InterventionError::ZeroTopK);
    }
    let mut scored: Vec<(f64, &InterventionDoc)> = store.docs.iter().map(|d| (jaccard(query, &d.labels), d)).collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.intervention_id.cmp(&b.1.intervention_id)));
    Ok(scored
        .into_iter()
        .take(top_k)
        .map(|(score, d)| InterventionMatch { intervention: d.clone(), score })
        .collect())
}

/// Label-vector form of [`match_interventions`].
pub fn match_label_vector(
    query: &LabelVector,
    t: &Taxonomy,
    store: &InterventionStore,
    top_k: usize,
) -> Result<Vec<InterventionMatch>, InterventionError> {
    let ids = t
        .label_set(query)
        .map_err(|_| InterventionError::QueryShape { expected: t.len(), actual: query.len() })?;
    match_interventions(&ids.into_iter().collect(), store, top_k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum MatchResult {
    NoConcerns,
    Matched { matches: Vec<InterventionMatch> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedQuery {
    pub prediction: Prediction,
    pub labels: Vec<String>,
    pub result: MatchResult,
}

/// Classifies `text` and matches its label set against the store.
pub fn classify_and_match<C: Classifier + ?Sized>(
    text: &str,
    model: &C,
    t: &Taxonomy,
    store: &InterventionStore,
    top_k: usize,
) -> Result<ClassifiedQuery, InterventionError> {
    let prediction = model.predict(text);
    let labels = t
        .label_set(&prediction.labels)
        .map_err(|_| InterventionError::QueryShape { expected: t.len(), actual: prediction.labels.len() })?;
    let result = match match_interventions(&labels.iter().cloned().collect(), store, top_k) {
        Ok(matches) => MatchResult::Matched { matches },
        Err(InterventionError::NoConcerns) => MatchResult::NoConcerns,
        Err(e) => return Err(e),
    };
    Ok(ClassifiedQuery { prediction, labels, result })
}
