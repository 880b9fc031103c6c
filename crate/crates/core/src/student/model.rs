use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::featurize::{Featurizer, FeaturizerConfig, SparseVector};
use super::thresholds::best_threshold;
use super::train::{sigmoid, train, LinearHeads, TrainParams, TrainReport};
use super::weighting::WeightingScheme;
use super::StudentError;
use crate::par::{self, Execution};
use crate::taxonomy::{LabelVector, Taxonomy};

pub const MODEL_MAGIC: &[u8; 8] = b"CSTUDENT";
pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const RELEVANCE_LABEL: &str = "relevant";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Relevance,
    Multilabel,
}

impl FromStr for Task {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "relevance" => Ok(Task::Relevance),
            "multilabel" => Ok(Task::Multilabel),
            _ => Err(format!("unknown task `{s}` (expected relevance or multilabel)")),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Relevance => "relevance",
            Task::Multilabel => "multilabel",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub scheme: WeightingScheme,
    pub params: TrainParams,
    pub train_size: usize,
}

/// Per-label scores and thresholded labels for one text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub scores: Vec<f64>,
    pub labels: LabelVector,
}

/// Anything that maps text to independent per-label scores and decisions.
pub trait Classifier: Send + Sync {
    fn label_ids(&self) -> &[String];
    fn taxonomy_version(&self) -> &str;
    fn predict(&self, text: &str) -> Prediction;

    fn predict_batch(&self, texts: &[&str], exec: Execution) -> Vec<Prediction> {
        par::map(texts, exec, |t| self.predict(t))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudentModel {
    pub task: Task,
    pub label_ids: Vec<String>,
    pub taxonomy_version: String,
    pub featurizer: Featurizer,
    pub heads: LinearHeads,
    pub thresholds: Vec<f64>,
    pub training_meta: TrainingMeta,
}

/// Everything needed to fit a student besides the data.
#[derive(Debug, Clone)]
pub struct FitSpec {
    pub task: Task,
    pub label_ids: Vec<String>,
    pub taxonomy_version: String,
    pub featurizer: FeaturizerConfig,
    pub scheme: WeightingScheme,
    pub params: TrainParams,
    pub exec: Execution,
}

impl FitSpec {
    pub fn multilabel(taxonomy: &Taxonomy) -> Self {
        FitSpec {
            task: Task::Multilabel,
            label_ids: taxonomy.ids().map(str::to_string).collect(),
            taxonomy_version: taxonomy.version().to_string(),
            featurizer: FeaturizerConfig::default(),
            scheme: WeightingScheme::Log1p,
            params: TrainParams::default(),
            exec: Execution::default(),
        }
    }

    pub fn relevance(taxonomy: &Taxonomy) -> Self {
        FitSpec {
            task: Task::Relevance,
            label_ids: vec![RELEVANCE_LABEL.to_string()],
            scheme: WeightingScheme::Baseline,
            ..FitSpec::multilabel(taxonomy)
        }
    }
}

/// Labels whose threshold could not be tuned (no validation positives).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub untuned_labels: Vec<String>,
    pub f1_at_threshold: Vec<f64>,
}

impl StudentModel {
    pub fn num_labels(&self) -> usize {
        self.label_ids.len()
    }

    /// Fits featurizer and heads on `texts`/`labels`; thresholds start at 0.5.
    pub fn fit<S: AsRef<str> + Sync>(
        spec: &FitSpec,
        texts: &[S],
        labels: &[LabelVector],
    ) -> Result<(StudentModel, TrainReport), StudentError> {
        spec.featurizer.validate().map_err(StudentError::Params)?;
        if texts.len() != labels.len() {
            return Err(StudentError::Shape(format!("{} texts vs {} label rows", texts.len(), labels.len())));
        }
        let featurizer = Featurizer::fit(spec.featurizer.clone(), texts);
        let xs: Vec<SparseVector> = par::map(texts, spec.exec, |t| featurizer.transform(t.as_ref()));
        let ys: Vec<Vec<bool>> = labels.iter().map(|l| l.as_slice().to_vec()).collect();
        let num_labels = spec.label_ids.len();
        let (heads, report) =
            train(&xs, &ys, num_labels, spec.featurizer.hash_dims, spec.scheme, &spec.params)?;
        let model = StudentModel {
            task: spec.task,
            label_ids: spec.label_ids.clone(),
            taxonomy_version: spec.taxonomy_version.clone(),
            featurizer,
            heads,
            thresholds: vec![0.5; num_labels],
            training_meta: TrainingMeta { scheme: spec.scheme, params: spec.params, train_size: texts.len() },
        };
        Ok((model, report))
    }

    pub fn scores(&self, text: &str) -> Vec<f64> {
        let x = self.featurizer.transform(text);
        self.heads.scores(&x).into_iter().map(sigmoid).collect()
    }

    /// Rejects a model trained against a different taxonomy version.
    pub fn check_taxonomy(&self, taxonomy: &Taxonomy) -> Result<(), StudentError> {
        if self.task == Task::Multilabel && self.taxonomy_version != taxonomy.version() {
            return Err(StudentError::VersionMismatch {
                model: self.taxonomy_version.clone(),
                active: taxonomy.version().to_string(),
            });
        }
        Ok(())
    }

    /// Per label, picks the threshold in (0, 1) maximizing validation F1 over
    /// the distinct predicted probabilities plus 0.5 (ties go low). Labels with
    /// no validation positives keep their threshold and are reported.
    pub fn select_thresholds<S: AsRef<str> + Sync>(
        mut self,
        texts: &[S],
        gold: &[LabelVector],
        exec: Execution,
    ) -> Result<(StudentModel, ThresholdReport), StudentError> {
        if texts.is_empty() || texts.len() != gold.len() {
            return Err(StudentError::Shape(format!("{} texts vs {} gold rows", texts.len(), gold.len())));
        }
        let scores: Vec<Vec<f64>> = par::map(texts, exec, |t| self.scores(t.as_ref()));
        let mut report = ThresholdReport::default();
        for c in 0..self.num_labels() {
            let col: Vec<f64> = scores.iter().map(|s| s[c]).collect();
            let g: Vec<bool> = gold.iter().map(|v| v.get(c)).collect();
            if !g.iter().any(|x| *x) {
                report.untuned_labels.push(self.label_ids[c].clone());
                report.f1_at_threshold.push(0.0);
                continue;
            }
            let choice = best_threshold(&col, &g, &[0.5], |t| t > 0.0 && t < 1.0)
                .expect("0.5 is always a candidate");
            self.thresholds[c] = choice.threshold;
            report.f1_at_threshold.push(choice.f1);
        }
        Ok((self, report))
    }

    /// Holds out a seeded `val_fraction` of the rows, fits on the rest and
    /// tunes thresholds on the held-out rows. With `val_fraction == 0` every
    /// row is used for fitting and thresholds stay at 0.5.
    pub fn fit_with_validation<S: AsRef<str> + Sync>(
        spec: &FitSpec,
        texts: &[S],
        labels: &[LabelVector],
        val_fraction: f64,
    ) -> Result<(StudentModel, TrainReport, ThresholdReport), StudentError> {
        if !(0.0..1.0).contains(&val_fraction) {
            return Err(StudentError::Params(format!("validation fraction {val_fraction} not in [0, 1)")));
        }
        if texts.len() != labels.len() {
            return Err(StudentError::Shape(format!("{} texts vs {} label rows", texts.len(), labels.len())));
        }
        let mut order: Vec<usize> = (0..texts.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.params.seed ^ 0x5eed));
        let n_val = (texts.len() as f64 * val_fraction).round() as usize;
        let (val, fit) = order.split_at(n_val);
        let pick_t = |ix: &[usize]| ix.iter().map(|&i| texts[i].as_ref()).collect::<Vec<&str>>();
        let pick_l = |ix: &[usize]| ix.iter().map(|&i| labels[i].clone()).collect::<Vec<_>>();
        let (model, report) = StudentModel::fit(spec, &pick_t(fit), &pick_l(fit))?;
        if val.is_empty() {
            let untuned = model.label_ids.clone();
            let thr = ThresholdReport { f1_at_threshold: vec![0.0; untuned.len()], untuned_labels: untuned };
            return Ok((model, report, thr));
        }
        let (model, thr) = model.select_thresholds(&pick_t(val), &pick_l(val), spec.exec)?;
        Ok((model, report, thr))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = ModelHeader {
            format_version: MODEL_FORMAT_VERSION,
            taxonomy_version: self.taxonomy_version.clone(),
            hash_seed: self.featurizer.config.hash_seed,
            hash_dims: self.heads.dims,
            num_labels: self.num_labels(),
            task: self.task,
            label_ids: self.label_ids.clone(),
            featurizer: self.featurizer.config.clone(),
            has_idf: self.featurizer.idf.is_some(),
            biases: self.heads.biases.clone(),
            thresholds: self.thresholds.clone(),
            training_meta: self.training_meta.clone(),
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let floats = self.featurizer.idf.as_deref().unwrap_or(&[]).len() + self.heads.weights.len();
        let mut out = Vec::with_capacity(16 + header.len() + floats * 8 + 32);
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for v in self.featurizer.idf.iter().flatten().chain(&self.heads.weights) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<StudentModel, StudentError> {
        use StudentError::Format;
        if bytes.len() < 16 + 32 {
            return Err(Format("file too short".into()));
        }
        if &bytes[..8] != MODEL_MAGIC {
            return Err(Format("not a student model file (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != MODEL_FORMAT_VERSION {
            return Err(Format(format!("unsupported model format version {version}")));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        let header_len = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let header_end = 16usize.checked_add(header_len).filter(|&e| e <= body.len());
        let Some(header_end) = header_end else {
            return Err(Format("truncated header".into()));
        };
        let header: ModelHeader = serde_json::from_slice(&bytes[16..header_end])
            .map_err(|e| Format(format!("bad header: {e}")))?;
        let dims = header.hash_dims;
        let n_idf = if header.has_idf { dims } else { 0 };
        let expected = header_end + 8 * (n_idf + header.num_labels * dims);
        if body.len() != expected {
            return Err(Format(format!("truncated body: {} bytes, expected {expected}", body.len())));
        }
        if Sha256::digest(body).as_slice() != digest {
            return Err(StudentError::Integrity);
        }
        if header.label_ids.len() != header.num_labels
            || header.biases.len() != header.num_labels
            || header.thresholds.len() != header.num_labels
            || header.featurizer.hash_dims != dims
        {
            return Err(Format("inconsistent header".into()));
        }
        let mut floats = body[header_end..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let idf = header.has_idf.then(|| floats.by_ref().take(dims).collect());
        let weights: Vec<f64> = floats.collect();
        Ok(StudentModel {
            task: header.task,
            label_ids: header.label_ids,
            taxonomy_version: header.taxonomy_version,
            featurizer: Featurizer { config: header.featurizer, idf },
            heads: LinearHeads { num_labels: header.num_labels, dims, weights, biases: header.biases },
            thresholds: header.thresholds,
            training_meta: header.training_meta,
        })
    }

    /// Loads a model and checks it against the active taxonomy.
    pub fn load_for(bytes: &[u8], taxonomy: &Taxonomy) -> Result<StudentModel, StudentError> {
        let model = StudentModel::from_bytes(bytes)?;
        model.check_taxonomy(taxonomy)?;
        Ok(model)
    }
}

impl Classifier for StudentModel {
    fn label_ids(&self) -> &[String] {
        &self.label_ids
    }

    fn taxonomy_version(&self) -> &str {
        &self.taxonomy_version
    }

    fn predict(&self, text: &str) -> Prediction {
        let scores = self.scores(text);
        let labels = scores.iter().zip(&self.thresholds).map(|(s, t)| s >= t).collect();
        Prediction { scores, labels: LabelVector::from_bools(labels) }
    }
}

/// Serialized model header. The byte layout of a model file is:
///
/// ```text
/// [0..8)    magic "CSTUDENT"
/// [8..12)   format version, u32 little-endian
/// [12..16)  header length H, u32 little-endian
/// [16..16+H) this header as UTF-8 JSON
/// then      hash_dims f64 IDF weights (only if has_idf), little-endian
/// then      num_labels rows of hash_dims f64 weights, little-endian
/// last 32   SHA-256 of every preceding byte
/// ```
#[derive(Debug, Serialize, Deserialize)]
struct ModelHeader {
    format_version: u32,
    taxonomy_version: String,
    hash_seed: u64,
    hash_dims: usize,
    num_labels: usize,
    task: Task,
    label_ids: Vec<String>,
    featurizer: FeaturizerConfig,
    has_idf: bool,
    biases: Vec<f64>,
    thresholds: Vec<f64>,
    training_meta: TrainingMeta,
}
