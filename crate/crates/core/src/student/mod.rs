//! Lightweight student classifiers distilled from teacher labels: hashed
//! n-gram features feeding one logistic head per label, trained with
//! class-imbalance weighted BCE and per-label decision thresholds.

pub mod featurize;
pub mod keyword;
mod model;
pub mod thresholds;
pub mod train;
pub mod weighting;

use thiserror::Error;

pub use featurize::{Featurizer, FeaturizerConfig, SparseVector, TfMode};
pub use keyword::{keyword_relevance, DEFAULT_VACCINE_KEYWORDS};
pub use model::{
    Classifier, FitSpec, Prediction, StudentModel, Task, ThresholdReport, TrainingMeta, MODEL_FORMAT_VERSION,
    RELEVANCE_LABEL,
};
pub use train::{TrainParams, TrainReport};
pub use weighting::{class_weights, ClassWeights, WeightingScheme};

#[derive(Debug, Error)]
pub enum StudentError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("training diverged at epoch {epoch} (loss {loss}); lower the learning rate (currently {lr})")]
    Diverged { epoch: usize, loss: f64, lr: f64 },
    #[error("model file format error: {0}")]
    Format(String),
    #[error("model file checksum mismatch")]
    Integrity,
    #[error("model was trained for taxonomy `{model}` but `{active}` is active")]
    VersionMismatch { model: String, active: String },
}
