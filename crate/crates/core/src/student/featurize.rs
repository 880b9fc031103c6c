//! Hashed word n-gram features.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TfMode {
    Binary,
    SublinearTf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeaturizerConfig {
    pub ngram_min: usize,
    pub ngram_max: usize,
    pub hash_dims: usize,
    pub hash_seed: u64,
    pub tf_mode: TfMode,
    pub idf: bool,
    pub lowercase: bool,
    /// Scale each vector to unit L2 norm.
    pub normalize: bool,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        FeaturizerConfig {
            ngram_min: 1,
            ngram_max: 2,
            hash_dims: 1 << 18,
            hash_seed: 0,
            tf_mode: TfMode::SublinearTf,
            idf: true,
            lowercase: true,
            normalize: true,
        }
    }
}

impl FeaturizerConfig {
    pub fn with_hash_bits(mut self, bits: u32) -> Self {
        self.hash_dims = 1 << bits;
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.hash_dims < 2 || !self.hash_dims.is_power_of_two() {
            return Err(format!("hash_dims must be a power of two >= 2, got {}", self.hash_dims));
        }
        if self.hash_dims > u32::MAX as usize {
            return Err("hash_dims does not fit in 32 bits".into());
        }
        if self.ngram_min == 0 || self.ngram_min > self.ngram_max {
            return Err(format!("invalid n-gram range ({}, {})", self.ngram_min, self.ngram_max));
        }
        Ok(())
    }
}

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseVector {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseVector {
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().map(|&i| i as usize).zip(self.values.iter().copied())
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| dense[i] * v).sum()
    }
}

/// Lowercased (optionally) runs of alphanumeric characters.
pub fn tokenize(text: &str, lowercase: bool) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| if lowercase { t.to_lowercase() } else { t.to_string() })
        .collect()
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over the seed bytes followed by the gram bytes.
pub fn hash_gram(gram: &str, seed: u64) -> u64 {
    let mut h = FNV_OFFSET;
    for b in seed.to_le_bytes().iter().chain(gram.as_bytes()) {
        h ^= *b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Featurizer configuration plus fitted inverse document frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Featurizer {
    pub config: FeaturizerConfig,
    #[serde(skip)]
    pub idf: Option<Vec<f64>>,
}

impl Featurizer {
    /// A featurizer that does not use IDF weights, regardless of `config.idf`.
    pub fn unfitted(config: FeaturizerConfig) -> Self {
        Featurizer { config, idf: None }
    }

    /// Fits smoothed IDF (`ln((1 + n) / (1 + df)) + 1`) over `texts` when
    /// `config.idf` is set.
    pub fn fit<S: AsRef<str>>(config: FeaturizerConfig, texts: &[S]) -> Self {
        if !config.idf {
            return Featurizer { config, idf: None };
        }
        let mut df = vec![0u32; config.hash_dims];
        for t in texts {
            for (i, _) in bucket_counts(t.as_ref(), &config) {
                df[i as usize] += 1;
            }
        }
        let n = texts.len() as f64;
        let idf = df.iter().map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0).collect();
        Featurizer { config, idf: Some(idf) }
    }

    pub fn transform(&self, text: &str) -> SparseVector {
        let counts = bucket_counts(text, &self.config);
        let mut values: Vec<f64> = counts
            .iter()
            .map(|&(i, c)| {
                let tf = match self.config.tf_mode {
                    TfMode::Binary => 1.0,
                    TfMode::SublinearTf => 1.0 + (c as f64).ln(),
                };
                match &self.idf {
                    Some(idf) => tf * idf[i as usize],
                    None => tf,
                }
            })
            .collect();
        if self.config.normalize {
            let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                values.iter_mut().for_each(|v| *v /= norm);
            }
        }
        SparseVector { indices: counts.into_iter().map(|(i, _)| i).collect(), values }
    }
}

/// Sorted `(bucket, count)` pairs for the text's n-grams.
fn bucket_counts(text: &str, cfg: &FeaturizerConfig) -> Vec<(u32, u32)> {
    let tokens = tokenize(text, cfg.lowercase);
    let mask = (cfg.hash_dims - 1) as u64;
    let mut buckets = Vec::new();
    for n in cfg.ngram_min..=cfg.ngram_max {
        for w in tokens.windows(n) {
            buckets.push((hash_gram(&w.join(" "), cfg.hash_seed) & mask) as u32);
        }
    }
    buckets.sort_unstable();
    let mut out: Vec<(u32, u32)> = Vec::new();
    for b in buckets {
        match out.last_mut() {
            Some((last, c)) if *last == b => *c += 1,
            _ => out.push((b, 1)),
        }
    }
    out
}
