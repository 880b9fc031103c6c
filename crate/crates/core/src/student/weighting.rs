//! Positive-class loss weights for imbalanced labels.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightingScheme {
    /// Unweighted loss.
    Baseline,
    /// `min(neg / pos, k)`; clamped from above only.
    Clamp { k: f64 },
    /// `neg / pos`.
    NoClamp,
    /// `ln(1 + neg / pos)`.
    Log1p,
}

impl WeightingScheme {
    pub fn weight(&self, pos: u64, neg: u64) -> f64 {
        if pos == 0 {
            return 1.0;
        }
        let raw = neg as f64 / pos as f64;
        match *self {
            WeightingScheme::Baseline => 1.0,
            WeightingScheme::Clamp { k } => raw.min(k),
            WeightingScheme::NoClamp => raw,
            WeightingScheme::Log1p => raw.ln_1p(),
        }
    }
}

impl fmt::Display for WeightingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightingScheme::Baseline => write!(f, "baseline"),
            WeightingScheme::Clamp { k } => write!(f, "clamp{k}"),
            WeightingScheme::NoClamp => write!(f, "no_clamp"),
            WeightingScheme::Log1p => write!(f, "log1p"),
        }
    }
}

impl FromStr for WeightingScheme {
    type Err = String;

    /// Accepts `baseline`, `no_clamp`, `log1p`, `clamp3`, `clamp:30`, `clamp=100`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "baseline" | "none" => return Ok(WeightingScheme::Baseline),
            "no_clamp" | "noclamp" | "no-clamp" => return Ok(WeightingScheme::NoClamp),
            "log1p" => return Ok(WeightingScheme::Log1p),
            _ => {}
        }
        let k = s
            .strip_prefix("clamp")
            .map(|r| r.trim_start_matches([':', '=', '_', '-']))
            .ok_or_else(|| format!("unknown weighting scheme `{s}`"))?;
        let k: f64 = k.parse().map_err(|_| format!("bad clamp value in `{s}`"))?;
        if !(k > 0.0 && k.is_finite()) {
            return Err(format!("clamp value must be positive, got {k}"));
        }
        Ok(WeightingScheme::Clamp { k })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub weights: Vec<f64>,
    /// Labels with no positive examples; their weight is 1.
    pub degenerate: Vec<bool>,
}

/// Per-label positive weights from positive/negative counts.
pub fn class_weights(
    pos_counts: &[u64],
    neg_counts: &[u64],
    scheme: WeightingScheme,
) -> Result<ClassWeights, String> {
    if pos_counts.len() != neg_counts.len() {
        return Err(format!(
            "count length mismatch: {} positive vs {} negative",
            pos_counts.len(),
            neg_counts.len()
        ));
    }
    let weights = pos_counts.iter().zip(neg_counts).map(|(&p, &n)| scheme.weight(p, n)).collect();
    let degenerate = pos_counts.iter().map(|&p| p == 0).collect();
    Ok(ClassWeights { weights, degenerate })
}
