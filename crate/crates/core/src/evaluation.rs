//! Classification metrics: binary accuracy/precision/recall/F1 with a
//! confusion matrix, and per-label multilabel reports with micro, macro,
//! weighted and samples averages.
//!
//! Division by zero yields 0 and sets a flag, so a label with no support
//! reports 0.00 everywhere.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::{self, Execution};
use crate::student::Classifier;
use crate::taxonomy::LabelVector;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("no samples to evaluate")]
    Empty,
    #[error("shape mismatch: {0}")]
    Shape(String),
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_from_pr(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn from_pairs(pred: &[bool], gold: &[bool]) -> Confusion {
        let mut c = Confusion::default();
        for (&p, &g) in pred.iter().zip(gold) {
            match (p, g) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn add(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: Confusion,
    /// Set when precision had no predicted positives to divide by.
    pub precision_undefined: bool,
    /// Set when recall had no gold positives to divide by.
    pub recall_undefined: bool,
}

impl BinaryMetrics {
    pub fn from_confusion(c: Confusion) -> BinaryMetrics {
        let (accuracy, _) = ratio(c.tp + c.tn, c.total());
        let (precision, precision_undefined) = ratio(c.tp, c.tp + c.fp);
        let (recall, recall_undefined) = ratio(c.tp, c.tp + c.fn_);
        BinaryMetrics {
            accuracy,
            precision,
            recall,
            f1: f1_from_pr(precision, recall),
            confusion: c,
            precision_undefined,
            recall_undefined,
        }
    }
}

pub fn binary_metrics(pred: &[bool], gold: &[bool]) -> Result<BinaryMetrics, EvalError> {
    if pred.len() != gold.len() {
        return Err(EvalError::Shape(format!("{} predictions vs {} gold labels", pred.len(), gold.len())));
    }
    if pred.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(BinaryMetrics::from_confusion(Confusion::from_pairs(pred, gold)))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    pub confusion: Confusion,
}

/// Whether macro averages include labels with zero gold support.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MacroPolicy {
    #[default]
    IncludeZeroSupport,
    ExcludeZeroSupport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultilabelReport {
    pub per_label: Vec<LabelMetrics>,
    pub micro: Averages,
    #[serde(rename = "macro")]
    pub macro_avg: Averages,
    pub weighted: Averages,
    pub samples: Averages,
    pub total_support: u64,
    pub num_samples: usize,
    /// Labels for which some metric hit a zero division.
    pub zero_division_labels: Vec<String>,
}

pub fn multilabel_report(
    pred: &[LabelVector],
    gold: &[LabelVector],
    label_ids: &[String],
) -> Result<MultilabelReport, EvalError> {
    multilabel_report_with(pred, gold, label_ids, MacroPolicy::default())
}

pub fn multilabel_report_with(
    pred: &[LabelVector],
    gold: &[LabelVector],
    label_ids: &[String],
    policy: MacroPolicy,
) -> Result<MultilabelReport, EvalError> {
    if pred.len() != gold.len() {
        return Err(EvalError::Shape(format!("{} predictions vs {} gold rows", pred.len(), gold.len())));
    }
    if pred.is_empty() {
        return Err(EvalError::Empty);
    }
    let k = label_ids.len();
    if let Some(v) = pred.iter().chain(gold).find(|v| v.len() != k) {
        return Err(EvalError::Shape(format!("label vector of length {} (expected {k})", v.len())));
    }

    let mut confusions = vec![Confusion::default(); k];
    let mut sample_p = 0.0;
    let mut sample_r = 0.0;
    let mut sample_f = 0.0;
    for (p, g) in pred.iter().zip(gold) {
        let (mut inter, mut np, mut ng) = (0u64, 0u64, 0u64);
        for (c, cm) in confusions.iter_mut().enumerate() {
            let (pc, gc) = (p.get(c), g.get(c));
            match (pc, gc) {
                (true, true) => cm.tp += 1,
                (true, false) => cm.fp += 1,
                (false, true) => cm.fn_ += 1,
                (false, false) => cm.tn += 1,
            }
            inter += (pc && gc) as u64;
            np += pc as u64;
            ng += gc as u64;
        }
        sample_p += ratio(inter, np).0;
        sample_r += ratio(inter, ng).0;
        sample_f += ratio(2 * inter, np + ng).0;
    }
    let n = pred.len() as f64;

    let mut zero_division_labels = Vec::new();
    let per_label: Vec<LabelMetrics> = confusions
        .iter()
        .zip(label_ids)
        .map(|(cm, id)| {
            let (precision, pu) = ratio(cm.tp, cm.tp + cm.fp);
            let (recall, ru) = ratio(cm.tp, cm.tp + cm.fn_);
            if pu || ru {
                zero_division_labels.push(id.clone());
            }
            LabelMetrics {
                label: id.clone(),
                precision,
                recall,
                f1: ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn_).0,
                support: cm.tp + cm.fn_,
                confusion: *cm,
            }
        })
        .collect();

    let mut pooled = Confusion::default();
    confusions.iter().for_each(|c| pooled.add(c));
    let (mp, _) = ratio(pooled.tp, pooled.tp + pooled.fp);
    let (mr, _) = ratio(pooled.tp, pooled.tp + pooled.fn_);
    let micro = Averages {
        precision: mp,
        recall: mr,
        f1: ratio(2 * pooled.tp, 2 * pooled.tp + pooled.fp + pooled.fn_).0,
    };

    let included: Vec<&LabelMetrics> = per_label
        .iter()
        .filter(|m| policy == MacroPolicy::IncludeZeroSupport || m.support > 0)
        .collect();
    let mean = |f: fn(&LabelMetrics) -> f64| {
        if included.is_empty() {
            0.0
        } else {
            included.iter().map(|m| f(m)).sum::<f64>() / included.len() as f64
        }
    };
    let macro_avg = Averages { precision: mean(|m| m.precision), recall: mean(|m| m.recall), f1: mean(|m| m.f1) };

    let total_support: u64 = per_label.iter().map(|m| m.support).sum();
    let wmean = |f: fn(&LabelMetrics) -> f64| {
        if total_support == 0 {
            0.0
        } else {
            per_label.iter().map(|m| f(m) * m.support as f64).sum::<f64>() / total_support as f64
        }
    };
    let weighted =
        Averages { precision: wmean(|m| m.precision), recall: wmean(|m| m.recall), f1: wmean(|m| m.f1) };

    Ok(MultilabelReport {
        per_label,
        micro,
        macro_avg,
        weighted,
        samples: Averages { precision: sample_p / n, recall: sample_r / n, f1: sample_f / n },
        total_support,
        num_samples: pred.len(),
        zero_division_labels,
    })
}

impl MultilabelReport {
    /// CSV with one row per label followed by the four average rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,precision,recall,f1,support\n");
        for m in &self.per_label {
            let _ = writeln!(out, "{},{},{},{},{}", m.label, m.precision, m.recall, m.f1, m.support);
        }
        for (name, a) in self.averages() {
            let _ = writeln!(out, "{name},{},{},{},{}", a.precision, a.recall, a.f1, self.total_support);
        }
        out
    }

    fn averages(&self) -> [(&'static str, Averages); 4] {
        [
            ("micro avg", self.micro),
            ("macro avg", self.macro_avg),
            ("weighted avg", self.weighted),
            ("samples avg", self.samples),
        ]
    }

    /// Fixed-width text table with two-decimal metrics.
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<14}{:>10}{:>10}{:>10}{:>10}\n", "label", "precision", "recall", "f1-score", "support");
        for m in &self.per_label {
            let _ = writeln!(
                out,
                "{:<14}{:>10.2}{:>10.2}{:>10.2}{:>10}",
                m.label, m.precision, m.recall, m.f1, m.support
            );
        }
        out.push('\n');
        for (name, a) in self.averages() {
            let _ = writeln!(
                out,
                "{:<14}{:>10.2}{:>10.2}{:>10.2}{:>10}",
                name, a.precision, a.recall, a.f1, self.total_support
            );
        }
        out
    }
}

/// Predicts `texts` with `clf` and scores against `gold`.
pub fn evaluate_multilabel<C: Classifier + ?Sized>(
    clf: &C,
    texts: &[&str],
    gold: &[LabelVector],
    exec: Execution,
) -> Result<MultilabelReport, EvalError> {
    let pred: Vec<LabelVector> = clf.predict_batch(texts, exec).into_iter().map(|p| p.labels).collect();
    multilabel_report(&pred, gold, clf.label_ids())
}

/// Binary relevance evaluation of a single-label classifier.
pub fn evaluate_relevance<C: Classifier + ?Sized>(
    clf: &C,
    texts: &[&str],
    gold: &[bool],
    exec: Execution,
) -> Result<BinaryMetrics, EvalError> {
    let pred: Vec<bool> = clf.predict_batch(texts, exec).iter().map(|p| p.labels.get(0)).collect();
    binary_metrics(&pred, gold)
}

/// Relevance read off a multilabel classifier: relevant iff any label fires.
pub fn evaluate_multilabel_as_relevance<C: Classifier + ?Sized>(
    clf: &C,
    texts: &[&str],
    gold: &[bool],
    exec: Execution,
) -> Result<BinaryMetrics, EvalError> {
    let pred: Vec<bool> = par::map(texts, exec, |t| clf.predict(t).labels.any());
    binary_metrics(&pred, gold)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("L{i}")).collect()
    }

    fn lv(bits: &[u8]) -> LabelVector {
        LabelVector::from_bits(bits).unwrap()
    }

    #[test]
    fn harmonic_mean_of_reported_rows() {
        assert!((f1_from_pr(0.981, 0.969) - 0.975).abs() < 0.001);
        assert!((f1_from_pr(0.969, 0.960) - 0.964).abs() < 0.001);
    }

    #[test]
    fn identity_is_perfect() {
        let gold = [true, false, true, true];
        let m = binary_metrics(&gold, &gold).unwrap();
        assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (1.0, 1.0, 1.0, 1.0));
        assert_eq!(m.confusion.total(), 4);
    }

    #[test]
    fn all_negative_predictions_flag_precision() {
        let m = binary_metrics(&[false, false], &[true, false]).unwrap();
        assert_eq!(m.precision, 0.0);
        assert!(m.precision_undefined);
        assert_eq!(m.recall, 0.0);
        assert!(!m.recall_undefined);
    }

    #[test]
    fn binary_errors() {
        assert_eq!(binary_metrics(&[], &[]).unwrap_err(), EvalError::Empty);
        assert!(matches!(binary_metrics(&[true], &[]), Err(EvalError::Shape(_))));
    }

    #[test]
    fn half_of_two_gold_labels() {
        let r = multilabel_report(&[lv(&[1, 0, 0])], &[lv(&[1, 1, 0])], &ids(3)).unwrap();
        assert_eq!(r.samples.precision, 1.0);
        assert_eq!(r.samples.recall, 0.5);
        assert!((r.samples.f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_multilabel() {
        let gold = vec![lv(&[1, 0, 1]), lv(&[0, 1, 1]), lv(&[1, 0, 1])];
        let r = multilabel_report(&gold, &gold, &ids(3)).unwrap();
        for a in [r.micro, r.macro_avg, r.weighted, r.samples] {
            assert_eq!(a, Averages { precision: 1.0, recall: 1.0, f1: 1.0 });
        }
        assert!(r.per_label.iter().all(|m| m.f1 == 1.0));
        assert_eq!(r.total_support, 6);
    }

    #[test]
    fn zero_support_label_reports_zeros_and_depresses_macro() {
        let gold = vec![lv(&[1, 0]), lv(&[1, 0])];
        let r = multilabel_report(&gold, &gold, &ids(2)).unwrap();
        assert_eq!(r.per_label[1].support, 0);
        assert_eq!(r.per_label[1].f1, 0.0);
        assert_eq!(r.zero_division_labels, ["L1"]);
        assert_eq!(r.macro_avg.f1, 0.5);
        let r2 = multilabel_report_with(&gold, &gold, &ids(2), MacroPolicy::ExcludeZeroSupport).unwrap();
        assert_eq!(r2.macro_avg.f1, 1.0);
    }

    #[test]
    fn csv_has_label_and_average_rows() {
        let gold = vec![lv(&[1, 0]), lv(&[0, 1])];
        let csv = multilabel_report(&gold, &gold, &ids(2)).unwrap().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + 2 + 4);
        assert!(lines[6].starts_with("samples avg,"));
    }
}
