//! F1-maximizing decision thresholds.

/// Threshold choice for one label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdChoice {
    pub threshold: f64,
    pub f1: f64,
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    }
}

/// Scans every candidate threshold `t` (prediction is `score >= t`) and returns
/// the one with the highest F1 against `gold`; ties go to the lowest `t`.
///
/// Candidates are the distinct values of `scores` plus `extra`, restricted by
/// `accept`. Returns `None` if no candidate is accepted.
pub fn best_threshold(
    scores: &[f64],
    gold: &[bool],
    extra: &[f64],
    accept: impl Fn(f64) -> bool,
) -> Option<ThresholdChoice> {
    assert_eq!(scores.len(), gold.len(), "scores and gold must align");
    let total_pos = gold.iter().filter(|g| **g).count();

    // descending by score; walking down the list lowers the threshold
    let mut ranked: Vec<(f64, bool)> = scores.iter().copied().zip(gold.iter().copied()).collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut candidates: Vec<f64> = scores.iter().chain(extra).copied().filter(|t| accept(*t)).collect();
    candidates.sort_by(|a, b| b.total_cmp(a));
    candidates.dedup();

    let mut best: Option<ThresholdChoice> = None;
    let mut k = 0;
    let (mut tp, mut fp) = (0usize, 0usize);
    for t in candidates {
        while k < ranked.len() && ranked[k].0 >= t {
            if ranked[k].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        let score = f1(tp, fp, total_pos - tp);
        // candidates are visited high to low, so `>=` keeps the lowest on ties
        if best.is_none_or(|b| score >= b.f1) {
            best = Some(ThresholdChoice { threshold: t, f1: score });
        }
    }
    best
}
