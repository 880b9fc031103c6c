//! Individual prompting: one request per (passage, node), sampled repeatedly,
//! turned into positive fractions and thresholded against gold labels.

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::{
    ask, build_multilabel_prompt, cache_key, parse_single_label_response, Counters, PromptMode, ResponseCache,
    Teacher, TeacherConfig, TeacherError,
};
use crate::ingest::Passage;
use crate::par;
use crate::student::thresholds::best_threshold;
use crate::taxonomy::{LabelVector, Taxonomy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualSampling {
    /// `fractions[p][n]` is the share of samples answering 1 for node `n` on passage `p`.
    pub fractions: Vec<Vec<f64>>,
    pub samples: u32,
    pub teacher_calls: usize,
    pub cache_hits: usize,
    /// Samples with no parseable answer after retries; counted as 0.
    pub invalid_samples: usize,
}

/// Asks every node separately `samples` times per passage.
pub fn sample_individual(
    passages: &[Passage],
    t: &Taxonomy,
    samples: u32,
    teacher: &dyn Teacher,
    cache: &dyn ResponseCache,
    cfg: &TeacherConfig,
) -> Result<IndividualSampling, TeacherError> {
    cfg.validate()?;
    if samples == 0 {
        return Err(TeacherError::InvalidInput("samples per label must be at least 1".into()));
    }
    let ids: Vec<&str> = t.ids().collect();
    let prompts: Vec<Vec<String>> = passages
        .iter()
        .map(|p| {
            ids.iter()
                .map(|id| build_multilabel_prompt(&p.text, t, &PromptMode::Individual(id.to_string())))
                .collect::<Result<_, _>>()
        })
        .collect::<Result<_, _>>()?;

    let k = ids.len();
    let s = samples as usize;
    let units: Vec<usize> = (0..passages.len() * k * s).collect();
    let counters = Counters { hits: AtomicUsize::new(0), calls: AtomicUsize::new(0) };
    let invalid = AtomicUsize::new(0);
    let model = teacher.model_name();
    let answers: Vec<bool> = par::map_bounded(&units, cfg.max_parallel, |&u| {
        let (p, rem) = (u / (k * s), u % (k * s));
        let (n, sample) = (rem / s, (rem % s) as u32);
        let prompt = &prompts[p][n];
        let key = cache_key(prompt, model, Some(sample));
        let a = ask(prompt, &key, teacher, cache, cfg, &counters, |r| parse_single_label_response(r, ids[n]));
        a.value.unwrap_or_else(|| {
            invalid.fetch_add(1, Ordering::Relaxed);
            false
        })
    });

    let fractions = answers
        .chunks(k * s)
        .map(|row| row.chunks(s).map(|c| c.iter().filter(|b| **b).count() as f64 / s as f64).collect())
        .collect();
    Ok(IndividualSampling {
        fractions,
        samples,
        teacher_calls: counters.calls.load(Ordering::Relaxed),
        cache_hits: counters.hits.load(Ordering::Relaxed),
        invalid_samples: invalid.load(Ordering::Relaxed),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualThresholds {
    pub thresholds: Vec<f64>,
    /// F1 on gold at the chosen threshold.
    pub f1: Vec<f64>,
    /// Nodes without gold positives; their threshold is 0.5.
    pub defaulted: Vec<bool>,
}

/// Per-node threshold on the positive fraction (predict positive when
/// `fraction >= threshold`) that maximises F1 on `gold`. Candidates are the
/// observed fractions; ties go to the lower threshold.
pub fn individual_threshold(
    samples_per_label: u32,
    fractions: &[Vec<f64>],
    gold: &[LabelVector],
) -> Result<IndividualThresholds, TeacherError> {
    if samples_per_label == 0 {
        return Err(TeacherError::InvalidInput("samples per label must be at least 1".into()));
    }
    if gold.is_empty() {
        return Err(TeacherError::InvalidInput("gold validation set is empty".into()));
    }
    if fractions.len() != gold.len() {
        return Err(TeacherError::InvalidInput(format!(
            "{} fraction rows vs {} gold rows",
            fractions.len(),
            gold.len()
        )));
    }
    let k = gold[0].len();
    if fractions.iter().any(|r| r.len() != k) || gold.iter().any(|g| g.len() != k) {
        return Err(TeacherError::InvalidInput("rows have inconsistent label counts".into()));
    }
    if fractions.iter().flatten().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(TeacherError::InvalidInput("fractions must lie in [0, 1]".into()));
    }

    let mut out = IndividualThresholds { thresholds: vec![], f1: vec![], defaulted: vec![] };
    for n in 0..k {
        let scores: Vec<f64> = fractions.iter().map(|r| r[n]).collect();
        let g: Vec<bool> = gold.iter().map(|v| v.get(n)).collect();
        if !g.iter().any(|b| *b) {
            out.thresholds.push(0.5);
            out.f1.push(0.0);
            out.defaulted.push(true);
            continue;
        }
        let choice = best_threshold(&scores, &g, &[], |_| true).expect("non-empty candidate set");
        out.thresholds.push(choice.threshold);
        out.f1.push(choice.f1);
        out.defaulted.push(false);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::ingest_text;
    use crate::teacher::mock::FnTeacher;
    use crate::teacher::{individual_node_from_prompt, MemoryCache};
    use proptest::prelude::*;

    fn col(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|x| vec![*x]).collect()
    }

    fn gold(bits: &[u8]) -> Vec<LabelVector> {
        bits.iter().map(|b| LabelVector::from_bits(&[*b]).unwrap()).collect()
    }

    #[test]
    fn separable() {
        let r = individual_threshold(10, &col(&[0.1, 0.2, 0.7, 0.9, 0.8, 0.3]), &gold(&[0, 0, 1, 1, 1, 0])).unwrap();
        assert_eq!(r.thresholds, [0.7]);
        assert_eq!(r.f1, [1.0]);
    }

    #[test]
    fn identical_fractions() {
        let r = individual_threshold(10, &col(&[0.4; 5]), &gold(&[0, 1, 0, 1, 0])).unwrap();
        assert_eq!(r.thresholds, [0.4]);
    }

    #[test]
    fn no_gold_positive_defaults() {
        let r = individual_threshold(10, &col(&[0.4, 0.6]), &gold(&[0, 0])).unwrap();
        assert_eq!(r.thresholds, [0.5]);
        assert_eq!(r.defaulted, [true]);
        assert!(individual_threshold(10, &[], &[]).is_err());
        assert!(individual_threshold(0, &col(&[0.1]), &gold(&[1])).is_err());
    }

    fn f1_at(fr: &[f64], g: &[bool], t: f64) -> f64 {
        let tp = fr.iter().zip(g).filter(|(f, g)| **f >= t && **g).count() as f64;
        let fp = fr.iter().zip(g).filter(|(f, g)| **f >= t && !**g).count() as f64;
        let fn_ = fr.iter().zip(g).filter(|(f, g)| **f < t && **g).count() as f64;
        if tp == 0.0 {
            0.0
        } else {
            2.0 * tp / (2.0 * tp + fp + fn_)
        }
    }

    proptest! {
        #[test]
        fn matches_exhaustive_grid(
            counts in proptest::collection::vec(0u32..=20, 50),
            bits in proptest::collection::vec(any::<bool>(), 50),
        ) {
            prop_assume!(bits.iter().any(|b| *b));
            let fr: Vec<f64> = counts.iter().map(|c| *c as f64 / 20.0).collect();
            let g: Vec<LabelVector> = bits.iter().map(|b| LabelVector::from_bools(vec![*b])).collect();
            let r = individual_threshold(20, &col(&fr), &g).unwrap();
            // oracle: every multiple of 1/20 that was observed
            let mut best = (-1.0, 0.0);
            for step in 0..=20 {
                let t = step as f64 / 20.0;
                if !fr.contains(&t) { continue; }
                let f = f1_at(&fr, &bits, t);
                if f > best.0 { best = (f, t); }
            }
            prop_assert!((r.f1[0] - best.0).abs() < 1e-12);
            prop_assert_eq!(r.thresholds[0], best.1);
        }
    }

    #[test]
    fn sampling_counts_positive_share() {
        let t = Taxonomy::default_vaccine();
        let ps = ingest_text("one passage", Default::default()).unwrap().passages;
        let calls = AtomicUsize::new(0);
        // node 3 answered 1 on every other call, everything else 0
        let teacher = FnTeacher::new("mock", move |prompt| {
            let id = individual_node_from_prompt(prompt).unwrap();
            let c = calls.fetch_add(1, Ordering::SeqCst);
            Ok(format!("VaxConcerns_{id}: {}", u8::from(id == "3" && c.is_multiple_of(2))))
        });
        let cfg = TeacherConfig { max_parallel: 1, ..TeacherConfig::default() };
        let cache = MemoryCache::new();
        let s = sample_individual(&ps, &t, 4, &teacher, &cache, &cfg).unwrap();
        assert_eq!(s.fractions.len(), 1);
        assert_eq!(s.teacher_calls, 24 * 4);
        let i3 = t.index_of("3").unwrap();
        assert_eq!(s.fractions[0][i3], 0.5);
        assert_eq!(s.fractions[0].iter().sum::<f64>(), 0.5);
        assert_eq!(cache.len(), 24 * 4);
    }
}
