//! Seeded synthetic corpus with planted keyword rules, plus rule-driven
//! teacher and classifier stand-ins. Used for offline runs, tests and
//! benchmarks.
//!
//! Every taxonomy node owns a few cue words. A passage carries a node iff it
//! is vaccine-relevant and contains one of the node's cues or a cue of one of
//! its children. Relevance is decided by a separate vaccine vocabulary.

use std::collections::HashMap;

use chrono::{Days, NaiveDate};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ingest::{Document, DocumentMeta, IngestOptions, SourceKind};
use crate::student::{Classifier, Prediction, RELEVANCE_LABEL};
use crate::taxonomy::{LabelVector, Taxonomy};
use crate::teacher::{
    format_multilabel_response, individual_node_from_prompt, passage_from_prompt, Teacher, TeacherError, LABEL_PREFIX,
};

/// Cue words per node of the default taxonomy, in canonical order.
const NODE_CUES: [(&str, [&str; 3]); 24] = [
    ("1", ["research", "scientists", "findings"]),
    ("1.1", ["understudied", "untested", "longterm"]),
    ("1.2", ["flawed", "biased", "retracted"]),
    ("1.3", ["uncertain", "unknowable", "fallible"]),
    ("2", ["pointless", "useless", "ineffective"]),
    ("2.1", ["homeopathy", "vitamins", "naturopathic"]),
    ("2.2", ["herd", "outbreaks", "transmission"]),
    ("2.3", ["mild", "survivable", "recovery"]),
    ("2.4", ["eradicated", "vanished", "disappeared"]),
    ("2.5", ["waning", "wears", "temporary"]),
    ("3", ["dangerous", "unsafe", "risky"]),
    ("3.1", ["overload", "overwhelm", "crowded"]),
    ("3.2", ["thimerosal", "aluminum", "formaldehyde"]),
    ("3.3", ["autism", "seizures", "paralysis"]),
    ("3.4", ["fertility", "infertility", "miscarriage"]),
    ("3.5", ["allergic", "anaphylaxis", "allergies"]),
    ("4", ["freedom", "rights", "liberty"]),
    ("4.1", ["religious", "faith", "fetal"]),
    ("4.2", ["mandates", "mandatory", "coerced"]),
    ("5", ["corrupt", "untrustworthy", "liars"]),
    ("5.1", ["pharma", "profits", "profiteering"]),
    ("5.2", ["conspiracy", "microchips", "depopulation"]),
    ("5.3", ["bureaucrats", "officials", "regulators"]),
    ("5.4", ["doctors", "pediatricians", "surgeons"]),
];

/// Node planted at a reduced rate.
pub const RARE_NODE: &str = "4.1";

const VACCINE_WORDS: &[&str] =
    &["vaccine", "vaccines", "vaccination", "shot", "shots", "immunization", "booster", "dose", "jab"];

const VACCINE_SENTENCES: &[&str] = &[
    "The county clinic will offer the {v} on Saturday morning.",
    "Parents lined up for the {v} outside the school gym.",
    "A pharmacy downtown extended its hours for the {v}.",
    "The health department posted a new schedule for the {v}.",
    "Our family talked about the {v} over dinner last night.",
    "The newsletter explained where to get the {v} this fall.",
    "A reporter asked residents how they felt about the {v}.",
    "The town announced a mobile van for the {v}.",
];

const CONCERN_SENTENCES: &[&str] = &[
    "People keep talking about {k} in the comments.",
    "Critics pointed to {k} once again.",
    "The post claimed {k} was the real story.",
    "Several speakers brought up {k} at the meeting.",
    "One caller said {k} should worry everyone.",
    "A viral thread focused on {k} this week.",
    "The flyer mentioned {k} in bold letters.",
];

const GENERIC_SENTENCES: &[&str] = &[
    "The weather stayed cool through the weekend.",
    "The home team won the match in extra time.",
    "A new bakery opened on the corner of Main Street.",
    "Traffic on the bridge was slow during the storm.",
    "The library added evening hours for students.",
    "Gardeners traded seeds at the spring market.",
    "The museum unveiled a collection of old maps.",
    "Commuters praised the faster train service.",
    "The city council debated the parking budget.",
    "A local band played to a packed hall.",
];

/// Non-vaccine sentences that reuse concern cue words.
const DISTRACTOR_SENTENCES: &[&str] = &[
    "The fans celebrated their {k} after the final whistle.",
    "The quiz show asked a question about {k}.",
    "A novel about {k} topped the bestseller list.",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PassageKind {
    Irrelevant,
    RelevantNoConcern,
    Concern,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPassage {
    pub text: String,
    pub kind: PassageKind,
    pub relevant: bool,
    pub labels: LabelVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticArticle {
    pub doc_id: String,
    pub date: NaiveDate,
    pub passages: Vec<SyntheticPassage>,
}

impl SyntheticArticle {
    pub fn text(&self) -> String {
        self.passages.iter().map(|p| p.text.as_str()).collect::<Vec<_>>().join("\n\n")
    }

    /// Ingests the article text; passages line up with `self.passages`.
    pub fn to_document(&self) -> Document {
        Document::build(
            SourceKind::Text,
            self.text(),
            DocumentMeta { id: Some(self.doc_id.clone()), url: None, date: Some(self.date), fetched_at: None },
            IngestOptions::default(),
        )
        .expect("synthetic articles are non-empty")
    }
}

/// Mix of passage kinds; the three shares are normalised.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KindMix {
    pub irrelevant: f64,
    pub relevant_no_concern: f64,
    pub concern: f64,
}

impl Default for KindMix {
    fn default() -> Self {
        KindMix { irrelevant: 0.3, relevant_no_concern: 0.2, concern: 0.5 }
    }
}

impl KindMix {
    pub fn concern_only() -> Self {
        KindMix { irrelevant: 0.0, relevant_no_concern: 0.0, concern: 1.0 }
    }
}

/// Shift in one node's planting rate from a given date on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventShift {
    pub date: NaiveDate,
    pub node_id: String,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub mix: KindMix,
    /// Relative planting weight of [`RARE_NODE`]; other nodes weigh 1.
    pub rare_weight: f64,
    /// Share of irrelevant passages that contain a concern cue word.
    pub distractor_rate: f64,
    pub passages_per_article: usize,
    pub start_date: NaiveDate,
    pub days: u32,
    pub event: Option<EventShift>,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            seed: 7,
            mix: KindMix::default(),
            rare_weight: 0.42,
            distractor_rate: 0.3,
            passages_per_article: 15,
            start_date: NaiveDate::from_ymd_opt(2019, 1, 1).expect("valid date"),
            days: 730,
            event: None,
        }
    }
}

/// Keyword rules over a taxonomy.
#[derive(Debug, Clone)]
pub struct Rules {
    taxonomy: Taxonomy,
    cues: Vec<Vec<&'static str>>,
    cue_to_nodes: HashMap<&'static str, Vec<usize>>,
}

impl Rules {
    /// Rules for the default taxonomy.
    pub fn vaccine() -> Self {
        Self::for_taxonomy(Taxonomy::default_vaccine())
    }

    /// Cue words are assigned by position, so any taxonomy of at most 24
    /// nodes works; parents inherit the cues of their children.
    pub fn for_taxonomy(taxonomy: Taxonomy) -> Self {
        assert!(taxonomy.len() <= NODE_CUES.len(), "at most {} nodes supported", NODE_CUES.len());
        let cues: Vec<Vec<&'static str>> = (0..taxonomy.len()).map(|i| NODE_CUES[i].1.to_vec()).collect();
        let mut cue_to_nodes: HashMap<&'static str, Vec<usize>> = HashMap::new();
        for (i, cs) in cues.iter().enumerate() {
            let parent = taxonomy.parent_of(i);
            for c in cs {
                let e = cue_to_nodes.entry(c).or_default();
                e.push(i);
                e.extend(parent);
            }
        }
        Rules { taxonomy, cues, cue_to_nodes }
    }

    pub fn taxonomy(&self) -> &Taxonomy {
        &self.taxonomy
    }

    pub fn cues(&self, node: usize) -> &[&'static str] {
        &self.cues[node]
    }

    fn words(text: &str) -> impl Iterator<Item = String> + '_ {
        text.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).map(str::to_lowercase)
    }

    pub fn relevant(&self, text: &str) -> bool {
        Self::words(text).any(|w| VACCINE_WORDS.contains(&w.as_str()))
    }

    /// Node labels implied by cue words; all zero for non-vaccine text.
    pub fn labels(&self, text: &str) -> LabelVector {
        let mut v = LabelVector::zeros(self.taxonomy.len());
        if !self.relevant(text) {
            return v;
        }
        for w in Self::words(text) {
            if let Some(nodes) = self.cue_to_nodes.get(w.as_str()) {
                for &n in nodes {
                    v.set(n, true);
                }
            }
        }
        v
    }
}

pub struct Generator {
    rules: Rules,
    cfg: SyntheticConfig,
    rng: ChaCha8Rng,
    rare: Option<usize>,
}

impl Generator {
    pub fn new(rules: Rules, cfg: SyntheticConfig) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let rare = rules.taxonomy.index_of(RARE_NODE);
        Generator { rules, cfg, rng, rare }
    }

    pub fn vaccine(cfg: SyntheticConfig) -> Self {
        Self::new(Rules::vaccine(), cfg)
    }

    pub fn rules(&self) -> &Rules {
        &self.rules
    }

    fn pick_kind(&mut self) -> PassageKind {
        let m = self.cfg.mix;
        let total = m.irrelevant + m.relevant_no_concern + m.concern;
        let x = self.rng.random::<f64>() * total;
        if x < m.irrelevant {
            PassageKind::Irrelevant
        } else if x < m.irrelevant + m.relevant_no_concern {
            PassageKind::RelevantNoConcern
        } else {
            PassageKind::Concern
        }
    }

    fn vaccine_sentence(&mut self) -> String {
        let t = *VACCINE_SENTENCES.choose(&mut self.rng).expect("non-empty");
        let v = *VACCINE_WORDS.choose(&mut self.rng).expect("non-empty");
        t.replace("{v}", v)
    }

    fn generic_sentences(&mut self, n: usize) -> Vec<String> {
        (0..n).map(|_| GENERIC_SENTENCES.choose(&mut self.rng).expect("non-empty").to_string()).collect()
    }

    fn node_weights(&self, date: Option<NaiveDate>) -> Vec<f64> {
        (0..self.rules.taxonomy.len())
            .map(|i| {
                let mut w = if Some(i) == self.rare { self.cfg.rare_weight } else { 1.0 };
                if let (Some(ev), Some(d)) = (&self.cfg.event, date) {
                    if d >= ev.date && self.rules.taxonomy.index_of(&ev.node_id) == Some(i) {
                        w *= ev.factor;
                    }
                }
                w
            })
            .collect()
    }

    /// Weighted sampling of `k` distinct nodes.
    fn pick_nodes(&mut self, k: usize, date: Option<NaiveDate>) -> Vec<usize> {
        let mut weights = self.node_weights(date);
        let mut out = Vec::with_capacity(k);
        for _ in 0..k {
            let total: f64 = weights.iter().sum();
            if total <= 0.0 {
                break;
            }
            let mut x = self.rng.random::<f64>() * total;
            let mut chosen = weights.len() - 1;
            for (i, w) in weights.iter().enumerate() {
                if x < *w {
                    chosen = i;
                    break;
                }
                x -= w;
            }
            out.push(chosen);
            weights[chosen] = 0.0;
        }
        out
    }

    fn passage_of_kind(&mut self, kind: PassageKind, date: Option<NaiveDate>) -> SyntheticPassage {
        let mut sentences = Vec::new();
        match kind {
            PassageKind::Irrelevant => {
                let n = self.rng.random_range(2..=4);
                sentences = self.generic_sentences(n);
                if self.rng.random::<f64>() < self.cfg.distractor_rate {
                    let node = self.rng.random_range(0..self.rules.taxonomy.len());
                    let cue = *self.rules.cues[node].choose(&mut self.rng).expect("non-empty");
                    let t = DISTRACTOR_SENTENCES.choose(&mut self.rng).expect("non-empty");
                    let at = self.rng.random_range(0..=sentences.len());
                    sentences.insert(at, t.replace("{k}", cue));
                }
            }
            PassageKind::RelevantNoConcern => {
                sentences.push(self.vaccine_sentence());
                if self.rng.random_bool(0.5) {
                    sentences.push(self.vaccine_sentence());
                }
                let n = self.rng.random_range(1..=2);
                sentences.extend(self.generic_sentences(n));
            }
            PassageKind::Concern => {
                sentences.push(self.vaccine_sentence());
                let x = self.rng.random::<f64>();
                let k = if x < 0.5 { 1 } else if x < 0.85 { 2 } else { 3 };
                for node in self.pick_nodes(k, date) {
                    let cue = *self.rules.cues[node].choose(&mut self.rng).expect("non-empty");
                    let t = CONCERN_SENTENCES.choose(&mut self.rng).expect("non-empty");
                    sentences.push(t.replace("{k}", cue));
                }
                if self.rng.random_bool(0.5) {
                    sentences.extend(self.generic_sentences(1));
                }
                let mut tail = sentences.split_off(1);
                tail.shuffle(&mut self.rng);
                sentences.extend(tail);
            }
        }
        let text = sentences.join(" ");
        let relevant = self.rules.relevant(&text);
        let labels = self.rules.labels(&text);
        SyntheticPassage { text, kind, relevant, labels }
    }

    pub fn passage(&mut self) -> SyntheticPassage {
        let kind = self.pick_kind();
        self.passage_of_kind(kind, None)
    }

    pub fn passages(&mut self, n: usize) -> Vec<SyntheticPassage> {
        (0..n).map(|_| self.passage()).collect()
    }

    /// Articles spread over `cfg.days` days, sorted by date.
    pub fn articles(&mut self, n: usize) -> Vec<SyntheticArticle> {
        let mut dates: Vec<NaiveDate> = (0..n)
            .map(|_| {
                let d = self.rng.random_range(0..self.cfg.days.max(1));
                self.cfg.start_date + Days::new(d.into())
            })
            .collect();
        dates.sort();
        dates
            .into_iter()
            .enumerate()
            .map(|(i, date)| {
                let passages = (0..self.cfg.passages_per_article)
                    .map(|_| {
                        let kind = self.pick_kind();
                        self.passage_of_kind(kind, Some(date))
                    })
                    .collect();
                SyntheticArticle { doc_id: format!("syn-{:06}", i), date, passages }
            })
            .collect()
    }
}

/// Teacher that answers from the keyword rules. `noise` flips each answer
/// with that probability, deterministically per prompt.
pub struct RuleTeacher {
    rules: Rules,
    name: String,
    noise: f64,
}

impl RuleTeacher {
    pub fn new(rules: Rules) -> Self {
        RuleTeacher { rules, name: "rule-teacher".into(), noise: 0.0 }
    }

    pub fn with_noise(mut self, noise: f64) -> Self {
        self.noise = noise;
        self
    }

    fn flip(&self, prompt: &str, salt: usize) -> bool {
        if self.noise <= 0.0 {
            return false;
        }
        let h = Sha256::new().chain_update(prompt.as_bytes()).chain_update(salt.to_le_bytes()).finalize();
        let x = u64::from_le_bytes(h[..8].try_into().expect("8 bytes")) as f64 / u64::MAX as f64;
        x < self.noise
    }
}

impl Teacher for RuleTeacher {
    fn model_name(&self) -> &str {
        &self.name
    }

    fn complete(&self, prompt: &str) -> Result<String, TeacherError> {
        let passage = passage_from_prompt(prompt)
            .ok_or_else(|| TeacherError::Request("prompt not recognised by rule teacher".into()))?;
        if !prompt.contains(LABEL_PREFIX) {
            let r = self.rules.relevant(passage) ^ self.flip(prompt, 0);
            return Ok(if r { "Yes" } else { "No" }.into());
        }
        let mut labels = self.rules.labels(passage);
        for i in 0..labels.len() {
            if self.flip(prompt, i + 1) {
                labels.set(i, !labels.get(i));
            }
        }
        if let Some(id) = individual_node_from_prompt(prompt) {
            let i = self.rules.taxonomy.index_of(id).ok_or_else(|| TeacherError::UnknownNode(id.into()))?;
            return Ok(format!("{LABEL_PREFIX}{id}: {}", labels.get(i) as u8));
        }
        Ok(format_multilabel_response(&self.rules.taxonomy, &labels))
    }
}

/// Classifier that applies the keyword rules directly.
pub struct RuleClassifier {
    rules: Rules,
    ids: Vec<String>,
    relevance: bool,
}

impl RuleClassifier {
    pub fn multilabel(rules: Rules) -> Self {
        let ids = rules.taxonomy.ids().map(str::to_string).collect();
        RuleClassifier { rules, ids, relevance: false }
    }

    pub fn relevance(rules: Rules) -> Self {
        RuleClassifier { rules, ids: vec![RELEVANCE_LABEL.to_string()], relevance: true }
    }
}

impl Classifier for RuleClassifier {
    fn label_ids(&self) -> &[String] {
        &self.ids
    }

    fn taxonomy_version(&self) -> &str {
        self.rules.taxonomy.version()
    }

    fn predict(&self, text: &str) -> Prediction {
        let labels = if self.relevance {
            LabelVector::from_bools(vec![self.rules.relevant(text)])
        } else {
            self.rules.labels(text)
        };
        let scores = labels.iter().map(|b| if b { 1.0 } else { 0.0 }).collect();
        Prediction { scores, labels }
    }
}

/// Classifier returning fixed label sets for known texts and all-zero otherwise.
pub struct ScriptedClassifier {
    ids: Vec<String>,
    version: String,
    script: HashMap<String, LabelVector>,
}

impl ScriptedClassifier {
    pub fn new(taxonomy: &Taxonomy) -> Self {
        ScriptedClassifier {
            ids: taxonomy.ids().map(str::to_string).collect(),
            version: taxonomy.version().to_string(),
            script: HashMap::new(),
        }
    }

    pub fn with(mut self, text: impl Into<String>, labels: LabelVector) -> Self {
        self.script.insert(text.into(), labels);
        self
    }
}

impl Classifier for ScriptedClassifier {
    fn label_ids(&self) -> &[String] {
        &self.ids
    }

    fn taxonomy_version(&self) -> &str {
        &self.version
    }

    fn predict(&self, text: &str) -> Prediction {
        let labels = self.script.get(text).cloned().unwrap_or_else(|| LabelVector::zeros(self.ids.len()));
        let scores = labels.iter().map(|b| if b { 1.0 } else { 0.0 }).collect();
        Prediction { scores, labels }
    }
}
