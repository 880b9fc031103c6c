//! Article-level aggregation, rolling trend series, before/after event
//! comparison and per-concern keyword counts.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::{self, Execution};
use crate::taxonomy::LabelVector;

pub const DEFAULT_WINDOW: usize = 500;
pub const DEFAULT_CLOUD_SIZE: usize = 50;
pub const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnalyticsError {
    #[error("no passages to aggregate")]
    NoPassages,
    #[error("label vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("articles are not sorted by date (article {index} is earlier than its predecessor)")]
    Unsorted { index: usize },
    #[error("window must be at least 1")]
    ZeroWindow,
    #[error("insufficient data: no articles in the {side} window")]
    InsufficientData { side: &'static str },
}

/// Element-wise OR across the passages of one article.
pub fn aggregate_article(passages: &[LabelVector]) -> Result<LabelVector, AnalyticsError> {
    let first = passages.first().ok_or(AnalyticsError::NoPassages)?;
    let mut out = first.clone();
    for p in &passages[1..] {
        if p.len() != out.len() {
            return Err(AnalyticsError::LengthMismatch(out.len(), p.len()));
        }
        for i in p.positives() {
            out.set(i, true);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticleLabel {
    pub doc_id: String,
    pub date: NaiveDate,
    pub labels: LabelVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendPoint {
    /// Position of the window's last article in the date-ordered input.
    pub index: usize,
    pub date: NaiveDate,
    pub value: f64,
    /// Number of articles averaged; below the window size only for partial points.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendSeries {
    pub concern_id: String,
    pub window: usize,
    pub points: Vec<TrendPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RollingOptions {
    pub window: usize,
    /// Also emit points before the first full window, averaged over the prefix.
    pub emit_partial: bool,
}

impl Default for RollingOptions {
    fn default() -> Self {
        RollingOptions { window: DEFAULT_WINDOW, emit_partial: false }
    }
}

fn check_sorted(articles: &[ArticleLabel]) -> Result<(), AnalyticsError> {
    match articles.windows(2).position(|w| w[1].date < w[0].date) {
        Some(i) => Err(AnalyticsError::Unsorted { index: i + 1 }),
        None => Ok(()),
    }
}

/// Trailing, inclusive rolling mean of each concern over the last `window`
/// articles. Sums are kept as integer counts and divided once per point.
pub fn rolling_average(
    articles: &[ArticleLabel],
    label_ids: &[String],
    opts: RollingOptions,
    exec: Execution,
) -> Result<Vec<TrendSeries>, AnalyticsError> {
    if opts.window == 0 {
        return Err(AnalyticsError::ZeroWindow);
    }
    check_sorted(articles)?;
    if let Some(a) = articles.iter().find(|a| a.labels.len() != label_ids.len()) {
        return Err(AnalyticsError::LengthMismatch(label_ids.len(), a.labels.len()));
    }
    let w = opts.window;
    Ok(par::map_range(label_ids.len(), exec, |c| {
        let mut points = Vec::with_capacity(articles.len());
        let mut sum = 0usize;
        for (i, a) in articles.iter().enumerate() {
            sum += a.labels.get(c) as usize;
            if i >= w {
                sum -= articles[i - w].labels.get(c) as usize;
            }
            let count = (i + 1).min(w);
            if count == w || opts.emit_partial {
                points.push(TrendPoint { index: i, date: a.date, value: sum as f64 / count as f64, count });
            }
        }
        TrendSeries { concern_id: label_ids[c].clone(), window: w, points }
    }))
}

/// CSV with `index,date` and one column per series.
pub fn trends_to_csv(series: &[TrendSeries]) -> String {
    let mut out = String::from("index,date");
    for s in series {
        out.push(',');
        out.push_str(&s.concern_id);
    }
    out.push('\n');
    if let Some(first) = series.first() {
        for (row, p) in first.points.iter().enumerate() {
            let _ = write!(out, "{},{}", p.index, p.date);
            for s in series {
                let _ = write!(out, ",{}", s.points[row].value);
            }
            out.push('\n');
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventWindow {
    pub event_date: NaiveDate,
    /// Pre side covers `[event - pre_days, event)`.
    pub pre_days: u32,
    /// Post side covers `[event, event + post_days)`.
    pub post_days: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcernChange {
    pub concern_id: String,
    pub pre_count: usize,
    pub post_count: usize,
    pub pre_prop: f64,
    pub post_prop: f64,
    /// `(post - pre) / pre`; `None` when `pre_prop` is 0.
    pub rel_change: Option<f64>,
    pub rel_change_undefined: bool,
}

impl ConcernChange {
    /// Short description such as `rose by 61%`.
    pub fn describe(&self) -> String {
        match self.rel_change {
            None => "undefined (no pre-event articles with this concern)".into(),
            Some(r) if r > 0.0 => format!("rose by {:.0}%", r * 100.0),
            Some(r) if r < 0.0 => format!("fell by {:.0}%", -r * 100.0),
            Some(_) => "unchanged".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventComparison {
    pub window: EventWindow,
    pub pre_articles: usize,
    pub post_articles: usize,
    pub concerns: Vec<ConcernChange>,
}

/// Share of articles with each concern in the windows before and after an event.
pub fn event_comparison(
    articles: &[ArticleLabel],
    label_ids: &[String],
    window: EventWindow,
) -> Result<EventComparison, AnalyticsError> {
    if window.pre_days == 0 || window.post_days == 0 {
        return Err(AnalyticsError::ZeroWindow);
    }
    let e = window.event_date;
    let pre_start = e.checked_sub_days(Days::new(window.pre_days.into())).unwrap_or(NaiveDate::MIN);
    let post_end = e.checked_add_days(Days::new(window.post_days.into())).unwrap_or(NaiveDate::MAX);
    let k = label_ids.len();
    let (mut pre, mut post) = (vec![0usize; k], vec![0usize; k]);
    let (mut n_pre, mut n_post) = (0usize, 0usize);
    for a in articles {
        if a.labels.len() != k {
            return Err(AnalyticsError::LengthMismatch(k, a.labels.len()));
        }
        let side = if a.date >= pre_start && a.date < e {
            n_pre += 1;
            &mut pre
        } else if a.date >= e && a.date < post_end {
            n_post += 1;
            &mut post
        } else {
            continue;
        };
        for i in a.labels.positives() {
            side[i] += 1;
        }
    }
    if n_pre == 0 {
        return Err(AnalyticsError::InsufficientData { side: "pre-event" });
    }
    if n_post == 0 {
        return Err(AnalyticsError::InsufficientData { side: "post-event" });
    }
    let concerns = (0..k)
        .map(|c| {
            let pre_prop = pre[c] as f64 / n_pre as f64;
            let post_prop = post[c] as f64 / n_post as f64;
            let rel_change = (pre[c] > 0).then(|| (post_prop - pre_prop) / pre_prop);
            ConcernChange {
                concern_id: label_ids[c].clone(),
                pre_count: pre[c],
                post_count: post[c],
                pre_prop,
                post_prop,
                rel_change,
                rel_change_undefined: rel_change.is_none(),
            }
        })
        .collect();
    Ok(EventComparison { window, pre_articles: n_pre, post_articles: n_post, concerns })
}

#[derive(Debug, Clone)]
pub struct Stopwords(HashSet<String>);

impl Stopwords {
    pub fn english() -> Self {
        Self::parse(DEFAULT_STOPWORDS)
    }

    /// One word per line; `#` starts a comment line.
    pub fn parse(list: &str) -> Self {
        Stopwords(
            list.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_lowercase)
                .collect(),
        )
    }

    pub fn none() -> Self {
        Stopwords(HashSet::new())
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }
}

impl Default for Stopwords {
    fn default() -> Self {
        Self::english()
    }
}

/// Lowercase word tokens: runs of letters, digits and inner apostrophes.
/// Single characters and pure numbers are dropped.
pub fn cloud_tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !(c.is_alphanumeric() || c == '\'' || c == '\u{2019}'))
        .map(|t| t.trim_matches(['\'', '\u{2019}']).replace('\u{2019}', "'").to_lowercase())
        .filter(|t| t.chars().count() > 1 && !t.chars().all(|c| c.is_ascii_digit()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CloudEntry {
    pub term: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordCloud {
    pub concern_id: String,
    pub entries: Vec<CloudEntry>,
}

/// Top-`k` non-stopword terms by count, ties in lexicographic order.
pub fn keyword_cloud<S: AsRef<str>>(concern_id: &str, passages: &[S], stopwords: &Stopwords, k: usize) -> KeywordCloud {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for p in passages {
        for t in cloud_tokens(p.as_ref()) {
            if !stopwords.contains(&t) {
                *counts.entry(t).or_default() += 1;
            }
        }
    }
    let mut entries: Vec<CloudEntry> = counts.into_iter().map(|(term, count)| CloudEntry { term, count }).collect();
    entries.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.term.cmp(&b.term)));
    entries.truncate(k);
    KeywordCloud { concern_id: concern_id.to_string(), entries }
}

/// One cloud per concern from passages and their labels.
pub fn keyword_clouds<S: AsRef<str> + Sync>(
    passages: &[S],
    labels: &[LabelVector],
    label_ids: &[String],
    stopwords: &Stopwords,
    k: usize,
    exec: Execution,
) -> Vec<KeywordCloud> {
    par::map_range(label_ids.len(), exec, |c| {
        let texts: Vec<&str> =
            passages.iter().zip(labels).filter(|(_, l)| l.get(c)).map(|(p, _)| p.as_ref()).collect();
        keyword_cloud(&label_ids[c], &texts, stopwords, k)
    })
}

/// Articles per date, for quick sanity checks of a corpus timeline.
pub fn articles_per_date(articles: &[ArticleLabel]) -> BTreeMap<NaiveDate, usize> {
    let mut out = BTreeMap::new();
    for a in articles {
        *out.entry(a.date).or_default() += 1;
    }
    out
}
