//! Keyword baseline for relevance.

/// Default vaccine vocabulary. Entries are lowercase stems matched at the
/// start of a word, so `vaccin` covers "vaccine", "vaccination", "vaccinated".
pub const DEFAULT_VACCINE_KEYWORDS: &[&str] = &[
    "vaccin", "vax", "antivax", "immuniz", "immunis", "inocul", "jab", "booster", "mmr", "dtap", "hpv shot",
    "flu shot", "thimerosal", "adjuvant",
];

/// True iff some keyword occurs case-insensitively starting at a word
/// boundary. Keywords are prefixes: the match may continue into a longer word.
pub fn keyword_relevance<S: AsRef<str>>(text: &str, keywords: &[S]) -> bool {
    let lower = text.to_lowercase();
    keywords.iter().any(|k| {
        let k = k.as_ref();
        !k.is_empty()
            && lower.match_indices(k).any(|(at, _)| {
                lower[..at].chars().next_back().is_none_or(|c| !c.is_alphanumeric())
            })
    })
}
