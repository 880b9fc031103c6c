//! Paragraph segmentation with sentence-packed overflow.

pub const DEFAULT_MAX_PASSAGE_LEN: usize = 1200;

/// A passage candidate: character offsets into the source and the slice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub text: String,
}

/// Byte range `[start, end)`.
type Range = (usize, usize);

/// Splits `raw_text` on blank lines; paragraphs longer than `max_passage_len`
/// characters are split at sentence boundaries and sentences are packed
/// greedily. A single sentence longer than the limit is cut at the last
/// whitespace that fits (or mid-word if there is none).
pub fn segment(raw_text: &str, max_passage_len: usize) -> Vec<Span> {
    let max = max_passage_len.max(1);
    let mut out = Vec::new();
    for para in paragraphs(raw_text) {
        if char_len(raw_text, para) <= max {
            out.push(para);
            continue;
        }
        let sentences = sentences(raw_text, para);
        let mut i = 0;
        while i < sentences.len() {
            let start = sentences[i].0;
            if char_len(raw_text, sentences[i]) > max {
                out.extend(hard_split(raw_text, sentences[i], max));
                i += 1;
                continue;
            }
            let mut j = i;
            while j + 1 < sentences.len() && char_len(raw_text, (start, sentences[j + 1].1)) <= max {
                j += 1;
            }
            out.push((start, sentences[j].1));
            i = j + 1;
        }
    }
    to_char_spans(raw_text, &out)
}

fn char_len(text: &str, (s, e): Range) -> usize {
    text[s..e].chars().count()
}

fn trim_range(text: &str, (s, e): Range) -> Option<Range> {
    let slice = &text[s..e];
    let lead = slice.len() - slice.trim_start().len();
    let trimmed = slice.trim();
    if trimmed.is_empty() {
        None
    } else {
        Some((s + lead, s + lead + trimmed.len()))
    }
}

fn paragraphs(text: &str) -> Vec<Range> {
    let mut out = Vec::new();
    let mut para_start: Option<usize> = None;
    let mut pos = 0;
    for line in text.split_inclusive('\n') {
        let blank = line.trim().is_empty();
        match (blank, para_start) {
            (true, Some(s)) => {
                out.extend(trim_range(text, (s, pos)));
                para_start = None;
            }
            (false, None) => para_start = Some(pos),
            _ => {}
        }
        pos += line.len();
    }
    if let Some(s) = para_start {
        out.extend(trim_range(text, (s, text.len())));
    }
    out
}

/// Sentence ranges inside a paragraph: a run of `.`, `!` or `?` (plus any
/// closing quotes or brackets) followed by whitespace ends a sentence.
fn sentences(text: &str, (ps, pe): Range) -> Vec<Range> {
    let para = &text[ps..pe];
    let chars: Vec<(usize, char)> = para.char_indices().collect();
    let mut out = Vec::new();
    let mut start = 0;
    let mut k = 0;
    while k < chars.len() {
        if matches!(chars[k].1, '.' | '!' | '?') {
            let mut m = k + 1;
            while m < chars.len() && matches!(chars[m].1, '.' | '!' | '?' | '"' | '\'' | ')' | ']' | '”' | '’') {
                m += 1;
            }
            if m == chars.len() || chars[m].1.is_whitespace() {
                let end = if m == chars.len() { para.len() } else { chars[m].0 };
                out.extend(trim_range(text, (ps + start, ps + end)));
                start = end;
                k = m;
                continue;
            }
            k = m;
            continue;
        }
        k += 1;
    }
    if start < para.len() {
        out.extend(trim_range(text, (ps + start, pe)));
    }
    out
}

fn hard_split(text: &str, (s, e): Range, max: usize) -> Vec<Range> {
    let mut out = Vec::new();
    let mut cur = s;
    while cur < e {
        let rest = &text[cur..e];
        if rest.chars().count() <= max {
            out.extend(trim_range(text, (cur, e)));
            break;
        }
        let limit = rest.char_indices().nth(max).map(|(b, _)| b).unwrap_or(rest.len());
        let window = &rest[..limit];
        let cut = match window.rfind(char::is_whitespace) {
            Some(b) if b > 0 => b,
            _ => limit,
        };
        out.extend(trim_range(text, (cur, cur + cut)));
        cur += cut;
        let skipped = text[cur..e].len() - text[cur..e].trim_start().len();
        cur += skipped;
    }
    out
}

fn to_char_spans(text: &str, ranges: &[Range]) -> Vec<Span> {
    // ranges are sorted; walk char_indices once
    let mut spans = Vec::with_capacity(ranges.len());
    let mut iter = text.char_indices().enumerate().peekable();
    let mut char_at = |byte: usize| -> usize {
        while let Some(&(ci, (bi, _))) = iter.peek() {
            if bi >= byte {
                return ci;
            }
            iter.next();
        }
        text.chars().count()
    };
    for &(s, e) in ranges {
        let cs = char_at(s);
        let ce = char_at(e);
        spans.push(Span { start: cs, end: ce, text: text[s..e].to_string() });
    }
    spans
}
