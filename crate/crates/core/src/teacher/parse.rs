//! Tolerant parsing of teacher responses.

use std::fmt::Write as _;

use super::prompt::LABEL_PREFIX;
use super::TeacherError;
use crate::taxonomy::{LabelVector, Taxonomy};

/// Looks for a standalone yes/no word, case-insensitively.
pub fn parse_relevance_response(raw: &str) -> Result<bool, TeacherError> {
    let mut yes = false;
    let mut no = false;
    for word in raw.split(|c: char| !c.is_alphanumeric()) {
        if word.eq_ignore_ascii_case("yes") {
            yes = true;
        } else if word.eq_ignore_ascii_case("no") {
            no = true;
        }
    }
    match (yes, no) {
        (true, false) => Ok(true),
        (false, true) => Ok(false),
        (true, true) => Err(TeacherError::Unparseable("response contains both yes and no".into())),
        (false, false) => Err(TeacherError::Unparseable("response contains neither yes nor no".into())),
    }
}

/// Every `<prefix><id> : [v]` entry in the response, in order of appearance.
/// The value is `None` when it is not a single 0 or 1.
fn entries(raw: &str) -> Vec<(String, Option<bool>)> {
    let lower = raw.to_ascii_lowercase();
    let prefix = LABEL_PREFIX.to_ascii_lowercase();
    let mut out = Vec::new();
    for (at, _) in lower.match_indices(&prefix) {
        let rest = &raw[at + prefix.len()..];
        let id_len = rest.find(|c: char| !(c.is_ascii_digit() || c == '.')).unwrap_or(rest.len());
        let id = rest[..id_len].trim_end_matches('.');
        if id.is_empty() {
            continue;
        }
        let value: String = rest[id_len..]
            .trim_start_matches(|c: char| c.is_whitespace() && c != '\n' || matches!(c, ':' | '*' | '=' | '-'))
            .trim_start_matches(['[', '(', ' '])
            .chars()
            .take_while(|c| !matches!(c, ']' | ')' | ',' | ';' | '\n' | '\r'))
            .collect();
        let value = value.trim().trim_end_matches('.').trim();
        let bit = match value {
            "0" => Some(false),
            "1" => Some(true),
            _ => None,
        };
        out.push((id.to_string(), bit));
    }
    out
}

/// Parses one 0/1 per taxonomy node. Missing, duplicate or non-binary
/// entries make the whole response unparseable; unknown ids are ignored.
pub fn parse_multilabel_response(raw: &str, t: &Taxonomy) -> Result<LabelVector, TeacherError> {
    let mut seen: Vec<Option<bool>> = vec![None; t.len()];
    for (id, bit) in entries(raw) {
        let Some(i) = t.index_of(&id) else { continue };
        let bit = bit.ok_or_else(|| TeacherError::Unparseable(format!("non-binary value for {LABEL_PREFIX}{id}")))?;
        if seen[i].replace(bit).is_some() {
            return Err(TeacherError::Unparseable(format!("duplicate line for {LABEL_PREFIX}{id}")));
        }
    }
    let missing: Vec<&str> = seen.iter().zip(t.ids()).filter(|(s, _)| s.is_none()).map(|(_, id)| id).collect();
    if !missing.is_empty() {
        return Err(TeacherError::Unparseable(format!("missing labels: {}", missing.join(", "))));
    }
    Ok(LabelVector::from_bools(seen.into_iter().map(|s| s.unwrap_or(false)).collect()))
}

/// Parses the answer to an individual prompt: a labelled line for `node_id`,
/// or failing that a response that is just `0` or `1`.
pub fn parse_single_label_response(raw: &str, node_id: &str) -> Result<bool, TeacherError> {
    let hits: Vec<Option<bool>> = entries(raw).into_iter().filter(|(id, _)| id == node_id).map(|(_, b)| b).collect();
    match hits.as_slice() {
        [Some(b)] => Ok(*b),
        [None] => Err(TeacherError::Unparseable(format!("non-binary value for {LABEL_PREFIX}{node_id}"))),
        [] => match raw.trim().trim_matches(|c| matches!(c, '[' | ']' | '.')) {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(TeacherError::Unparseable(format!("no value for {LABEL_PREFIX}{node_id}"))),
        },
        _ => Err(TeacherError::Unparseable(format!("duplicate line for {LABEL_PREFIX}{node_id}"))),
    }
}

/// Renders labels in the response format the multilabel prompt asks for.
pub fn format_multilabel_response(t: &Taxonomy, labels: &LabelVector) -> String {
    let mut out = String::new();
    for (id, bit) in t.ids().zip(labels.iter()) {
        let _ = writeln!(out, "{LABEL_PREFIX}{id}: {}", bit as u8);
    }
    out
}
