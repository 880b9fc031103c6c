//! Teacher prompt templates.

use std::fmt::Write as _;

use super::TeacherError;
use crate::taxonomy::Taxonomy;

const RELEVANCE_TEMPLATE: &str = "You will be given a small paragraph of text. Please return whether the text is relevant to vaccines. Text is vaccine-related if it mentions vaccines in some way, indirectly or directly. Note that the sentences may be vaccine relevant even if there aren't any keywords like \"vaccine\" or \"vaccination\". Think carefully about your answer as this task is important, then return a 'Yes' or 'No' indicating if the paragraph discusses vaccination. \n Paragraph input: ";

const EXPERT_PREAMBLE: &str = "You are a healthcare expert helping to determine whether a passage includes vaccine concerns. You have a deep understanding of vaccine-related topics and are capable of providing accurate assessments regarding specific vaccine concerns mentioned in the passage.";

const DECISION_INSTRUCTION: &str = "Please read the passage and determine whether the specific concern about the vaccine is mentioned. If it is, return 1; otherwise, return 0.";

pub(crate) const PASSAGE_MARKER: &str = "\nParagraph: ";

/// Label prefix used in multilabel prompts and responses.
pub const LABEL_PREFIX: &str = "VaxConcerns_";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PromptMode {
    /// Every node answered in one response.
    AllInOne,
    /// One node per request.
    Individual(String),
}

pub fn build_relevance_prompt(passage: &str) -> Result<String, TeacherError> {
    if passage.trim().is_empty() {
        return Err(TeacherError::EmptyPassage);
    }
    Ok(format!("{RELEVANCE_TEMPLATE}{passage}"))
}

pub fn build_multilabel_prompt(passage: &str, t: &Taxonomy, mode: &PromptMode) -> Result<String, TeacherError> {
    if passage.trim().is_empty() {
        return Err(TeacherError::EmptyPassage);
    }
    if let PromptMode::Individual(id) = mode {
        if t.index_of(id).is_none() {
            return Err(TeacherError::UnknownNode(id.clone()));
        }
    }
    let ids: Vec<&str> = t.ids().collect();
    let (first, second, last) = (ids[0], ids.get(1).copied().unwrap_or(ids[0]), ids[ids.len() - 1]);

    let mut p = String::with_capacity(6000 + passage.len());
    p.push_str(EXPERT_PREAMBLE);
    p.push_str("\n\n");
    let _ = write!(
        p,
        "You will be given a passage and a set of vaccine concerns in a hierarchical order, labeled as \
         \"{LABEL_PREFIX}{first}\", \"{LABEL_PREFIX}{second}\", ... , \"{LABEL_PREFIX}{last}\". \
         You will have the definition for each of the labels.\n\n"
    );
    p.push_str("Vaccine Concerns:\n");
    for node in t.nodes() {
        let indent = if node.parent_id.is_some() { "    " } else { "" };
        let _ = writeln!(p, "{indent}- {LABEL_PREFIX}{}: \"{}\" - {}", node.id, node.name, node.definition);
    }
    p.push('\n');
    p.push_str(DECISION_INSTRUCTION);
    p.push_str("\n\n");
    match mode {
        PromptMode::AllInOne => {
            p.push_str("In your response, please return in the following format:\n");
            for id in &ids {
                let _ = writeln!(p, "{LABEL_PREFIX}{id}: [0/1]");
            }
            p.push_str(PASSAGE_MARKER.trim_start_matches('\n'));
            p.push_str(passage);
        }
        PromptMode::Individual(id) => {
            p.push_str(PASSAGE_MARKER.trim_start_matches('\n'));
            p.push_str(passage);
            let _ = write!(
                p,
                "\n\nIn your response, please only return for the {LABEL_PREFIX}{id} label. \
                 We will ask you about the other labels later."
            );
        }
    }
    Ok(p)
}

/// Recovers the passage text from a prompt built by this module.
pub fn passage_from_prompt(prompt: &str) -> Option<&str> {
    if let Some(rest) = prompt.strip_prefix(RELEVANCE_TEMPLATE) {
        return Some(rest);
    }
    if !prompt.starts_with(EXPERT_PREAMBLE) {
        return None;
    }
    let start = prompt.find(PASSAGE_MARKER)? + PASSAGE_MARKER.len();
    let rest = &prompt[start..];
    let end = rest.rfind(&format!("\n\nIn your response, please only return for the {LABEL_PREFIX}"));
    Some(match end {
        Some(e) => &rest[..e],
        None => rest,
    })
}

/// Node id asked for by an individual prompt.
pub fn individual_node_from_prompt(prompt: &str) -> Option<&str> {
    let key = format!("please only return for the {LABEL_PREFIX}");
    let at = prompt.rfind(&key)? + key.len();
    prompt[at..].split(' ').next()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relevance_prompt_substitutes_literally() {
        let p = build_relevance_prompt("Vaccines are unsafe").unwrap();
        assert!(p.ends_with("Paragraph input: Vaccines are unsafe"));
        assert!(p.starts_with("You will be given a small paragraph of text."));
        let q = build_relevance_prompt("see {paragraph} here").unwrap();
        assert!(q.ends_with("Paragraph input: see {paragraph} here"));
        assert!(build_relevance_prompt("  ").is_err());
    }

    #[test]
    fn all_in_one_lists_every_node() {
        let t = Taxonomy::default_vaccine();
        let p = build_multilabel_prompt("text", &t, &PromptMode::AllInOne).unwrap();
        assert!(p.starts_with("You are a healthcare expert"));
        for id in t.ids() {
            assert!(p.contains(&format!("VaxConcerns_{id}: [0/1]\n")), "{id}");
        }
        assert!(p.contains("- VaxConcerns_1.2: \"Poor Quality\" - Attacks elements"));
        assert!(p.contains("\"VaxConcerns_1\", \"VaxConcerns_1.1\", ... , \"VaxConcerns_5.4\""));
        assert!(p.ends_with("Paragraph: text"));
    }

    #[test]
    fn individual_ends_with_single_label_instruction() {
        let t = Taxonomy::default_vaccine();
        let p = build_multilabel_prompt("text", &t, &PromptMode::Individual("1.2".into())).unwrap();
        assert!(p.ends_with(
            "In your response, please only return for the VaxConcerns_1.2 label. We will ask you about the other labels later."
        ));
        assert_eq!(individual_node_from_prompt(&p), Some("1.2"));
        let err = build_multilabel_prompt("text", &t, &PromptMode::Individual("9.9".into())).unwrap_err();
        assert!(matches!(err, TeacherError::UnknownNode(id) if id == "9.9"));
    }

    #[test]
    fn prompts_are_pure_and_invertible() {
        let t = Taxonomy::default_vaccine();
        let passage = "Paragraph: tricky\n\nwith lines";
        for mode in [PromptMode::AllInOne, PromptMode::Individual("3".into())] {
            let a = build_multilabel_prompt(passage, &t, &mode).unwrap();
            assert_eq!(a, build_multilabel_prompt(passage, &t, &mode).unwrap());
            assert_eq!(passage_from_prompt(&a), Some(passage));
        }
        let r = build_relevance_prompt(passage).unwrap();
        assert_eq!(passage_from_prompt(&r), Some(passage));
    }
}
