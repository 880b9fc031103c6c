//! Two-level concern taxonomy and the label vectors aligned to it.
//!
//! A [`Taxonomy`] is loaded from a TOML document (see `data/vaxconcerns.toml`)
//! and kept in canonical order: every parent is followed by its children,
//! sorted numerically by dotted id (`1, 1.1, 1.2, 1.3, 2, 2.1, ...`). A
//! [`LabelVector`] holds one independent present/absent bit per node in that
//! order.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The bundled default taxonomy file.
pub const DEFAULT_TAXONOMY_TOML: &str = include_str!("../data/vaxconcerns.toml");

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TaxonomyError {
    #[error("taxonomy file does not parse: {0}")]
    Parse(String),
    #[error("taxonomy version string is missing or empty")]
    MissingVersion,
    #[error("taxonomy contains no nodes")]
    Empty,
    #[error("node `{0}`: malformed id (expected `N` or `N.M` with positive integers)")]
    MalformedId(String),
    #[error("node `{id}`: parent `{parent}` does not exist")]
    MissingParent { id: String, parent: String },
    #[error("node `{0}`: duplicate id")]
    DuplicateId(String),
    #[error("node `{0}`: empty definition")]
    EmptyDefinition(String),
    #[error("node `{0}`: empty name")]
    EmptyName(String),
    #[error("unknown node id `{0}`")]
    UnknownNode(String),
    #[error("label vector has length {actual}, taxonomy has {expected} nodes")]
    LengthMismatch { expected: usize, actual: usize },
}

/// Parsed dotted node id: `(parent number, optional child number)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeKey {
    pub major: u32,
    pub minor: Option<u32>,
}

impl NodeKey {
    pub fn parse(id: &str) -> Option<NodeKey> {
        fn positive(s: &str) -> Option<u32> {
            let first = s.chars().next()?;
            if !('1'..='9').contains(&first) || !s.chars().all(|c| c.is_ascii_digit()) {
                return None;
            }
            s.parse().ok()
        }
        match id.split_once('.') {
            None => Some(NodeKey { major: positive(id)?, minor: None }),
            Some((a, b)) => Some(NodeKey { major: positive(a)?, minor: Some(positive(b)?) }),
        }
    }

    pub fn is_parent(&self) -> bool {
        self.minor.is_none()
    }
}

impl fmt::Display for NodeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.minor {
            None => write!(f, "{}", self.major),
            Some(m) => write!(f, "{}.{}", self.major, m),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyNode {
    pub id: String,
    pub name: String,
    pub definition: String,
    #[serde(skip)]
    pub parent_id: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub placeholder: bool,
}

#[derive(Deserialize, Serialize)]
struct TaxonomyFile {
    #[serde(default)]
    version: String,
    #[serde(default, rename = "node")]
    nodes: Vec<TaxonomyNode>,
}

/// Validated taxonomy in canonical order. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    version: String,
    nodes: Vec<TaxonomyNode>,
    index: HashMap<String, usize>,
    parent_index: Vec<Option<usize>>,
}

impl Taxonomy {
    /// Parses and validates a taxonomy document.
    pub fn from_toml(source: &str) -> Result<Taxonomy, TaxonomyError> {
        let file: TaxonomyFile =
            toml::from_str(source).map_err(|e| TaxonomyError::Parse(e.to_string()))?;
        Taxonomy::from_nodes(file.version, file.nodes)
    }

    /// The bundled two-level vaccine concern taxonomy (5 parents, 19 children).
    pub fn default_vaccine() -> Taxonomy {
        Taxonomy::from_toml(DEFAULT_TAXONOMY_TOML).expect("bundled taxonomy is valid")
    }

    pub fn from_nodes(
        version: impl Into<String>,
        nodes: Vec<TaxonomyNode>,
    ) -> Result<Taxonomy, TaxonomyError> {
        let version = version.into();
        if version.trim().is_empty() {
            return Err(TaxonomyError::MissingVersion);
        }
        if nodes.is_empty() {
            return Err(TaxonomyError::Empty);
        }
        let mut keyed = Vec::with_capacity(nodes.len());
        let mut seen = BTreeSet::new();
        for mut node in nodes {
            let key =
                NodeKey::parse(&node.id).ok_or_else(|| TaxonomyError::MalformedId(node.id.clone()))?;
            if !seen.insert(key) {
                return Err(TaxonomyError::DuplicateId(node.id));
            }
            if node.definition.trim().is_empty() {
                return Err(TaxonomyError::EmptyDefinition(node.id));
            }
            if node.name.trim().is_empty() {
                return Err(TaxonomyError::EmptyName(node.id));
            }
            node.parent_id = key.minor.map(|_| key.major.to_string());
            keyed.push((key, node));
        }
        for (key, node) in &keyed {
            if key.minor.is_some() {
                let parent = NodeKey { major: key.major, minor: None };
                if !seen.contains(&parent) {
                    return Err(TaxonomyError::MissingParent {
                        id: node.id.clone(),
                        parent: parent.to_string(),
                    });
                }
            }
        }
        keyed.sort_by_key(|(k, _)| (k.major, k.minor.unwrap_or(0)));
        let nodes: Vec<TaxonomyNode> = keyed.into_iter().map(|(_, n)| n).collect();
        let index: HashMap<String, usize> =
            nodes.iter().enumerate().map(|(i, n)| (n.id.clone(), i)).collect();
        let parent_index = nodes
            .iter()
            .map(|n| n.parent_id.as_ref().map(|p| index[p]))
            .collect();
        Ok(Taxonomy { version, nodes, index, parent_index })
    }

    /// Serializes back to the TOML file format, in canonical order.
    pub fn to_toml(&self) -> String {
        let file = TaxonomyFile { version: self.version.clone(), nodes: self.nodes.clone() };
        toml::to_string(&file).expect("taxonomy serializes")
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[TaxonomyNode] {
        &self.nodes
    }

    pub fn node(&self, index: usize) -> &TaxonomyNode {
        &self.nodes[index]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn parent_of(&self, index: usize) -> Option<usize> {
        self.parent_index[index]
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> + '_ {
        self.nodes.iter().map(|n| n.id.as_str())
    }

    pub fn parents(&self) -> impl Iterator<Item = (usize, &TaxonomyNode)> + '_ {
        self.nodes.iter().enumerate().filter(|(_, n)| n.parent_id.is_none())
    }

    pub fn children_of(&self, parent: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&i| self.parent_index[i] == Some(parent))
    }

    fn check_len(&self, len: usize) -> Result<(), TaxonomyError> {
        if len != self.len() {
            return Err(TaxonomyError::LengthMismatch { expected: self.len(), actual: len });
        }
        Ok(())
    }

    /// Sets every parent of a positive child. Parents without positive
    /// children are left as they are.
    pub fn hierarchy_closure(&self, v: &LabelVector) -> Result<LabelVector, TaxonomyError> {
        self.check_len(v.len())?;
        let mut out = v.clone();
        for (i, parent) in self.parent_index.iter().enumerate() {
            if let (true, Some(p)) = (v.get(i), parent) {
                out.set(*p, true);
            }
        }
        Ok(out)
    }

    /// Ids of the positive entries, in canonical order.
    pub fn label_set(&self, v: &LabelVector) -> Result<Vec<String>, TaxonomyError> {
        self.check_len(v.len())?;
        Ok(v.positives().map(|i| self.nodes[i].id.clone()).collect())
    }

    /// Inverse of [`Taxonomy::label_set`].
    pub fn vector_from_ids<I, S>(&self, ids: I) -> Result<LabelVector, TaxonomyError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v = LabelVector::zeros(self.len());
        for id in ids {
            let id = id.as_ref();
            let i = self.index_of(id).ok_or_else(|| TaxonomyError::UnknownNode(id.to_string()))?;
            v.set(i, true);
        }
        Ok(v)
    }
}

/// One present/absent bit per taxonomy node, in canonical node order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelVector {
    values: Vec<bool>,
}

impl LabelVector {
    pub fn zeros(len: usize) -> Self {
        LabelVector { values: vec![false; len] }
    }

    pub fn ones(len: usize) -> Self {
        LabelVector { values: vec![true; len] }
    }

    pub fn from_bools(values: Vec<bool>) -> Self {
        LabelVector { values }
    }

    /// Builds from 0/1 integers; any other value is rejected.
    pub fn from_bits(bits: &[u8]) -> Option<Self> {
        bits.iter()
            .map(|&b| match b {
                0 => Some(false),
                1 => Some(true),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()
            .map(|values| LabelVector { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.values[i]
    }

    pub fn set(&mut self, i: usize, value: bool) {
        self.values[i] = value;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.values.iter().copied()
    }

    pub fn positives(&self) -> impl Iterator<Item = usize> + '_ {
        self.values.iter().enumerate().filter(|(_, v)| **v).map(|(i, _)| i)
    }

    pub fn count_positive(&self) -> usize {
        self.values.iter().filter(|v| **v).count()
    }

    pub fn any(&self) -> bool {
        self.values.iter().any(|v| *v)
    }

    /// Pointwise `self <= other`.
    pub fn is_subset_of(&self, other: &LabelVector) -> bool {
        self.len() == other.len() && self.iter().zip(other.iter()).all(|(a, b)| !a || b)
    }

    pub fn to_bits(&self) -> Vec<u8> {
        self.values.iter().map(|&v| v as u8).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(id: &str) -> TaxonomyNode {
        TaxonomyNode {
            id: id.into(),
            name: format!("n{id}"),
            definition: "d".into(),
            parent_id: None,
            placeholder: false,
        }
    }

    #[test]
    fn default_has_five_parents_and_nineteen_children() {
        let t = Taxonomy::default_vaccine();
        assert_eq!(t.len(), 24);
        assert_eq!(t.parents().count(), 5);
        assert_eq!(t.nodes().iter().filter(|n| n.parent_id.is_some()).count(), 19);
        let ids: Vec<&str> = t.ids().collect();
        assert_eq!(ids[0], "1");
        assert_eq!(ids[1], "1.1");
        assert_eq!(ids[4], "2");
        assert_eq!(ids[23], "5.4");
    }

    #[test]
    fn single_node_taxonomy() {
        let t = Taxonomy::from_toml("version = \"v\"\n[[node]]\nid = \"1\"\nname = \"a\"\ndefinition = \"b\"\n")
            .unwrap();
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn validation_errors_name_the_node() {
        let err = Taxonomy::from_nodes("v", vec![node("2.1")]).unwrap_err();
        assert_eq!(err, TaxonomyError::MissingParent { id: "2.1".into(), parent: "2".into() });
        assert_eq!(
            Taxonomy::from_nodes("v", vec![node("1"), node("1")]).unwrap_err(),
            TaxonomyError::DuplicateId("1".into())
        );
        for bad in ["0", "1.0", "01", "1.2.3", "a", "", "1."] {
            assert_eq!(
                Taxonomy::from_nodes("v", vec![node(bad)]).unwrap_err(),
                TaxonomyError::MalformedId(bad.into()),
                "{bad}"
            );
        }
        let mut n = node("1");
        n.definition = "  ".into();
        assert_eq!(
            Taxonomy::from_nodes("v", vec![n]).unwrap_err(),
            TaxonomyError::EmptyDefinition("1".into())
        );
        assert_eq!(Taxonomy::from_nodes("", vec![node("1")]).unwrap_err(), TaxonomyError::MissingVersion);
    }

    #[test]
    fn canonical_order_is_numeric() {
        let t = Taxonomy::from_nodes(
            "v",
            vec![node("10"), node("2.10"), node("2"), node("2.2"), node("1")],
        )
        .unwrap();
        let ids: Vec<&str> = t.ids().collect();
        assert_eq!(ids, ["1", "2", "2.2", "2.10", "10"]);
        assert_eq!(t.node(3).parent_id.as_deref(), Some("2"));
    }

    #[test]
    fn closure_examples() {
        let t = Taxonomy::default_vaccine();
        let zeros = LabelVector::zeros(24);
        assert_eq!(t.hierarchy_closure(&zeros).unwrap(), zeros);

        let v = t.vector_from_ids(["1.2"]).unwrap();
        assert_eq!(t.label_set(&t.hierarchy_closure(&v).unwrap()).unwrap(), ["1", "1.2"]);

        let parent_only = t.vector_from_ids(["2"]).unwrap();
        assert_eq!(t.hierarchy_closure(&parent_only).unwrap(), parent_only);

        assert_eq!(
            t.hierarchy_closure(&LabelVector::zeros(3)).unwrap_err(),
            TaxonomyError::LengthMismatch { expected: 24, actual: 3 }
        );
    }

    #[test]
    fn label_set_examples() {
        let t = Taxonomy::default_vaccine();
        assert!(t.label_set(&LabelVector::zeros(24)).unwrap().is_empty());
        let v = t.vector_from_ids(["3.2", "3"]).unwrap();
        assert_eq!(t.label_set(&v).unwrap(), ["3", "3.2"]);
        let all = t.label_set(&LabelVector::ones(24)).unwrap();
        let from_file: Vec<String> = {
            let raw: toml::Value = toml::from_str(DEFAULT_TAXONOMY_TOML).unwrap();
            let mut ids: Vec<String> = raw["node"]
                .as_array()
                .unwrap()
                .iter()
                .map(|n| n["id"].as_str().unwrap().to_string())
                .collect();
            ids.sort_by_key(|id| NodeKey::parse(id).unwrap());
            ids
        };
        assert_eq!(all, from_file);
        assert!(matches!(t.vector_from_ids(["9.9"]), Err(TaxonomyError::UnknownNode(_))));
    }

    #[test]
    fn toml_round_trip() {
        let t = Taxonomy::default_vaccine();
        let again = Taxonomy::from_toml(&t.to_toml()).unwrap();
        assert_eq!(t, again);
    }

    #[test]
    fn from_bits_rejects_non_binary() {
        assert!(LabelVector::from_bits(&[0, 1, 2]).is_none());
        assert_eq!(LabelVector::from_bits(&[0, 1]).unwrap().to_bits(), [0, 1]);
    }
}
