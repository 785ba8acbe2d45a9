use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RelationKind;
use crate::embedding::canonical_label;
use crate::error::{Error, Result};

const DEFAULT_LEXICON: &str = include_str!("../../assets/lexicon.json");

/// Built-in preposition table. Multi-word entries are matched greedily.
const PREPOSITIONS: &[(&str, RelationKind)] = &[
    ("in", RelationKind::In),
    ("inside", RelationKind::In),
    ("inside of", RelationKind::In),
    ("within", RelationKind::In),
    ("on", RelationKind::On),
    ("on top of", RelationKind::On),
    ("atop", RelationKind::On),
    ("near", RelationKind::Near),
    ("by", RelationKind::Near),
    ("close to", RelationKind::Near),
    ("next to", RelationKind::NextTo),
    ("beside", RelationKind::NextTo),
    ("under", RelationKind::Under),
    ("underneath", RelationKind::Under),
    ("below", RelationKind::Under),
    ("not in", RelationKind::NotIn),
    ("outside", RelationKind::NotIn),
    ("outside of", RelationKind::NotIn),
    ("far from", RelationKind::FarFrom),
    ("away from", RelationKind::FarFrom),
];

/// Word lists driving the rule-based decomposer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    /// object → places it is usually found in.
    #[serde(default)]
    pub containers: BTreeMap<String, Vec<String>>,
    /// need keyword → objects that satisfy it.
    #[serde(default)]
    pub demands: BTreeMap<String, Vec<String>>,
    /// Additions to / overrides of the built-in preposition table.
    #[serde(default)]
    pub prepositions: BTreeMap<String, RelationKind>,
}

impl Default for Lexicon {
    fn default() -> Self {
        Self::from_json(DEFAULT_LEXICON).expect("bundled lexicon is valid")
    }
}

impl Lexicon {
    pub fn empty() -> Self {
        Self {
            containers: BTreeMap::new(),
            demands: BTreeMap::new(),
            prepositions: BTreeMap::new(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: Lexicon = serde_json::from_str(text)?;
        Ok(raw.canonicalized())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw: Lexicon = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
        Ok(raw.canonicalized())
    }

    fn canonicalized(self) -> Self {
        let canon_list = |v: Vec<String>| v.iter().map(|s| canonical_label(s)).collect::<Vec<_>>();
        Self {
            containers: self
                .containers
                .into_iter()
                .map(|(k, v)| (canonical_label(&k), canon_list(v)))
                .collect(),
            demands: self
                .demands
                .into_iter()
                .map(|(k, v)| (canonical_label(&k), canon_list(v)))
                .collect(),
            prepositions: self
                .prepositions
                .into_iter()
                .map(|(k, v)| (canonical_label(&k), v))
                .collect(),
        }
    }

    /// Built-in table merged with this lexicon's overrides, as token lists
    /// sorted longest first.
    pub(crate) fn preposition_table(&self) -> Vec<(Vec<String>, RelationKind)> {
        let mut table: BTreeMap<String, RelationKind> = PREPOSITIONS
            .iter()
            .map(|(p, k)| (p.to_string(), *k))
            .collect();
        table.extend(self.prepositions.iter().map(|(k, v)| (k.clone(), *v)));
        let mut out: Vec<(Vec<String>, RelationKind)> = table
            .into_iter()
            .map(|(p, k)| (p.split(' ').map(str::to_string).collect(), k))
            .collect();
        out.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        out
    }

    /// Places associated with `target`, trying the full phrase then its head noun.
    pub fn containers_for(&self, target: &str) -> &[String] {
        if let Some(v) = self.containers.get(target) {
            return v;
        }
        target
            .rsplit(' ')
            .next()
            .and_then(|head| self.containers.get(head))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }
}
