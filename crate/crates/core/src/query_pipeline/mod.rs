//! Natural-language query decomposition.
//!
//! An instruction is reduced to a primary target plus related targets, each
//! tagged with its spatial relation to the primary. Only targets in a
//! proximity relation survive into the query set that is looked up on the
//! belief map.

mod lexicon;
mod remote;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::embedding::canonical_label;
use crate::error::{Error, Result};

pub use lexicon::Lexicon;
pub use remote::{RemoteDecomposer, DECOMPOSE_PROMPT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    In,
    On,
    Near,
    NextTo,
    Under,
    NotIn,
    FarFrom,
    Unrelated,
}

impl RelationKind {
    pub const ALL: [RelationKind; 8] = [
        RelationKind::In,
        RelationKind::On,
        RelationKind::Near,
        RelationKind::NextTo,
        RelationKind::Under,
        RelationKind::NotIn,
        RelationKind::FarFrom,
        RelationKind::Unrelated,
    ];

    pub fn is_proximity(self) -> bool {
        matches!(
            self,
            RelationKind::In
                | RelationKind::On
                | RelationKind::Near
                | RelationKind::NextTo
                | RelationKind::Under
        )
    }

    /// The relation expressed by "not <self>".
    pub fn negated(self) -> RelationKind {
        match self {
            RelationKind::Near | RelationKind::NextTo => RelationKind::FarFrom,
            RelationKind::In | RelationKind::On | RelationKind::Under => RelationKind::NotIn,
            other => other,
        }
    }
}

/// `kind(subject, object)`; the object is always the primary target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpatialRelation {
    pub kind: RelationKind,
    pub subject: String,
    pub object: String,
}

impl SpatialRelation {
    pub fn new(kind: RelationKind, subject: &str, object: &str) -> Self {
        Self {
            kind,
            subject: canonical_label(subject),
            object: canonical_label(object),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseQuality {
    /// The grammar matched the whole instruction.
    Full,
    /// The instruction stated a need; the primary target was implied.
    Demand,
    /// Nothing matched; the whole text became the primary target.
    Degraded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryDecomposition {
    pub raw: String,
    pub primary: String,
    pub explicit_targets: Vec<String>,
    pub inferred_targets: Vec<String>,
    pub implicit_targets: Vec<String>,
    pub relations: Vec<SpatialRelation>,
    pub proximity_set: Vec<String>,
    pub parse_quality: ParseQuality,
    /// Set when a remote decomposition was replaced by the rule-based one.
    #[serde(default)]
    pub fallback: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl QueryDecomposition {
    /// A decomposition with only a primary target.
    pub fn primary_only(raw: &str, primary: &str) -> Self {
        let primary = canonical_label(primary);
        filter_proximity(Self {
            raw: raw.to_string(),
            primary: primary.clone(),
            explicit_targets: vec![primary],
            inferred_targets: Vec::new(),
            implicit_targets: Vec::new(),
            relations: Vec::new(),
            proximity_set: Vec::new(),
            parse_quality: ParseQuality::Full,
            fallback: false,
            warning: None,
        })
    }

    /// Checks the structural invariants of a filtered decomposition.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Argument(m));
        if self.primary.is_empty() {
            return bad("primary target is empty".into());
        }
        if self.proximity_set.first() != Some(&self.primary) {
            return bad("primary target must lead the proximity set".into());
        }
        let all: BTreeSet<&String> = std::iter::once(&self.primary)
            .chain(&self.explicit_targets)
            .chain(&self.inferred_targets)
            .chain(&self.implicit_targets)
            .collect();
        for t in &self.proximity_set[1..] {
            if !all.contains(t) {
                return bad(format!("{t:?} is in the query set but not among the targets"));
            }
            let rels: Vec<_> = self.relations.iter().filter(|r| &r.subject == t).collect();
            if !rels.iter().any(|r| r.kind.is_proximity()) {
                return bad(format!("{t:?} has no proximity relation to the primary"));
            }
            if rels.iter().any(|r| !r.kind.is_proximity()) {
                return bad(format!("{t:?} has a non-proximity relation to the primary"));
            }
        }
        for r in &self.relations {
            if r.object != self.primary {
                return bad(format!("relation object {:?} is not the primary", r.object));
            }
            if !all.contains(&r.subject) {
                return bad(format!("relation subject {:?} is not a target", r.subject));
            }
        }
        Ok(())
    }
}

/// Keeps the primary target plus every target whose relations to it are all
/// proximity relations. Order: primary, then explicit, inferred and implicit
/// targets, each group alphabetical.
pub fn filter_proximity(mut d: QueryDecomposition) -> QueryDecomposition {
    let is_prox = |t: &String| {
        let mut rels = d.relations.iter().filter(|r| &r.subject == t).peekable();
        rels.peek().is_some() && d.relations.iter().filter(|r| &r.subject == t).all(|r| r.kind.is_proximity())
    };
    let mut seen = BTreeSet::new();
    seen.insert(d.primary.clone());
    let mut set = vec![d.primary.clone()];
    for group in [&d.explicit_targets, &d.inferred_targets, &d.implicit_targets] {
        let mut picked: Vec<&String> = group.iter().filter(|t| !seen.contains(*t) && is_prox(t)).collect();
        picked.sort();
        picked.dedup();
        for t in picked {
            seen.insert(t.clone());
            set.push(t.clone());
        }
    }
    d.proximity_set = set;
    d
}

const DETERMINERS: &[&str] = &[
    "the", "a", "an", "my", "your", "his", "her", "its", "their", "our", "some", "this", "that",
    "these", "those", "any",
];

const COMMANDS: &[&str] = &[
    "please",
    "go to",
    "navigate to",
    "head to",
    "find",
    "get",
    "fetch",
    "locate",
    "search for",
    "look for",
    "bring",
    "show",
    "where is",
    "where's",
    "take me to",
    "can you",
    "could you",
    "me",
];

/// Tokens that may sit between a noun phrase and its preposition.
const FILLERS: &[&str] = &[
    "that", "which", "who", "is", "are", "located", "sitting", "placed", "standing", "lying",
    "kept", "found",
];

/// Tokens that signal a clause rather than a noun phrase.
const CLAUSE_WORDS: &[&str] = &[
    "is", "are", "was", "were", "am", "be", "i", "im", "i'm", "you", "we", "it", "there", "do",
    "does", "can", "could", "should", "would", "will", "need", "want",
];

fn tokenize(text: &str) -> Vec<String> {
    let lowered = text
        .to_lowercase()
        .replace("n't", " not")
        .replace("can not", "cannot");
    lowered
        .split(|c: char| !(c.is_alphanumeric() || c == '\'' || c == '-'))
        .filter(|t| !t.is_empty() && *t != "'")
        .map(|t| t.trim_matches('\'').to_string())
        .filter(|t| !t.is_empty())
        .collect()
}

fn starts_with(tokens: &[String], phrase: &[String]) -> bool {
    tokens.len() >= phrase.len() && tokens.iter().zip(phrase).all(|(a, b)| a == b)
}

fn strip_determiners(tokens: &[String]) -> &[String] {
    let mut t = tokens;
    while let Some(first) = t.first() {
        if DETERMINERS.contains(&first.as_str()) {
            t = &t[1..];
        } else {
            break;
        }
    }
    t
}

/// Matches a (possibly negated, possibly filler-prefixed) preposition at the
/// start of `tokens`, returning the relation and the number of tokens used.
fn match_preposition(
    tokens: &[String],
    table: &[(Vec<String>, RelationKind)],
) -> Option<(RelationKind, usize)> {
    let mut skip = 0;
    while skip < tokens.len() && FILLERS.contains(&tokens[skip].as_str()) {
        skip += 1;
    }
    let rest = &tokens[skip..];
    // Explicit entries first ("not in", "far from"), then generic negation.
    for (phrase, kind) in table {
        if starts_with(rest, phrase) {
            return Some((*kind, skip + phrase.len()));
        }
    }
    if rest.first().map(String::as_str) == Some("not") {
        for (phrase, kind) in table {
            if starts_with(&rest[1..], phrase) {
                return Some((kind.negated(), skip + 1 + phrase.len()));
            }
        }
    }
    None
}

fn demand_objects(tokens: &[String], lexicon: &Lexicon) -> Vec<String> {
    let mut out = Vec::new();
    for (keyword, objects) in &lexicon.demands {
        let phrase: Vec<String> = keyword.split(' ').map(str::to_string).collect();
        if (0..tokens.len()).any(|i| starts_with(&tokens[i..], &phrase)) {
            for o in objects {
                if !out.contains(o) {
                    out.push(o.clone());
                }
            }
        }
    }
    out
}

struct Parsed {
    primary: String,
    phrases: Vec<(RelationKind, String)>,
}

fn parse(tokens: &[String], lexicon: &Lexicon) -> Option<Parsed> {
    let mut t = tokens;
    let commands: Vec<Vec<String>> = COMMANDS
        .iter()
        .map(|c| c.split(' ').map(str::to_string).collect())
        .collect();
    'strip: loop {
        for c in &commands {
            if starts_with(t, c) {
                t = &t[c.len()..];
                continue 'strip;
            }
        }
        break;
    }
    let table = lexicon.preposition_table();

    // Split into head phrase and (relation, phrase) segments.
    let mut segments: Vec<(Option<RelationKind>, Vec<String>)> = vec![(None, Vec::new())];
    let mut i = 0;
    while i < t.len() {
        // A preposition only counts once the current phrase has content.
        let current_nonempty = !strip_determiners(&segments.last().unwrap().1).is_empty();
        if current_nonempty {
            if let Some((kind, used)) = match_preposition(&t[i..], &table) {
                segments.push((Some(kind), Vec::new()));
                i += used;
                continue;
            }
        }
        segments.last_mut().unwrap().1.push(t[i].clone());
        i += 1;
    }

    let phrase_of = |words: &[String]| -> Option<String> {
        let w = strip_determiners(words);
        if w.is_empty() || w.iter().any(|x| CLAUSE_WORDS.contains(&x.as_str())) {
            None
        } else {
            Some(w.join(" "))
        }
    };
    let primary = phrase_of(&segments[0].1)?;
    let mut phrases = Vec::new();
    for (kind, words) in &segments[1..] {
        phrases.push((kind.expect("non-head segments carry a relation"), phrase_of(words)?));
    }
    Some(Parsed { primary, phrases })
}

/// Source of query decompositions.
pub trait Decomposer: Send + Sync {
    fn decompose(&self, text: &str) -> QueryDecomposition;
}

impl Decomposer for Lexicon {
    fn decompose(&self, text: &str) -> QueryDecomposition {
        decompose(text, self)
    }
}

impl Decomposer for RemoteDecomposer {
    fn decompose(&self, text: &str) -> QueryDecomposition {
        RemoteDecomposer::decompose(self, text)
    }
}

/// Rule-based decomposition of an instruction.
///
/// Recognizes `[command] [det] adjectives noun (preposition [det] noun)*`.
/// Places are inferred from the lexicon's container table when the
/// instruction names no proximity target; demand keywords produce implicit
/// targets. Text the grammar cannot parse becomes the primary target as a
/// whole, flagged [`ParseQuality::Degraded`].
pub fn decompose(text: &str, lexicon: &Lexicon) -> QueryDecomposition {
    let tokens = tokenize(text);
    let demands = demand_objects(&tokens, lexicon);
    let parsed = parse(&tokens, lexicon);
    // "X is on fire" states a situation; a relative clause ("X that is on Y")
    // still describes an object.
    let statement = tokens.iter().enumerate().any(|(i, t)| {
        matches!(t.as_str(), "is" | "are" | "am")
            && (i == 0 || !matches!(tokens[i - 1].as_str(), "that" | "which" | "who"))
    });
    let parsed = if !demands.is_empty() && statement { None } else { parsed };

    let mut d = QueryDecomposition {
        raw: text.to_string(),
        primary: String::new(),
        explicit_targets: Vec::new(),
        inferred_targets: Vec::new(),
        implicit_targets: Vec::new(),
        relations: Vec::new(),
        proximity_set: Vec::new(),
        parse_quality: ParseQuality::Full,
        fallback: false,
        warning: None,
    };

    match parsed {
        Some(p) => {
            d.primary = p.primary.clone();
            d.explicit_targets.push(p.primary.clone());
            for (kind, phrase) in &p.phrases {
                if phrase == &d.primary {
                    continue;
                }
                if !d.explicit_targets.contains(phrase) {
                    d.explicit_targets.push(phrase.clone());
                }
                d.relations.push(SpatialRelation::new(*kind, phrase, &d.primary));
            }
            let has_proximity = d.relations.iter().any(|r| r.kind.is_proximity());
            if !has_proximity {
                for place in lexicon.containers_for(&d.primary) {
                    let excluded = d.relations.iter().any(|r| &r.subject == place);
                    if !excluded && !d.inferred_targets.contains(place) {
                        d.inferred_targets.push(place.clone());
                        d.relations.push(SpatialRelation::new(RelationKind::In, place, &d.primary));
                    }
                }
            }
            for obj in demands {
                if obj != d.primary && !d.explicit_targets.contains(&obj) {
                    d.relations.push(SpatialRelation::new(RelationKind::Unrelated, &obj, &d.primary));
                    d.implicit_targets.push(obj);
                }
            }
        }
        None if !demands.is_empty() => {
            d.parse_quality = ParseQuality::Demand;
            d.primary = demands[0].clone();
            for obj in &demands[1..] {
                d.relations.push(SpatialRelation::new(RelationKind::Unrelated, obj, &d.primary));
            }
            d.implicit_targets = demands;
        }
        None => {
            d.parse_quality = ParseQuality::Degraded;
            let whole = canonical_label(&tokens.join(" "));
            d.primary = if whole.is_empty() {
                canonical_label(text)
            } else {
                whole
            };
            d.explicit_targets.push(d.primary.clone());
        }
    }
    filter_proximity(d)
}
