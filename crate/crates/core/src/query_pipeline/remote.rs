use std::sync::Arc;

use serde::Deserialize;
use serde_json::{json, Value};

use super::{decompose, filter_proximity, Lexicon, ParseQuality, QueryDecomposition, RelationKind, SpatialRelation};
use crate::embedding::canonical_label;
use crate::error::{Error, Result};
use crate::remote::{chat_content, post_with_retry, EndpointConfig, HttpTransport, JsonTransport};

/// Versioned system prompt sent with every remote decomposition request.
pub const DECOMPOSE_PROMPT: &str = include_str!("../../assets/decompose_prompt_v1.txt");

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireRelation {
    kind: RelationKind,
    subject: String,
    #[serde(default)]
    object: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireDecomposition {
    primary: String,
    #[serde(default)]
    explicit_targets: Vec<String>,
    #[serde(default)]
    inferred_targets: Vec<String>,
    #[serde(default)]
    implicit_targets: Vec<String>,
    #[serde(default)]
    relations: Vec<WireRelation>,
}

/// LVLM-backed decomposer with rule-based fallback.
pub struct RemoteDecomposer {
    endpoint: EndpointConfig,
    transport: Arc<dyn JsonTransport>,
    lexicon: Lexicon,
}

impl RemoteDecomposer {
    pub fn new(endpoint: EndpointConfig, lexicon: Lexicon) -> Self {
        Self::with_transport(endpoint, lexicon, Arc::new(HttpTransport::default()))
    }

    pub fn with_transport(
        endpoint: EndpointConfig,
        lexicon: Lexicon,
        transport: Arc<dyn JsonTransport>,
    ) -> Self {
        Self {
            endpoint,
            transport,
            lexicon,
        }
    }

    pub fn request_body(&self, text: &str) -> Value {
        json!({
            "model": self.endpoint.model.clone().unwrap_or_default(),
            "messages": [
                {"role": "system", "content": DECOMPOSE_PROMPT},
                {"role": "user", "content": text},
            ],
            "response_format": {"type": "json_object"},
        })
    }

    /// Asks the endpoint; on transport failure or an invalid reply returns
    /// the rule-based decomposition with `fallback` set.
    pub fn decompose(&self, text: &str) -> QueryDecomposition {
        match self.try_remote(text) {
            Ok(d) => d,
            Err(e) => {
                log::warn!("remote decomposition failed, using rule-based parser: {e}");
                let mut d = decompose(text, &self.lexicon);
                d.fallback = true;
                d.warning = Some(e.to_string());
                d
            }
        }
    }

    fn try_remote(&self, text: &str) -> Result<QueryDecomposition> {
        let reply = post_with_retry(self.transport.as_ref(), &self.endpoint, &self.request_body(text))?;
        let content = chat_content(&reply)
            .ok_or_else(|| Error::Argument("reply has no choices[0].message.content".into()))?;
        parse_reply(text, content)
    }
}

/// Parses the strict JSON answer and checks the decomposition invariants.
pub(crate) fn parse_reply(raw: &str, content: &str) -> Result<QueryDecomposition> {
    let wire: WireDecomposition = serde_json::from_str(content.trim())
        .map_err(|e| Error::Argument(format!("schema violation: {e}")))?;
    let primary = canonical_label(&wire.primary);
    if primary.is_empty() {
        return Err(Error::Argument("reply names no primary target".into()));
    }
    let canon = |v: Vec<String>| -> Vec<String> {
        v.iter().map(|s| canonical_label(s)).filter(|s| !s.is_empty()).collect()
    };
    let mut relations = Vec::with_capacity(wire.relations.len());
    for r in wire.relations {
        if let Some(obj) = &r.object {
            if canonical_label(obj) != primary {
                return Err(Error::Argument(format!(
                    "relation object {obj:?} is not the primary target"
                )));
            }
        }
        let subject = canonical_label(&r.subject);
        if subject.is_empty() {
            return Err(Error::Argument("relation with empty subject".into()));
        }
        relations.push(SpatialRelation::new(r.kind, &subject, &primary));
    }
    let d = filter_proximity(QueryDecomposition {
        raw: raw.to_string(),
        primary,
        explicit_targets: canon(wire.explicit_targets),
        inferred_targets: canon(wire.inferred_targets),
        implicit_targets: canon(wire.implicit_targets),
        relations,
        proximity_set: Vec::new(),
        parse_quality: ParseQuality::Full,
        fallback: false,
        warning: None,
    });
    d.validate()?;
    Ok(d)
}
