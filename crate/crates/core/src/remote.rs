//! JSON-over-HTTP plumbing shared by the remote embedder, decomposer and
//! validator clients.

use std::time::Duration;

use serde_json::Value;

use crate::error::{Error, Result};

/// Something that can POST a JSON document and return the JSON reply.
pub trait JsonTransport: Send + Sync {
    fn post_json(&self, url: &str, headers: &[(String, String)], body: &Value)
        -> Result<Value, String>;
}

/// Blocking HTTP transport backed by `ureq`.
#[derive(Debug, Clone)]
pub struct HttpTransport {
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self { agent }
    }
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(30))
    }
}

impl JsonTransport for HttpTransport {
    fn post_json(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &Value,
    ) -> Result<Value, String> {
        let mut req = self.agent.post(url);
        for (k, v) in headers {
            req = req.header(k.as_str(), v.as_str());
        }
        let mut resp = req.send_json(body).map_err(|e| e.to_string())?;
        resp.body_mut()
            .read_json::<Value>()
            .map_err(|e| format!("invalid JSON reply: {e}"))
    }
}

/// Endpoint settings common to every remote client.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EndpointConfig {
    pub url: String,
    #[serde(default)]
    pub api_key: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
}

fn default_attempts() -> u32 {
    3
}

impl EndpointConfig {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            api_key: None,
            model: None,
            max_attempts: default_attempts(),
        }
    }

    /// Reads `{prefix}_ENDPOINT`, `{prefix}_API_KEY` and `{prefix}_MODEL`.
    pub fn from_env(prefix: &str) -> Option<Self> {
        let url = std::env::var(format!("{prefix}_ENDPOINT")).ok()?;
        Some(Self {
            url,
            api_key: std::env::var(format!("{prefix}_API_KEY")).ok(),
            model: std::env::var(format!("{prefix}_MODEL")).ok(),
            max_attempts: default_attempts(),
        })
    }

    pub(crate) fn headers(&self) -> Vec<(String, String)> {
        let mut h = vec![("Content-Type".to_string(), "application/json".to_string())];
        if let Some(key) = &self.api_key {
            h.push(("Authorization".to_string(), format!("Bearer {key}")));
        }
        h
    }
}

/// POSTs `body`, retrying transport failures up to `max_attempts` times.
pub(crate) fn post_with_retry(
    transport: &dyn JsonTransport,
    endpoint: &EndpointConfig,
    body: &Value,
) -> Result<Value> {
    let attempts = endpoint.max_attempts.max(1);
    let headers = endpoint.headers();
    let mut last = String::new();
    for attempt in 1..=attempts {
        match transport.post_json(&endpoint.url, &headers, body) {
            Ok(v) => return Ok(v),
            Err(e) => {
                log::warn!("POST {} attempt {attempt}/{attempts} failed: {e}", endpoint.url);
                last = e;
            }
        }
    }
    Err(Error::Transport {
        attempts,
        message: last,
    })
}

/// Pulls the assistant message text out of a chat-completions reply.
pub(crate) fn chat_content(reply: &Value) -> Option<&str> {
    reply
        .get("choices")?
        .get(0)?
        .get("message")?
        .get("content")?
        .as_str()
}


#[cfg(test)]
mod tests {
    use super::testing::Scripted;
    use super::*;
    use serde_json::json;

    #[test]
    fn retries_until_success() {
        let t = Scripted::new(vec![Err("boom".into()), Ok(json!({"ok": true}))]);
        let v = post_with_retry(&t, &EndpointConfig::new("http://x"), &json!({})).unwrap();
        assert_eq!(v, json!({"ok": true}));
        assert_eq!(t.requests.lock().unwrap().len(), 2);
    }

    #[test]
    fn reports_attempt_count() {
        let t = Scripted::new(vec![]);
        let mut ep = EndpointConfig::new("http://x");
        ep.max_attempts = 4;
        match post_with_retry(&t, &ep, &json!({})) {
            Err(Error::Transport { attempts, .. }) => assert_eq!(attempts, 4),
            other => panic!("unexpected {other:?}"),
        }
    }
}
