//! HTTP plumbing shared by the chat and embedding clients.

use std::time::Duration;

/// Failure reported by a remote model endpoint.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EndpointError {
    /// Worth retrying: timeouts, connection errors, 429 and 5xx responses.
    #[error("transient endpoint failure: {0}")]
    Transient(String),
    /// The model declined to answer (content filter or explicit refusal).
    #[error("endpoint refused: {0}")]
    Refused(String),
    #[error("endpoint error: {0}")]
    Fatal(String),
}

impl EndpointError {
    pub fn is_transient(&self) -> bool {
        matches!(self, EndpointError::Transient(_))
    }
}

pub const API_BASE_VAR: &str = "MAXSIM_API_BASE";
pub const API_KEY_VAR: &str = "MAXSIM_API_KEY";
pub const EMBED_BASE_VAR: &str = "MAXSIM_EMBED_BASE";
pub const EMBED_KEY_VAR: &str = "MAXSIM_EMBED_KEY";

#[derive(Debug, Clone)]
pub struct HttpConfig {
    /// e.g. `http://localhost:8000/v1`
    pub base_url: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        HttpConfig { base_url: base_url.into(), api_key: None, timeout: Duration::from_secs(300) }
    }

    /// Read base URL and key from the given environment variables.
    pub fn from_env(base_var: &str, key_var: &str) -> Option<Self> {
        let base = std::env::var(base_var).ok().filter(|s| !s.trim().is_empty())?;
        let mut cfg = HttpConfig::new(base);
        cfg.api_key = std::env::var(key_var).ok().filter(|s| !s.is_empty());
        Some(cfg)
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}/{}", self.base_url.trim_end_matches('/'), path.trim_start_matches('/'))
    }

    pub(crate) fn agent(&self) -> ureq::Agent {
        ureq::AgentBuilder::new().timeout(self.timeout).build()
    }

    pub(crate) fn post_json(
        &self,
        agent: &ureq::Agent,
        path: &str,
        body: &serde_json::Value,
    ) -> Result<serde_json::Value, EndpointError> {
        let mut req = agent.post(&self.url(path)).set("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        match req.send_json(body) {
            Ok(resp) => resp
                .into_json::<serde_json::Value>()
                .map_err(|e| EndpointError::Transient(format!("unreadable response body: {e}"))),
            Err(ureq::Error::Status(code, resp)) => {
                let text = resp.into_string().unwrap_or_default();
                let msg = format!("HTTP {code}: {}", text.chars().take(500).collect::<String>());
                if code == 408 || code == 429 || code >= 500 {
                    Err(EndpointError::Transient(msg))
                } else {
                    Err(EndpointError::Fatal(msg))
                }
            }
            Err(ureq::Error::Transport(t)) => Err(EndpointError::Transient(t.to_string())),
        }
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classifies_status_codes() {
        let (base, log, h) = testing::serve(vec![
            (503, "{}".into()),
            (400, "{\"error\":\"bad\"}".into()),
            (200, "{\"ok\":true}".into()),
        ]);
        let mut cfg = HttpConfig::new(format!("{base}/v1/"));
        cfg.api_key = Some("k".into());
        let agent = cfg.agent();
        let body = serde_json::json!({"x": 1});
        assert!(matches!(cfg.post_json(&agent, "a", &body), Err(EndpointError::Transient(_))));
        assert!(matches!(cfg.post_json(&agent, "a", &body), Err(EndpointError::Fatal(_))));
        assert_eq!(cfg.post_json(&agent, "/a", &body).unwrap(), serde_json::json!({"ok": true}));
        h.join().unwrap();
        let log = log.lock().unwrap();
        assert_eq!(log[2].path, "/v1/a");
        assert!(log[2].headers.iter().any(|h| h == "Authorization: Bearer k"));
        assert_eq!(log[2].body, body);
    }
}
