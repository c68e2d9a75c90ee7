//! Chat client for OpenAI-compatible `/chat/completions` endpoints.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BenchError, ChatClient, PromptCase};

/// Where and how to reach a provider. The API token is never stored in
/// config files; only the name of the environment variable holding it is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub base_url: String,
    pub model: String,
    #[serde(default = "default_token_env")]
    pub token_env: String,
    #[serde(default = "super::default_attempts")]
    pub max_attempts: usize,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub temperature: Option<f64>,
    #[serde(default = "default_backoff_ms")]
    pub retry_backoff_ms: u64,
}

fn default_token_env() -> String {
    "RETLAB_API_TOKEN".to_string()
}

fn default_timeout_secs() -> u64 {
    60
}

fn default_backoff_ms() -> u64 {
    250
}

/// Transient failures (transport errors, 429, 5xx) are retried this many
/// times per `complete` call before giving up.
const TRANSPORT_RETRIES: usize = 3;

pub struct HttpClient {
    config: ProviderConfig,
    token: String,
    agent: ureq::Agent,
}

impl HttpClient {
    pub fn new(config: ProviderConfig) -> Result<Self, BenchError> {
        let token = std::env::var(&config.token_env).map_err(|_| {
            BenchError::Invalid(format!(
                "environment variable {} is not set (it must hold the API token)",
                config.token_env
            ))
        })?;
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build();
        Ok(Self { config, token, agent })
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn request_body(&self, prompt: &str) -> serde_json::Value {
        let mut body = serde_json::json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
        });
        if let Some(t) = self.config.temperature {
            body["temperature"] = serde_json::json!(t);
        }
        body
    }

    fn post_once(&self, body: &serde_json::Value) -> Result<String, Transient> {
        let response = self
            .agent
            .post(&self.endpoint())
            .set("Authorization", &format!("Bearer {}", self.token))
            .send_json(body.clone());
        let response = match response {
            Ok(r) => r,
            Err(ureq::Error::Status(code, r)) if code == 429 || code >= 500 => {
                let detail = r.into_string().unwrap_or_default();
                return Err(Transient::Retry(format!("status {code}: {detail}")));
            }
            Err(ureq::Error::Status(code, r)) => {
                let detail = r.into_string().unwrap_or_default();
                return Err(Transient::Fatal(BenchError::Protocol(format!(
                    "status {code}: {detail}"
                ))));
            }
            Err(ureq::Error::Transport(t)) => return Err(Transient::Retry(t.to_string())),
        };
        let json: serde_json::Value = response
            .into_json()
            .map_err(|e| Transient::Fatal(BenchError::Protocol(format!("bad JSON: {e}"))))?;
        json["choices"][0]["message"]["content"]
            .as_str()
            .map(|s| s.to_string())
            .ok_or_else(|| {
                Transient::Fatal(BenchError::Protocol(format!(
                    "missing choices[0].message.content in {json}"
                )))
            })
    }
}

enum Transient {
    Retry(String),
    Fatal(BenchError),
}

impl ChatClient for HttpClient {
    /// Sends only the prompt text; the rest of the case (answer key,
    /// acceptable set) never leaves the process.
    fn complete(&mut self, case: &PromptCase, _attempt: usize) -> Result<String, BenchError> {
        let body = self.request_body(&case.prompt);
        let mut last = String::new();
        for retry in 0..TRANSPORT_RETRIES {
            match self.post_once(&body) {
                Ok(text) => return Ok(text),
                Err(Transient::Fatal(e)) => return Err(e),
                Err(Transient::Retry(detail)) => {
                    last = detail;
                    if retry + 1 < TRANSPORT_RETRIES {
                        let backoff = self.config.retry_backoff_ms << retry;
                        std::thread::sleep(Duration::from_millis(backoff));
                    }
                }
            }
        }
        Err(BenchError::Transport(format!(
            "{} attempts failed, last error: {last}",
            TRANSPORT_RETRIES
        )))
    }
}
