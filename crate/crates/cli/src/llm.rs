//! Blocking chat-completions client used for context embedding.

use std::time::Duration;

use serde_json::{json, Value};
use socnav_core::context::{ClientError, LlmClient};

use crate::config::LlmConfig;

pub struct ChatClient {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    api_key: Option<String>,
    temperature: f64,
}

impl ChatClient {
    /// Reads the API key from the configured environment variable.
    pub fn from_config(cfg: &LlmConfig) -> Self {
        let key = std::env::var(&cfg.api_key_env).ok().filter(|k| !k.is_empty());
        Self::new(cfg, key)
    }

    pub fn new(cfg: &LlmConfig, api_key: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_s)))
            .http_status_as_error(false)
            .build()
            .new_agent();
        Self { agent, endpoint: cfg.endpoint.clone(), model: cfg.model.clone(), api_key, temperature: cfg.temperature }
    }
}

/// Text of the first choice in a chat-completions response.
pub fn reply_text(body: &Value) -> Option<&str> {
    body.pointer("/choices/0/message/content").and_then(Value::as_str)
}

impl LlmClient for ChatClient {
    fn complete(&self, prompt: &str) -> Result<String, ClientError> {
        let body = json!({
            "model": self.model,
            "temperature": self.temperature,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut req = self.agent.post(&self.endpoint);
        if let Some(k) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {k}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| ClientError(e.to_string()))?;
        let status = resp.status();
        let text = resp.body_mut().read_to_string().map_err(|e| ClientError(e.to_string()))?;
        if !status.is_success() {
            return Err(ClientError(format!("HTTP {status}: {}", text.chars().take(300).collect::<String>())));
        }
        let v: Value = serde_json::from_str(&text).map_err(|e| ClientError(format!("invalid JSON reply: {e}")))?;
        reply_text(&v).map(str::to_string).ok_or_else(|| ClientError("reply has no choices[0].message.content".into()))
    }
}
