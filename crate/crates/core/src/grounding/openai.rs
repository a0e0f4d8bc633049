//! Provider for OpenAI-compatible chat-completions endpoints.

use serde::Deserialize;
use serde_json::{json, Value};

use super::{ChatMessage, LlmProvider, LlmProviderConfig, ProviderError};

pub struct OpenAiProvider {
    config: LlmProviderConfig,
    token: String,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct Completion {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChatMessage,
}

impl OpenAiProvider {
    /// Reads the API token from the environment variable named in `config`.
    pub fn from_env(config: LlmProviderConfig) -> Result<Self, ProviderError> {
        config.validate()?;
        let token = std::env::var(&config.token_env)
            .map_err(|_| ProviderError::Config(format!("environment variable {} is not set", config.token_env)))?;
        Ok(Self::with_token(config, token))
    }

    pub fn with_token(config: LlmProviderConfig, token: impl Into<String>) -> Self {
        Self { config, token: token.into(), agent: ureq::Agent::new_with_defaults() }
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.config.endpoint.trim_end_matches('/'))
    }
}

fn map_error(e: ureq::Error) -> ProviderError {
    match e {
        ureq::Error::StatusCode(code @ (401 | 403 | 404)) => {
            ProviderError::Config(format!("endpoint rejected the request with status {code}"))
        }
        ureq::Error::StatusCode(code) if code == 429 || code >= 500 => {
            ProviderError::Unreachable(format!("status {code}"))
        }
        ureq::Error::StatusCode(code) => ProviderError::Protocol(format!("status {code}")),
        other => ProviderError::Unreachable(other.to_string()),
    }
}

impl LlmProvider for OpenAiProvider {
    fn complete(&self, messages: &[ChatMessage], tools: &Value) -> Result<ChatMessage, ProviderError> {
        let body = json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": messages,
            "tools": tools,
        });
        let mut response = self
            .agent
            .post(&self.url())
            .header("Authorization", &format!("Bearer {}", self.token))
            .header("Content-Type", "application/json")
            .send(body.to_string().as_bytes())
            .map_err(map_error)?;
        let text = response.body_mut().read_to_string().map_err(map_error)?;
        let completion: Completion =
            serde_json::from_str(&text).map_err(|e| ProviderError::Protocol(format!("unexpected response: {e}")))?;
        completion
            .choices
            .into_iter()
            .next()
            .map(|c| c.message)
            .ok_or_else(|| ProviderError::Protocol("response has no choices".into()))
    }
}
