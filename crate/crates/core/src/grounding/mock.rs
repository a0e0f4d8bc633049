//! Deterministic provider that replays scripted tool calls, for tests and
//! offline demos.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{ChatMessage, LlmProvider, ProviderError, Role, ToolCallRequest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedCall {
    pub name: String,
    #[serde(default = "empty_object")]
    pub arguments: Value,
}

fn empty_object() -> Value {
    Value::Object(Default::default())
}

/// One assistant message: either a batch of tool calls or a final reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum ScriptStep {
    Calls { calls: Vec<ScriptedCall> },
    Reply { reply: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub query: String,
    pub steps: Vec<ScriptStep>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptFile {
    #[serde(default)]
    fallback: Option<String>,
    scenarios: Vec<Scenario>,
}

/// Answers each user query from its scenario. The step played is the number
/// of assistant messages since the last user message, so a scenario advances
/// one step per completion request and restarts with every new query.
#[derive(Debug, Clone)]
pub struct ScriptedProvider {
    scenarios: HashMap<String, Vec<ScriptStep>>,
    fallback: String,
}

const DEFAULT_FALLBACK: &str = "I have no scripted answer for that request.";

fn query_key(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

impl ScriptedProvider {
    pub fn new(scenarios: impl IntoIterator<Item = Scenario>) -> Self {
        Self {
            scenarios: scenarios.into_iter().map(|s| (query_key(&s.query), s.steps)).collect(),
            fallback: DEFAULT_FALLBACK.into(),
        }
    }

    pub fn with_fallback(mut self, text: impl Into<String>) -> Self {
        self.fallback = text.into();
        self
    }

    /// Parses `{"fallback"?: "...", "scenarios": [{"query", "steps"}]}`.
    pub fn from_json(text: &str) -> Result<Self, ProviderError> {
        let file: ScriptFile =
            serde_json::from_str(text).map_err(|e| ProviderError::Config(format!("invalid mock script: {e}")))?;
        let mut provider = Self::new(file.scenarios);
        if let Some(f) = file.fallback {
            provider.fallback = f;
        }
        Ok(provider)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ProviderError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ProviderError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }
}

impl LlmProvider for ScriptedProvider {
    fn complete(&self, messages: &[ChatMessage], _tools: &Value) -> Result<ChatMessage, ProviderError> {
        let Some(last_user) = messages.iter().rposition(|m| m.role == Role::User) else {
            return Err(ProviderError::Protocol("transcript has no user message".into()));
        };
        let query = messages[last_user].content.as_deref().unwrap_or_default();
        let step = messages[last_user + 1..].iter().filter(|m| m.role == Role::Assistant).count();
        let Some(steps) = self.scenarios.get(&query_key(query)) else {
            return Ok(ChatMessage::assistant(self.fallback.clone()));
        };
        Ok(match steps.get(step) {
            Some(ScriptStep::Calls { calls }) => ChatMessage::assistant_calls(
                calls
                    .iter()
                    .enumerate()
                    .map(|(i, c)| ToolCallRequest::new(format!("call_{step}_{i}"), &c.name, c.arguments.to_string()))
                    .collect(),
            ),
            Some(ScriptStep::Reply { reply }) => ChatMessage::assistant(reply.clone()),
            None => ChatMessage::assistant(self.fallback.clone()),
        })
    }
}
