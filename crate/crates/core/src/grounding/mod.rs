//! Grounding a chat model in a tag map.
//!
//! The model sees the map's unique tags in its system prompt and can call
//! tools to localize tags, compare distances between proposals, and mark a
//! proposal as the navigation goal. [`chat_turn`] runs the tool-calling loop
//! against any [`LlmProvider`].

mod mock;
mod openai;
mod prompt;
mod session;
mod tools;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use mock::{Scenario, ScriptStep, ScriptedCall, ScriptedProvider};
pub use openai::OpenAiProvider;
pub use prompt::{render_system_prompt, SYSTEM_PROMPT_HEADER};
pub use session::{chat_turn, ChatSession, TurnEvent, CAPPED_ROUNDS_NOTICE};
pub use tools::{DistanceMode, Goal, GoalRef, ToolBox, ToolOutcome, TOOL_NAMES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

/// The function part of a tool call; `arguments` is JSON text, as the
/// model produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionCall {
    pub name: String,
    pub arguments: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCallRequest {
    pub id: String,
    #[serde(rename = "type", default = "function_type")]
    pub kind: String,
    pub function: FunctionCall,
}

fn function_type() -> String {
    "function".into()
}

impl ToolCallRequest {
    pub fn new(id: impl Into<String>, name: impl Into<String>, arguments: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            kind: function_type(),
            function: FunctionCall { name: name.into(), arguments: arguments.into() },
        }
    }
}

/// One transcript entry, in the chat-completions wire shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    #[serde(default)]
    pub content: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCallRequest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
}

impl ChatMessage {
    fn plain(role: Role, text: impl Into<String>) -> Self {
        Self { role, content: Some(text.into()), tool_calls: Vec::new(), tool_call_id: None }
    }

    pub fn system(text: impl Into<String>) -> Self {
        Self::plain(Role::System, text)
    }

    pub fn user(text: impl Into<String>) -> Self {
        Self::plain(Role::User, text)
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self::plain(Role::Assistant, text)
    }

    pub fn assistant_calls(calls: Vec<ToolCallRequest>) -> Self {
        Self { role: Role::Assistant, content: None, tool_calls: calls, tool_call_id: None }
    }

    pub fn tool(call_id: impl Into<String>, payload: impl Into<String>) -> Self {
        Self { role: Role::Tool, content: Some(payload.into()), tool_calls: Vec::new(), tool_call_id: Some(call_id.into()) }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    /// Network or server failure; the turn can be retried.
    #[error("provider unreachable: {0}")]
    Unreachable(String),
    /// The provider answered with something that is not a chat completion.
    #[error("provider protocol error: {0}")]
    Protocol(String),
    #[error("provider configuration error: {0}")]
    Config(String),
}

impl ProviderError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, Self::Unreachable(_))
    }
}

/// A chat model with tool calling.
pub trait LlmProvider: Send + Sync {
    /// Next assistant message for the transcript. `tools` is the JSON array
    /// of tool definitions in the chat-completions format.
    fn complete(&self, messages: &[ChatMessage], tools: &serde_json::Value) -> Result<ChatMessage, ProviderError>;
}

/// How to reach an OpenAI-compatible chat-completions endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmProviderConfig {
    /// Base URL; `/chat/completions` is appended.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API token.
    pub token_env: String,
    /// Tool-calling rounds allowed per user turn.
    pub max_rounds: usize,
    pub temperature: f64,
}

impl Default for LlmProviderConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1".into(),
            model: "gpt-4".into(),
            token_env: "OPENAI_API_KEY".into(),
            max_rounds: 8,
            temperature: 0.0,
        }
    }
}

impl LlmProviderConfig {
    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.max_rounds == 0 {
            return Err(ProviderError::Config("max_rounds must be at least 1".into()));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(ProviderError::Config("temperature must be non-negative".into()));
        }
        Ok(())
    }
}
