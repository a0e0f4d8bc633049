//! Conversation state and the tool-calling loop.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::prompt::render_system_prompt;
use super::tools::{Goal, ToolBox};
use super::{ChatMessage, LlmProvider, ProviderError};

/// Reply recorded when a turn uses up its tool-calling rounds without the
/// model producing a final answer.
pub const CAPPED_ROUNDS_NOTICE: &str =
    "I could not finish within the allowed number of tool calls. Please rephrase or narrow the request.";

/// Transcript and goal of one conversation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatSession {
    pub id: String,
    pub messages: Vec<ChatMessage>,
    pub goal: Option<Goal>,
}

impl ChatSession {
    /// New session whose system prompt lists `tags`.
    pub fn new(id: impl Into<String>, tags: &[String]) -> Self {
        Self { id: id.into(), messages: vec![ChatMessage::system(render_system_prompt(tags))], goal: None }
    }
}

/// Progress notifications emitted while a turn runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TurnEvent {
    ToolCall { id: String, name: String, arguments: String },
    ToolResult { id: String, name: String, payload: Value },
    Goal { goal: Goal },
    Reply { text: String },
}

/// Runs one user turn: the provider is called until it answers without tool
/// calls or `max_rounds` completions have been made.
///
/// The transcript and goal are only updated when the turn completes; on a
/// provider error the session is left exactly as it was, so the same turn
/// can be retried. Events already emitted for the failed attempt are not
/// retracted.
pub fn chat_turn(
    session: &mut ChatSession,
    provider: &dyn LlmProvider,
    toolbox: &ToolBox,
    text: &str,
    max_rounds: usize,
    on_event: &mut dyn FnMut(&TurnEvent),
) -> Result<String, ProviderError> {
    let tools = toolbox.definitions();
    let mut transcript = session.messages.clone();
    let mut goal = session.goal.clone();
    transcript.push(ChatMessage::user(text));

    for _ in 0..max_rounds {
        let message = provider.complete(&transcript, &tools)?;
        if message.tool_calls.is_empty() {
            let reply = message.content.clone().unwrap_or_default();
            transcript.push(message);
            on_event(&TurnEvent::Reply { text: reply.clone() });
            session.messages = transcript;
            session.goal = goal;
            return Ok(reply);
        }
        let calls = message.tool_calls.clone();
        transcript.push(message);
        for call in calls {
            on_event(&TurnEvent::ToolCall {
                id: call.id.clone(),
                name: call.function.name.clone(),
                arguments: call.function.arguments.clone(),
            });
            let outcome = toolbox.execute(&call.function.name, &call.function.arguments);
            transcript.push(ChatMessage::tool(call.id.clone(), outcome.payload.to_string()));
            on_event(&TurnEvent::ToolResult { id: call.id, name: call.function.name, payload: outcome.payload });
            if let Some(g) = outcome.goal {
                on_event(&TurnEvent::Goal { goal: g.clone() });
                goal = Some(g);
            }
        }
    }

    transcript.push(ChatMessage::assistant(CAPPED_ROUNDS_NOTICE));
    on_event(&TurnEvent::Reply { text: CAPPED_ROUNDS_NOTICE.into() });
    session.messages = transcript;
    session.goal = goal;
    Ok(CAPPED_ROUNDS_NOTICE.into())
}
