//! The dialogue loop: one user turn in, tool calls dispatched until the model
//! answers in prose, one assistant message out.

use std::path::PathBuf;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::artifacts::ArtifactStore;
use crate::llm::{ChatClient, ChatMessage, ChatRequest, ImageAttachment, LlmError, Role};
use crate::retrieval::DEFAULT_CONTEXT_BUDGET;
use crate::session::{image_media_type, Session, SessionError, DEFAULT_MAX_UPLOAD_BYTES};
use crate::tools::{dispatch_tool, tool_specs, ArtifactRef, KnowledgeBase, ToolContext, ToolError};

pub const DEFAULT_MAX_TOOL_ROUNDS: usize = 5;
pub const DEFAULT_HISTORY_TOKEN_BUDGET: usize = 24_000;

#[derive(Debug, Clone)]
pub struct OrchestratorConfig {
    /// LLM calls allowed after the first one within a turn.
    pub max_tool_rounds: usize,
    /// Approximate token budget of the history sent with each request.
    pub history_token_budget: usize,
    /// Character budget of retrieved context returned by the knowledge tool.
    pub context_budget: usize,
    pub max_upload_bytes: usize,
}

impl Default for OrchestratorConfig {
    fn default() -> Self {
        OrchestratorConfig {
            max_tool_rounds: DEFAULT_MAX_TOOL_ROUNDS,
            history_token_budget: DEFAULT_HISTORY_TOKEN_BUDGET,
            context_budget: DEFAULT_CONTEXT_BUDGET,
            max_upload_bytes: DEFAULT_MAX_UPLOAD_BYTES,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TurnError {
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("session `{0}` is busy with another turn")]
    Busy(String),
    #[error("file `{0}` has not been uploaded to this session")]
    FileNotFound(String),
    #[error("file type of `{0}` is not accepted")]
    UnsupportedType(String),
    #[error("file `{name}` exceeds the {limit}-byte upload limit")]
    TooLarge { name: String, limit: usize },
    #[error("could not store upload: {0}")]
    StorageFailed(String),
    #[error(transparent)]
    Upstream(#[from] LlmError),
    #[error("tool {tool} called with invalid `{field}`: {reason}")]
    ToolValidationFailed { tool: String, field: String, reason: String },
    #[error("model called unknown tool `{0}`")]
    UnknownTool(String),
    #[error("model kept calling tools after {rounds} rounds")]
    ToolRoundsExceeded { rounds: usize },
}

impl TurnError {
    /// Stable machine-readable token.
    pub fn code(&self) -> &'static str {
        match self {
            TurnError::UnknownSession(_) => "unknown_session",
            TurnError::Busy(_) => "busy",
            TurnError::FileNotFound(_) => "file_not_found",
            TurnError::UnsupportedType(_) => "unsupported_type",
            TurnError::TooLarge { .. } => "too_large",
            TurnError::StorageFailed(_) => "storage_failed",
            TurnError::Upstream(_) => "upstream_error",
            TurnError::ToolValidationFailed { .. } => "tool_validation_failed",
            TurnError::UnknownTool(_) => "unknown_tool",
            TurnError::ToolRoundsExceeded { .. } => "tool_rounds_exceeded",
        }
    }
}

impl From<SessionError> for TurnError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::UnknownSession(id) => TurnError::UnknownSession(id),
            SessionError::Busy(id) => TurnError::Busy(id),
            SessionError::UnsupportedType(n) => TurnError::UnsupportedType(n),
            SessionError::TooLarge { name, limit } => TurnError::TooLarge { name, limit },
            SessionError::FileNotFound(n) => TurnError::FileNotFound(n),
            SessionError::StorageFailed(m) => TurnError::StorageFailed(m),
        }
    }
}

impl From<ToolError> for TurnError {
    fn from(e: ToolError) -> Self {
        match e {
            ToolError::UnknownTool(n) => TurnError::UnknownTool(n),
            ToolError::ValidationFailed { tool, field, reason } => TurnError::ToolValidationFailed { tool, field, reason },
            ToolError::FileNotFound(n) => TurnError::FileNotFound(n),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Upload {
    pub name: String,
    pub bytes: Vec<u8>,
}

/// One user turn: text, files uploaded with it, and names of files uploaded earlier.
#[derive(Debug, Clone, Default)]
pub struct TurnInput {
    pub text: String,
    pub uploads: Vec<Upload>,
    pub file_refs: Vec<String>,
}

impl TurnInput {
    pub fn text(text: impl Into<String>) -> Self {
        TurnInput { text: text.into(), ..Default::default() }
    }

    pub fn with_refs(text: impl Into<String>, refs: &[&str]) -> Self {
        TurnInput { text: text.into(), file_refs: refs.iter().map(|s| s.to_string()).collect(), ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TurnResponse {
    pub text: String,
    pub artifacts: Vec<ArtifactRef>,
}

/// Appends the names of files relevant to this turn to the user's text.
pub fn with_file_names(text: &str, names: &[String]) -> String {
    if names.is_empty() {
        text.to_string()
    } else {
        format!("{text}\n\n[Uploaded files: {}]", names.join(", "))
    }
}

/// Rough token count of a message: four characters per token.
fn estimate_tokens(m: &ChatMessage) -> usize {
    let calls: usize = m.tool_calls.iter().map(|c| c.name.len() + c.arguments.to_string().len()).sum();
    (m.content.chars().count() + calls) / 4 + 4
}

/// The history to send: the system prompt plus as many of the most recent
/// turns as fit in `budget` tokens. Whole turns are dropped, oldest first,
/// so tool calls and their results stay paired. The last turn is always kept.
pub fn truncate_history(messages: &[ChatMessage], budget: usize) -> Vec<ChatMessage> {
    let total: usize = messages.iter().map(estimate_tokens).sum();
    if total <= budget {
        return messages.to_vec();
    }
    let (head, rest) = match messages.first() {
        Some(m) if m.role == Role::System => messages.split_at(1),
        _ => messages.split_at(0),
    };
    let starts: Vec<usize> = rest
        .iter()
        .enumerate()
        .filter(|(_, m)| m.role == Role::User)
        .map(|(i, _)| i)
        .collect();
    let mut used: usize = head.iter().map(estimate_tokens).sum::<usize>() + rest.iter().map(estimate_tokens).sum::<usize>();
    let mut cut = 0;
    for pair in starts.windows(2) {
        if used <= budget {
            break;
        }
        used -= rest[pair[0]..pair[1]].iter().map(estimate_tokens).sum::<usize>();
        cut = pair[1];
    }
    head.iter().chain(&rest[cut..]).cloned().collect()
}

pub struct Orchestrator {
    llm: Arc<dyn ChatClient>,
    knowledge: Arc<KnowledgeBase>,
    artifacts: ArtifactStore,
    config: OrchestratorConfig,
}

impl Orchestrator {
    pub fn new(llm: Arc<dyn ChatClient>, knowledge: Arc<KnowledgeBase>, artifacts: ArtifactStore, config: OrchestratorConfig) -> Self {
        Orchestrator { llm, knowledge, artifacts, config }
    }

    pub fn artifacts(&self) -> &ArtifactStore {
        &self.artifacts
    }

    pub fn config(&self) -> &OrchestratorConfig {
        &self.config
    }

    /// Runs one turn. The session history is only extended when the turn
    /// completes; on error it is left as it was (uploads are kept).
    pub async fn handle_turn(&self, session: &mut Session, input: TurnInput) -> Result<TurnResponse, TurnError> {
        let mut names: Vec<String> = Vec::new();
        for upload in &input.uploads {
            let name = session.store_upload(&upload.name, &upload.bytes, self.config.max_upload_bytes)?;
            if !names.contains(&name) {
                names.push(name);
            }
        }
        for r in &input.file_refs {
            session.resolve_file(r)?;
            if !names.contains(r) {
                names.push(r.clone());
            }
        }

        let mut user = ChatMessage::user(with_file_names(&input.text, &names));
        user.images = names
            .iter()
            .filter_map(|n| {
                let media_type = image_media_type(n)?;
                let path: PathBuf = session.resolve_file(n).ok()?.to_path_buf();
                Some(ImageAttachment { path, media_type: media_type.to_string() })
            })
            .collect();

        let ctx = ToolContext {
            knowledge: &self.knowledge,
            artifacts: &self.artifacts,
            context_budget: self.config.context_budget,
        };
        let tools = tool_specs();
        let mut turn = vec![user];
        let mut artifacts: Vec<ArtifactRef> = Vec::new();
        let mut tool_failures = 0;

        for round in 0..=self.config.max_tool_rounds {
            let history: Vec<ChatMessage> = session.messages.iter().chain(&turn).cloned().collect();
            let request = ChatRequest {
                messages: truncate_history(&history, self.config.history_token_budget),
                tools: tools.clone(),
            };
            let reply = self.llm.complete(&request).await?;

            if reply.tool_calls.is_empty() {
                let text = reply
                    .content
                    .filter(|c| !c.trim().is_empty())
                    .ok_or_else(|| LlmError::Protocol("reply has neither text nor tool calls".into()))?;
                let mut answer = ChatMessage::assistant(text.clone());
                answer.attachments = artifacts.iter().map(|a| a.artifact_id.clone()).collect();
                turn.push(answer);
                session.messages.append(&mut turn);
                session.last_active = std::time::Instant::now();
                return Ok(TurnResponse { text, artifacts });
            }
            if round == self.config.max_tool_rounds {
                break;
            }

            turn.push(ChatMessage::from_reply(&reply));
            for call in &reply.tool_calls {
                let message = match dispatch_tool(call, session, &ctx).await {
                    Ok(result) => {
                        let ids = result.artifacts.iter().map(|a| a.artifact_id.clone()).collect();
                        artifacts.extend(result.artifacts);
                        ChatMessage::tool(&call.id, result.text, ids)
                    }
                    Err(e) => {
                        tool_failures += 1;
                        if tool_failures > 1 {
                            return Err(e.into());
                        }
                        ChatMessage::tool(&call.id, format!("error: {e}. Correct the call and try again."), Vec::new())
                    }
                };
                turn.push(message);
            }
        }
        Err(TurnError::ToolRoundsExceeded { rounds: self.config.max_tool_rounds })
    }
}
