//! Chat model interface: message types, tool declarations, an HTTP client for
//! the chat-completions wire format with tool calling, and a scripted client
//! for offline runs.

use std::collections::VecDeque;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("upstream model request failed: {0}")]
    Upstream(String),
    #[error("upstream model returned an unusable response: {0}")]
    Protocol(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

/// A tool invocation requested by the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub id: String,
    pub name: String,
    /// Parsed arguments. Arguments that were not valid JSON are kept as a
    /// JSON string so validation can report them.
    pub arguments: Value,
}

/// An image sent alongside a user message to a vision-capable backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageAttachment {
    pub path: PathBuf,
    pub media_type: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
    /// Artifact ids produced by or attached to this message.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attachments: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub images: Vec<ImageAttachment>,
}

impl ChatMessage {
    fn plain(role: Role, content: impl Into<String>) -> Self {
        ChatMessage {
            role,
            content: content.into(),
            tool_calls: Vec::new(),
            tool_call_id: None,
            attachments: Vec::new(),
            images: Vec::new(),
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::plain(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::plain(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::plain(Role::Assistant, content)
    }

    pub fn tool(tool_call_id: impl Into<String>, content: impl Into<String>, attachments: Vec<String>) -> Self {
        ChatMessage {
            tool_call_id: Some(tool_call_id.into()),
            attachments,
            ..Self::plain(Role::Tool, content)
        }
    }

    pub fn from_reply(reply: &AssistantReply) -> Self {
        ChatMessage {
            tool_calls: reply.tool_calls.clone(),
            ..Self::plain(Role::Assistant, reply.content.clone().unwrap_or_default())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    String,
    Integer,
    Number,
    Boolean,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToolParam {
    pub name: &'static str,
    pub kind: ParamKind,
    pub description: &'static str,
    pub required: bool,
    /// Allowed values for string parameters; empty means any.
    pub allowed: &'static [&'static str],
}

/// A function the model may call.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToolSpec {
    pub name: &'static str,
    pub description: &'static str,
    pub parameters: Vec<ToolParam>,
}

impl ToolSpec {
    /// JSON schema of the parameter object.
    pub fn parameters_schema(&self) -> Value {
        let mut properties = Map::new();
        for p in &self.parameters {
            let mut prop = json!({ "type": p.kind, "description": p.description });
            if !p.allowed.is_empty() {
                prop["enum"] = json!(p.allowed);
            }
            properties.insert(p.name.to_string(), prop);
        }
        let required: Vec<&str> = self.parameters.iter().filter(|p| p.required).map(|p| p.name).collect();
        json!({
            "type": "object",
            "properties": properties,
            "required": required,
            "additionalProperties": false,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub tools: Vec<ToolSpec>,
}

/// The model's reply: text, tool calls, or both.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AssistantReply {
    pub content: Option<String>,
    pub tool_calls: Vec<ToolCall>,
}

impl AssistantReply {
    pub fn text(content: impl Into<String>) -> Self {
        AssistantReply { content: Some(content.into()), tool_calls: Vec::new() }
    }

    pub fn call(id: &str, name: &str, arguments: Value) -> Self {
        AssistantReply {
            content: None,
            tool_calls: vec![ToolCall { id: id.to_string(), name: name.to_string(), arguments }],
        }
    }

    pub fn calls(calls: Vec<ToolCall>) -> Self {
        AssistantReply { content: None, tool_calls: calls }
    }
}

#[async_trait]
pub trait ChatClient: Send + Sync {
    async fn complete(&self, request: &ChatRequest) -> Result<AssistantReply, LlmError>;
}

/// Connection settings for a chat-completions endpoint.
#[derive(Debug, Clone)]
pub struct RemoteChatConfig {
    /// Base URL, e.g. `https://api.openai.com/v1`; `/chat/completions` is appended.
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    /// Send uploaded images as data URLs in user messages.
    pub vision: bool,
}

/// Client for the chat-completions HTTP protocol with function calling.
pub struct RemoteChat {
    http: reqwest::Client,
    config: RemoteChatConfig,
}

impl RemoteChat {
    pub fn new(config: RemoteChatConfig) -> Result<Self, LlmError> {
        let http = reqwest::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| LlmError::Upstream(e.to_string()))?;
        Ok(RemoteChat { http, config })
    }

    /// Request body in the wire format.
    pub fn wire_request(&self, request: &ChatRequest) -> Value {
        let messages: Vec<Value> = request
            .messages
            .iter()
            .map(|m| wire_message(m, self.config.vision))
            .collect();
        let mut body = json!({ "model": self.config.model, "messages": messages });
        if !request.tools.is_empty() {
            body["tools"] = request
                .tools
                .iter()
                .map(|t| {
                    json!({
                        "type": "function",
                        "function": {
                            "name": t.name,
                            "description": t.description,
                            "parameters": t.parameters_schema(),
                        }
                    })
                })
                .collect();
            body["tool_choice"] = json!("auto");
        }
        body
    }
}

fn wire_message(m: &ChatMessage, vision: bool) -> Value {
    let role = match m.role {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
        Role::Tool => "tool",
    };
    let mut out = json!({ "role": role, "content": m.content });
    if m.role == Role::User && vision && !m.images.is_empty() {
        let mut parts = vec![json!({ "type": "text", "text": m.content })];
        for image in &m.images {
            if let Ok(bytes) = std::fs::read(&image.path) {
                use base64::Engine as _;
                let data = base64::engine::general_purpose::STANDARD.encode(bytes);
                parts.push(json!({
                    "type": "image_url",
                    "image_url": { "url": format!("data:{};base64,{data}", image.media_type) }
                }));
            }
        }
        out["content"] = Value::Array(parts);
    }
    if !m.tool_calls.is_empty() {
        if m.content.is_empty() {
            out["content"] = Value::Null;
        }
        out["tool_calls"] = m
            .tool_calls
            .iter()
            .map(|c| {
                let arguments = match &c.arguments {
                    Value::String(raw) => raw.clone(),
                    v => v.to_string(),
                };
                json!({
                    "id": c.id,
                    "type": "function",
                    "function": { "name": c.name, "arguments": arguments }
                })
            })
            .collect();
    }
    if let Some(id) = &m.tool_call_id {
        out["tool_call_id"] = json!(id);
    }
    out
}

/// Parses a chat-completions response body.
pub fn parse_wire_response(body: &Value) -> Result<AssistantReply, LlmError> {
    let message = body
        .pointer("/choices/0/message")
        .ok_or_else(|| LlmError::Protocol("response has no choices[0].message".into()))?;
    let content = message
        .get("content")
        .and_then(Value::as_str)
        .filter(|s| !s.is_empty())
        .map(str::to_string);
    let mut tool_calls = Vec::new();
    if let Some(calls) = message.get("tool_calls").and_then(Value::as_array) {
        for call in calls {
            let id = call.get("id").and_then(Value::as_str).unwrap_or_default();
            let name = call
                .pointer("/function/name")
                .and_then(Value::as_str)
                .ok_or_else(|| LlmError::Protocol("tool call without a function name".into()))?;
            let arguments = match call.pointer("/function/arguments") {
                Some(Value::String(raw)) => {
                    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.clone()))
                }
                Some(v) => v.clone(),
                None => json!({}),
            };
            tool_calls.push(ToolCall { id: id.to_string(), name: name.to_string(), arguments });
        }
    }
    if content.is_none() && tool_calls.is_empty() {
        return Err(LlmError::Protocol("assistant message has neither content nor tool calls".into()));
    }
    Ok(AssistantReply { content, tool_calls })
}

#[async_trait]
impl ChatClient for RemoteChat {
    async fn complete(&self, request: &ChatRequest) -> Result<AssistantReply, LlmError> {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let mut req = self.http.post(&url).json(&self.wire_request(request));
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().await.map_err(|e| LlmError::Upstream(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().await.map_err(|e| LlmError::Upstream(e.to_string()))?;
        if !status.is_success() {
            let snippet: String = text.chars().take(300).collect();
            return Err(LlmError::Upstream(format!("HTTP {status}: {snippet}")));
        }
        let body: Value = serde_json::from_str(&text).map_err(|e| LlmError::Protocol(e.to_string()))?;
        parse_wire_response(&body)
    }
}

type ReplyFn = dyn Fn(&ChatRequest) -> AssistantReply + Send + Sync;

/// One scripted reaction.
pub enum ScriptStep {
    Reply(AssistantReply),
    /// Reply computed from the request, e.g. to quote a tool result.
    Compute(Box<ReplyFn>),
    Fail(LlmError),
}

impl ScriptStep {
    fn run(&self, request: &ChatRequest) -> Result<AssistantReply, LlmError> {
        match self {
            ScriptStep::Reply(r) => Ok(r.clone()),
            ScriptStep::Compute(f) => Ok(f(request)),
            ScriptStep::Fail(e) => Err(e.clone()),
        }
    }
}

impl From<AssistantReply> for ScriptStep {
    fn from(r: AssistantReply) -> Self {
        ScriptStep::Reply(r)
    }
}

/// Replays configured steps in order and records every request it sees.
/// Once the script runs out it repeats the `forever` step if set, otherwise
/// fails with an upstream error.
#[derive(Clone, Default)]
pub struct ScriptedChat {
    steps: Arc<Mutex<VecDeque<ScriptStep>>>,
    forever: Option<Arc<ScriptStep>>,
    requests: Arc<Mutex<Vec<ChatRequest>>>,
}

impl ScriptedChat {
    pub fn new<I, S>(steps: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<ScriptStep>,
    {
        ScriptedChat {
            steps: Arc::new(Mutex::new(steps.into_iter().map(Into::into).collect())),
            ..Default::default()
        }
    }

    /// A client that answers every request with `step`.
    pub fn repeating(step: impl Into<ScriptStep>) -> Self {
        ScriptedChat { forever: Some(Arc::new(step.into())), ..Default::default() }
    }

    pub fn push(&self, step: impl Into<ScriptStep>) {
        self.steps.lock().unwrap().push_back(step.into());
    }

    /// Requests received so far, oldest first.
    pub fn requests(&self) -> Vec<ChatRequest> {
        self.requests.lock().unwrap().clone()
    }

    pub fn call_count(&self) -> usize {
        self.requests.lock().unwrap().len()
    }
}

#[async_trait]
impl ChatClient for ScriptedChat {
    async fn complete(&self, request: &ChatRequest) -> Result<AssistantReply, LlmError> {
        self.requests.lock().unwrap().push(request.clone());
        let next = self.steps.lock().unwrap().pop_front();
        match (next, &self.forever) {
            (Some(step), _) => step.run(request),
            (None, Some(step)) => step.run(request),
            (None, None) => Err(LlmError::Upstream("scripted chat has no more replies".into())),
        }
    }
}
