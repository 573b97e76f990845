//! A keyword-driven stand-in for a real model. It picks one tool from the
//! user's wording, then echoes the tool output back as its answer. Used for
//! UI smoke tests and offline demos.

use async_trait::async_trait;
use serde_json::{json, Map, Value};

use crate::calendar::days_in_month;
use crate::llm::{AssistantReply, ChatClient, ChatMessage, ChatRequest, LlmError, Role};
use crate::tools::{ANALYZE_DOCUMENT, DESCRIBE_WEATHER, QUERY_KNOWLEDGE, RETRIEVE_CASES, VISUALIZE_WEATHER};

const MONTHS: [&str; 12] = [
    "january", "february", "march", "april", "may", "june", "july", "august", "september", "october", "november",
    "december",
];

#[derive(Debug, Clone, Copy, Default)]
pub struct DemoChat;

/// File names listed in an `[Uploaded files: ...]` suffix.
pub fn listed_files(text: &str) -> Vec<String> {
    let Some(start) = text.rfind("[Uploaded files: ") else { return Vec::new() };
    let rest = &text[start + "[Uploaded files: ".len()..];
    let Some(end) = rest.find(']') else { return Vec::new() };
    rest[..end].split(", ").map(str::to_string).filter(|s| !s.is_empty()).collect()
}

fn has_any(text: &str, words: &[&str]) -> bool {
    words.iter().any(|w| text.contains(w))
}

fn month_period(text: &str) -> Option<String> {
    let (i, _) = MONTHS
        .iter()
        .enumerate()
        .filter_map(|(i, m)| text.find(m).map(|pos| (i, pos)))
        .min_by_key(|(_, pos)| *pos)?;
    let m = i as u8 + 1;
    Some(format!("DATE:{m}/1-{m}/{}", days_in_month(m, false)))
}

/// The tool call the demo model makes for a user message, if any.
pub fn plan_call(user_text: &str, files: &[String]) -> Option<(&'static str, Value)> {
    let text = user_text.to_lowercase();
    let epw = files.iter().find(|f| f.to_lowercase().ends_with(".epw"));
    let document = files.iter().find(|f| {
        let f = f.to_lowercase();
        f.ends_with(".txt") || f.ends_with(".json")
    });
    if let Some(epw) = epw {
        if has_any(&text, &["visuali", "chart", "plot", "graph", "heatmap", "show"]) {
            let step = if text.contains("hourly") {
                "hourly"
            } else if text.contains("monthly") {
                "monthly"
            } else {
                "daily"
            };
            let data_type = if text.contains("humid") {
                "relative_humidity"
            } else if has_any(&text, &["radiation", "solar"]) {
                "global_horizontal_radiation"
            } else if text.contains("wind") {
                "wind_speed"
            } else {
                "dry_bulb_temperature"
            };
            let mut args = Map::new();
            args.insert("file_name".into(), json!(epw));
            args.insert("time_step".into(), json!(step));
            args.insert("time_periods".into(), json!(month_period(&text).unwrap_or_else(|| "YEAR".into())));
            args.insert("data_type".into(), json!(data_type));
            if text.contains("heatmap") {
                args.insert("chart_type".into(), json!("heatmap"));
            }
            return Some((VISUALIZE_WEATHER, Value::Object(args)));
        }
        return Some((DESCRIBE_WEATHER, json!({ "file_name": epw })));
    }
    if let Some(doc) = document {
        return Some((ANALYZE_DOCUMENT, json!({ "file_name": doc })));
    }
    let query = user_text.split("\n\n[Uploaded files:").next().unwrap_or(user_text).trim();
    if has_any(&text, &["case", "project", "example", "precedent"]) {
        return Some((RETRIEVE_CASES, json!({ "query": query, "k": 3 })));
    }
    if text.trim().is_empty() {
        return None;
    }
    Some((QUERY_KNOWLEDGE, json!({ "query": query })))
}

fn answer_from_tools(messages: &[ChatMessage]) -> String {
    let results: Vec<&ChatMessage> = messages.iter().rev().take_while(|m| m.role == Role::Tool).collect();
    let mut out = String::from("Here is what I found.\n\n");
    for m in results.iter().rev() {
        out.push_str(m.content.trim());
        out.push_str("\n\n");
        for id in &m.attachments {
            out.push_str(&format!("Chart: artifact {id}\n"));
        }
    }
    out.trim_end().to_string()
}

#[async_trait]
impl ChatClient for DemoChat {
    async fn complete(&self, request: &ChatRequest) -> Result<AssistantReply, LlmError> {
        let last = request.messages.last().ok_or_else(|| LlmError::Protocol("empty request".into()))?;
        match last.role {
            Role::Tool => Ok(AssistantReply::text(answer_from_tools(&request.messages))),
            Role::User => {
                let call_no = request.messages.iter().map(|m| m.tool_calls.len()).sum::<usize>() + 1;
                Ok(match plan_call(&last.content, &listed_files(&last.content)) {
                    Some((name, args)) => AssistantReply::call(&format!("demo_{call_no}"), name, args),
                    None => AssistantReply::text("Ask me about climate data, green building cases or standards."),
                })
            }
            _ => Err(LlmError::Protocol("demo model expects a user or tool message last".into())),
        }
    }
}
