//! The functions the model can call, their argument validation, and dispatch
//! to the weather, chart and retrieval backends.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::analytics::{aggregate, parse_period, summarize, TimeStep};
use crate::artifacts::ArtifactStore;
use crate::chart::{render_heatmap, render_line, ChartArtifact};
use crate::corpus::CaseLibrary;
use crate::epw::{parse_epw, Field, WeatherSeries};
use crate::llm::{ParamKind, ToolCall, ToolParam, ToolSpec};
use crate::retrieval::{assemble_context, search, Embedder, RetrievalError, VectorIndex, DEFAULT_TOP_K};
use crate::session::{extension_of, image_media_type, Session, SessionError};

pub const DESCRIBE_WEATHER: &str = "describe_weather_data";
pub const VISUALIZE_WEATHER: &str = "visualize_weather_data";
pub const RETRIEVE_CASES: &str = "retrieve_green_building_cases";
pub const QUERY_KNOWLEDGE: &str = "query_green_building_knowledge";
pub const ANALYZE_DOCUMENT: &str = "analyze_uploaded_document";

pub const MAX_K: i64 = 20;
/// Longest document excerpt returned by `analyze_uploaded_document`, in characters.
pub const DOCUMENT_EXCERPT_CHARS: usize = 12_000;

const FILE_NAME: ToolParam = ToolParam {
    name: "file_name",
    kind: ParamKind::String,
    description: "Name of an uploaded file, exactly as listed in [Uploaded files: ...].",
    required: true,
    allowed: &[],
};

const QUERY: ToolParam = ToolParam {
    name: "query",
    kind: ParamKind::String,
    description: "What to search for, in natural language.",
    required: true,
    allowed: &[],
};

const K: ToolParam = ToolParam {
    name: "k",
    kind: ParamKind::Integer,
    description: "Number of results to return (1-20, default 5).",
    required: false,
    allowed: &[],
};

/// The five registered tools.
pub fn tool_specs() -> Vec<ToolSpec> {
    vec![
        ToolSpec {
            name: DESCRIBE_WEATHER,
            description: "Describe an uploaded EPW weather file: location, record count, annual and monthly \
                          statistics of the main meteorological fields, hottest and coldest day.",
            parameters: vec![FILE_NAME],
        },
        ToolSpec {
            name: VISUALIZE_WEATHER,
            description: "Aggregate one field of an uploaded EPW weather file over a period and draw a chart. \
                          Returns the chart as an artifact plus the plotted values.",
            parameters: vec![
                FILE_NAME,
                ToolParam {
                    name: "time_step",
                    kind: ParamKind::String,
                    description: "Aggregation step.",
                    required: true,
                    allowed: &["hourly", "daily", "monthly"],
                },
                ToolParam {
                    name: "time_periods",
                    kind: ParamKind::String,
                    description: "Period as DATE:M/D-M/D (inclusive, e.g. DATE:3/1-3/31) or YEAR.",
                    required: true,
                    allowed: &[],
                },
                ToolParam {
                    name: "data_type",
                    kind: ParamKind::String,
                    description: "EPW field, e.g. dry_bulb_temperature, dew_point_temperature, relative_humidity, \
                                  global_horizontal_radiation, direct_normal_radiation, wind_speed, total_sky_cover.",
                    required: true,
                    allowed: &[],
                },
                ToolParam {
                    name: "chart_type",
                    kind: ParamKind::String,
                    description: "line (default) or heatmap (hour of day by day; ignores time_step).",
                    required: false,
                    allowed: &["line", "heatmap"],
                },
            ],
        },
        ToolSpec {
            name: RETRIEVE_CASES,
            description: "Recommend certified green building cases similar to a description (location, climate, \
                          building type, rating system, strategies).",
            parameters: vec![QUERY, K],
        },
        ToolSpec {
            name: QUERY_KNOWLEDGE,
            description: "Search green building textbooks, standards and manuals and return the most relevant \
                          passages with their sources.",
            parameters: vec![QUERY, K],
        },
        ToolSpec {
            name: ANALYZE_DOCUMENT,
            description: "Read an uploaded text document (.txt or .json) and return its content. Images are \
                          passed to the model directly when supported.",
            parameters: vec![FILE_NAME],
        },
    ]
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ToolError {
    #[error("unknown tool `{0}`")]
    UnknownTool(String),
    #[error("invalid arguments for {tool}: `{field}` {reason}")]
    ValidationFailed { tool: String, field: String, reason: String },
    #[error("file `{0}` has not been uploaded")]
    FileNotFound(String),
}

fn invalid(tool: &str, field: &str, reason: impl Into<String>) -> ToolError {
    ToolError::ValidationFailed { tool: tool.to_string(), field: field.to_string(), reason: reason.into() }
}

/// Checks `arguments` against the named tool's declaration without coercing
/// anything, and returns the argument object.
pub fn validate_arguments<'a>(name: &str, arguments: &'a Value) -> Result<&'a Map<String, Value>, ToolError> {
    let spec = tool_specs()
        .into_iter()
        .find(|s| s.name == name)
        .ok_or_else(|| ToolError::UnknownTool(name.to_string()))?;
    let args = match arguments {
        Value::Object(map) => map,
        Value::String(_) => return Err(invalid(name, "arguments", "are not valid JSON")),
        _ => return Err(invalid(name, "arguments", "must be a JSON object")),
    };
    if let Some(extra) = args.keys().find(|k| !spec.parameters.iter().any(|p| p.name == k.as_str())) {
        return Err(invalid(name, extra, "is not a parameter of this tool"));
    }
    for p in &spec.parameters {
        let value = match args.get(p.name) {
            None | Some(Value::Null) if p.required => return Err(invalid(name, p.name, "is required")),
            None | Some(Value::Null) => continue,
            Some(v) => v,
        };
        let ok = match p.kind {
            ParamKind::String => value.is_string(),
            ParamKind::Integer => value.is_i64() || value.is_u64(),
            ParamKind::Number => value.is_number(),
            ParamKind::Boolean => value.is_boolean(),
        };
        if !ok {
            return Err(invalid(name, p.name, format!("must be of type {}", kind_name(p.kind))));
        }
        if let (Some(s), false) = (value.as_str(), p.allowed.is_empty()) {
            if !p.allowed.contains(&s) {
                return Err(invalid(name, p.name, format!("must be one of {}", p.allowed.join(", "))));
            }
        }
    }
    if let Some(k) = args.get("k").filter(|v| !v.is_null()) {
        if !k.as_i64().is_some_and(|k| (1..=MAX_K).contains(&k)) {
            return Err(invalid(name, "k", format!("must be between 1 and {MAX_K}")));
        }
    }
    Ok(args)
}

fn kind_name(kind: ParamKind) -> &'static str {
    match kind {
        ParamKind::String => "string",
        ParamKind::Integer => "integer",
        ParamKind::Number => "number",
        ParamKind::Boolean => "boolean",
    }
}

/// Case library and reference-text index searched by the retrieval tools.
pub struct KnowledgeBase {
    pub embedder: Arc<dyn Embedder>,
    pub cases: Option<(CaseLibrary, VectorIndex)>,
    pub knowledge: Option<VectorIndex>,
}

impl KnowledgeBase {
    pub fn empty(embedder: Arc<dyn Embedder>) -> Self {
        KnowledgeBase { embedder, cases: None, knowledge: None }
    }
}

/// What a tool needs besides its arguments.
pub struct ToolContext<'a> {
    pub knowledge: &'a KnowledgeBase,
    pub artifacts: &'a ArtifactStore,
    pub context_budget: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ArtifactRef {
    pub artifact_id: String,
    pub media_type: &'static str,
}

impl From<&ChartArtifact> for ArtifactRef {
    fn from(c: &ChartArtifact) -> Self {
        ArtifactRef { artifact_id: c.artifact_id.clone(), media_type: c.media_type }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToolResult {
    pub tool_call_id: String,
    pub text: String,
    pub artifacts: Vec<ArtifactRef>,
    /// The backend failed; `text` carries the error for the model.
    pub is_error: bool,
}

impl ToolResult {
    fn ok(call: &ToolCall, text: String) -> Self {
        ToolResult { tool_call_id: call.id.clone(), text, artifacts: Vec::new(), is_error: false }
    }

    fn failed(call: &ToolCall, error: impl std::fmt::Display) -> Self {
        ToolResult { tool_call_id: call.id.clone(), text: format!("error: {error}"), artifacts: Vec::new(), is_error: true }
    }
}

fn str_arg<'a>(args: &'a Map<String, Value>, key: &str) -> Option<&'a str> {
    args.get(key).and_then(Value::as_str)
}

fn k_arg(args: &Map<String, Value>) -> usize {
    args.get("k").and_then(Value::as_u64).map_or(DEFAULT_TOP_K, |k| k as usize)
}

fn resolve<'s>(session: &'s Session, args: &Map<String, Value>) -> Result<(&'s Path, String), ToolError> {
    let name = str_arg(args, "file_name").unwrap_or_default();
    match session.resolve_file(name) {
        Ok(path) => Ok((path, name.to_string())),
        Err(SessionError::FileNotFound(n)) => Err(ToolError::FileNotFound(n)),
        Err(e) => Err(ToolError::FileNotFound(e.to_string())),
    }
}

fn load_weather(path: &Path) -> Result<WeatherSeries, String> {
    let raw = fs::read(path).map_err(|e| format!("cannot read weather file: {e}"))?;
    parse_epw(&raw).map_err(|e| format!("not a valid EPW file: {e}"))
}

/// Runs one validated tool call. Protocol-level problems (unknown tool, bad
/// arguments, unknown file) are returned as errors; failures inside a backend
/// become a result with `is_error` set so the model can react.
pub async fn dispatch_tool(call: &ToolCall, session: &Session, ctx: &ToolContext<'_>) -> Result<ToolResult, ToolError> {
    let args = validate_arguments(&call.name, &call.arguments)?;
    match call.name.as_str() {
        DESCRIBE_WEATHER => {
            let (path, _) = resolve(session, args)?;
            Ok(match load_weather(path).and_then(|s| summarize(&s).map_err(|e| e.to_string())) {
                Ok(summary) => ToolResult::ok(call, summary.to_string()),
                Err(e) => ToolResult::failed(call, e),
            })
        }
        VISUALIZE_WEATHER => {
            let (path, name) = resolve(session, args)?;
            Ok(visualize(call, args, path, &name, ctx).unwrap_or_else(|e| ToolResult::failed(call, e)))
        }
        RETRIEVE_CASES => Ok(retrieve_cases(call, args, ctx).await.unwrap_or_else(|e| ToolResult::failed(call, e))),
        QUERY_KNOWLEDGE => Ok(query_knowledge(call, args, ctx).await.unwrap_or_else(|e| ToolResult::failed(call, e))),
        ANALYZE_DOCUMENT => {
            let (path, name) = resolve(session, args)?;
            Ok(analyze_document(call, path, &name))
        }
        other => Err(ToolError::UnknownTool(other.to_string())),
    }
}

fn visualize(
    call: &ToolCall,
    args: &Map<String, Value>,
    path: &Path,
    file_name: &str,
    ctx: &ToolContext<'_>,
) -> Result<ToolResult, String> {
    let step_text = str_arg(args, "time_step").unwrap_or_default();
    let period_text = str_arg(args, "time_periods").unwrap_or_default();
    let data_type = str_arg(args, "data_type").unwrap_or_default();
    let heatmap = str_arg(args, "chart_type") == Some("heatmap");

    let period = parse_period(period_text).map_err(|e| format!("{} ({})", e, e.code()))?;
    let step: TimeStep = step_text.parse().map_err(|e: crate::analytics::AnalyticsError| e.to_string())?;
    let field = Field::from_name(data_type).map_err(|e| e.to_string())?;
    let series = load_weather(path)?;
    let station = &series.header().station_name;
    let units = field.units();

    let mut text = String::new();
    let chart = if heatmap {
        let title = format!("Hourly {data_type} ({units}), {period}, {station}");
        let chart = render_heatmap(&series, data_type, period, &title, ctx.artifacts).map_err(|e| e.to_string())?;
        let _ = writeln!(
            text,
            "Created heatmap chart artifact {} from {file_name}: hourly {data_type} ({units}) for {period_text}, \
             {} cells (24 hours x {} days).",
            chart.artifact_id,
            chart.point_count,
            chart.point_count / 24
        );
        chart
    } else {
        let agg = aggregate(&series, data_type, step, period).map_err(|e| e.to_string())?;
        let title = format!("{} {data_type} ({units}), {period}, {station}", capitalize(step_text));
        let chart = render_line(&agg, &title, ctx.artifacts).map_err(|e| e.to_string())?;
        let _ = writeln!(
            text,
            "Created line chart artifact {} from {file_name}: {step} mean, min and max of {data_type} ({units}) \
             for {period_text}, {} points.",
            chart.artifact_id, chart.point_count
        );
        let present: Vec<_> = agg.points.iter().filter_map(|p| p.stats.map(|s| (p, s))).collect();
        if let (Some(lo), Some(hi)) = (
            present.iter().min_by(|a, b| a.1.min.total_cmp(&b.1.min)),
            present.iter().max_by(|a, b| a.1.max.total_cmp(&b.1.max)),
        ) {
            let mean = present.iter().map(|(p, s)| s.mean * p.count_present as f64).sum::<f64>()
                / present.iter().map(|(p, _)| p.count_present as f64).sum::<f64>();
            let _ = writeln!(
                text,
                "Overall mean {mean:.1}; lowest {:.1} ({}); highest {:.1} ({}).",
                lo.1.min, lo.0.label, hi.1.max, hi.0.label
            );
        }
        if agg.points.len() <= 31 {
            for p in &agg.points {
                match p.stats {
                    Some(s) => {
                        let _ = writeln!(text, "{}: mean {:.1}, min {:.1}, max {:.1}", p.label, s.mean, s.min, s.max);
                    }
                    None => {
                        let _ = writeln!(text, "{}: no data", p.label);
                    }
                }
            }
        }
        chart
    };
    Ok(ToolResult {
        tool_call_id: call.id.clone(),
        text,
        artifacts: vec![ArtifactRef::from(&chart)],
        is_error: false,
    })
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
}

async fn retrieve_cases(call: &ToolCall, args: &Map<String, Value>, ctx: &ToolContext<'_>) -> Result<ToolResult, RetrievalError> {
    let Some((library, index)) = &ctx.knowledge.cases else {
        return Ok(ToolResult::failed(call, "no case library is loaded"));
    };
    let query = str_arg(args, "query").unwrap_or_default();
    let k = k_arg(args);
    // every chunk is ranked so that k distinct cases can be collected
    let hits = search(index, query, index.len().max(1), ctx.knowledge.embedder.as_ref()).await?;
    let mut seen: Vec<&str> = Vec::new();
    let mut text = String::new();
    for hit in &hits {
        let Some(chunk) = index.chunk(&hit.chunk_id) else { continue };
        if seen.contains(&chunk.source_doc.as_str()) {
            continue;
        }
        let Some(case) = library.get(&chunk.source_doc) else { continue };
        seen.push(&chunk.source_doc);
        let _ = writeln!(
            text,
            "{}. {} [{}] - {}, {}; {} building; {} {} ({}); similarity {:.3}\n   {}",
            seen.len(),
            case.name,
            case.case_id,
            case.city,
            case.country,
            case.building_subtype.as_deref().unwrap_or(&case.building_type.to_string()),
            case.rating_system,
            case.certification_level,
            case.year,
            hit.score,
            excerpt(&case.description, 400)
        );
        for s in case.performance_sentences.iter().take(3) {
            let _ = writeln!(text, "   - {s}");
        }
        if seen.len() == k {
            break;
        }
    }
    if seen.is_empty() {
        text.push_str("No matching cases found.");
    }
    Ok(ToolResult::ok(call, text))
}

/// Case ids returned by `retrieve_green_building_cases`, in rank order.
pub fn case_ids_in(text: &str) -> Vec<String> {
    text.lines()
        .filter(|l| l.chars().next().is_some_and(|c| c.is_ascii_digit()))
        .filter_map(|l| {
            let start = l.find('[')? + 1;
            let end = start + l[start..].find(']')?;
            Some(l[start..end].to_string())
        })
        .collect()
}

async fn query_knowledge(call: &ToolCall, args: &Map<String, Value>, ctx: &ToolContext<'_>) -> Result<ToolResult, RetrievalError> {
    let Some(index) = &ctx.knowledge.knowledge else {
        return Ok(ToolResult::failed(call, "no knowledge base is loaded"));
    };
    let query = str_arg(args, "query").unwrap_or_default();
    let hits = search(index, query, k_arg(args), ctx.knowledge.embedder.as_ref()).await?;
    let context = assemble_context(&hits, index, ctx.context_budget);
    Ok(ToolResult::ok(
        call,
        if context.is_empty() { "No relevant passages found.".to_string() } else { context },
    ))
}

fn excerpt(text: &str, max_chars: usize) -> String {
    let text = text.trim();
    match text.char_indices().nth(max_chars) {
        Some((cut, _)) => format!("{}...", &text[..cut]),
        None => text.to_string(),
    }
}

fn analyze_document(call: &ToolCall, path: &Path, name: &str) -> ToolResult {
    let ext = extension_of(name).unwrap_or_default();
    if image_media_type(name).is_some() {
        return ToolResult::ok(
            call,
            format!("{name} is an image. It is attached to the user's message for models that accept images; its content cannot be read as text."),
        );
    }
    match ext.as_str() {
        "txt" | "json" => match fs::read(path) {
            Ok(bytes) => {
                let text = String::from_utf8_lossy(&bytes);
                let total = text.chars().count();
                let mut out = format!("Content of {name} ({total} characters):\n");
                out.push_str(&excerpt(&text, DOCUMENT_EXCERPT_CHARS));
                ToolResult::ok(call, out)
            }
            Err(e) => ToolResult::failed(call, format!("cannot read {name}: {e}")),
        },
        "epw" => ToolResult::failed(call, format!("{name} is a weather file; use {DESCRIBE_WEATHER} or {VISUALIZE_WEATHER}")),
        _ => ToolResult::failed(
            call,
            format!("text extraction from .{ext} files is not supported; ask the user for a .txt copy of {name}"),
        ),
    }
}
