//! Knowledge-base ingestion: structured green-building case records and
//! chunked reference texts (textbooks, standards, design manuals).
//!
//! Case files are UTF-8 JSON holding either one record object or an array of
//! them. Field names:
//!
//! ```json
//! {
//!   "case_id": "leed-0001",
//!   "name": "Example Library",
//!   "country": "United States",
//!   "city": "Seattle",
//!   "building_type": "public",
//!   "building_subtype": "cultural",
//!   "rating_system": "LEED",
//!   "certification_level": "Platinum",
//!   "year": 2019,
//!   "description": "...",
//!   "performance_sentences": ["..."]
//! }
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::llm::{ChatClient, ChatMessage, ChatRequest, LlmError};

pub const DEFAULT_CHUNK_SIZE: usize = 1200;
pub const DEFAULT_CHUNK_OVERLAP: usize = 200;

/// Model calls made by [`extract_case`] before giving up.
pub const EXTRACTION_ATTEMPTS: usize = 2;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{file}: field `{field}` {reason}")]
    SchemaViolation { file: String, field: String, reason: String },
    #[error("duplicate case id `{0}`")]
    DuplicateId(String),
    #[error("{file}: {source}")]
    Io {
        file: String,
        #[source]
        source: std::io::Error,
    },
    #[error("chunk overlap {overlap} must be smaller than chunk size {chunk_size}")]
    BadChunkParams { chunk_size: usize, overlap: usize },
    #[error("case extraction rejected after {attempts} attempts: {reason}")]
    ExtractionRejected { attempts: usize, reason: String },
    #[error(transparent)]
    Upstream(#[from] LlmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BuildingType {
    Residential,
    Public,
    Industrial,
}

impl BuildingType {
    fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "residential" => Some(BuildingType::Residential),
            "public" => Some(BuildingType::Public),
            "industrial" => Some(BuildingType::Industrial),
            _ => None,
        }
    }
}

impl fmt::Display for BuildingType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BuildingType::Residential => "residential",
            BuildingType::Public => "public",
            BuildingType::Industrial => "industrial",
        })
    }
}

/// Green building rating system; anything besides LEED and BREEAM is kept by name.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum RatingSystem {
    Leed,
    Breeam,
    Other(String),
}

impl From<String> for RatingSystem {
    fn from(s: String) -> Self {
        match s.trim().to_ascii_uppercase().as_str() {
            "LEED" => RatingSystem::Leed,
            "BREEAM" => RatingSystem::Breeam,
            _ => RatingSystem::Other(s.trim().to_string()),
        }
    }
}

impl From<RatingSystem> for String {
    fn from(r: RatingSystem) -> Self {
        r.to_string()
    }
}

impl fmt::Display for RatingSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RatingSystem::Leed => f.write_str("LEED"),
            RatingSystem::Breeam => f.write_str("BREEAM"),
            RatingSystem::Other(name) => f.write_str(name),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case_id: String,
    pub name: String,
    pub country: String,
    pub city: String,
    pub building_type: BuildingType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub building_subtype: Option<String>,
    pub rating_system: RatingSystem,
    pub certification_level: String,
    pub year: i32,
    pub description: String,
    #[serde(default)]
    pub performance_sentences: Vec<String>,
}

impl CaseRecord {
    /// Retrieval text for the case: a one-line attribution header followed by
    /// the description and performance sentences.
    pub fn to_document(&self) -> String {
        let kind = match &self.building_subtype {
            Some(sub) => format!("{} / {sub}", self.building_type),
            None => self.building_type.to_string(),
        };
        let mut doc = format!(
            "{} ({}, {}). {} building, {} {}, {}.\n{}",
            self.name,
            self.city,
            self.country,
            kind,
            self.rating_system,
            self.certification_level,
            self.year,
            self.description.trim()
        );
        for s in &self.performance_sentences {
            doc.push_str("\n- ");
            doc.push_str(s.trim());
        }
        doc
    }
}

/// Checks a JSON object against the case schema; `Err((field, reason))` names
/// the first offending field.
fn check_case_value(v: &Value) -> Result<(), (&'static str, String)> {
    let obj = v.as_object().ok_or(("<record>", "is not an object".to_string()))?;
    for field in ["case_id", "name", "country", "city", "certification_level", "description"] {
        match obj.get(field) {
            None | Some(Value::Null) => return Err((field, "is missing".into())),
            Some(Value::String(s)) if field == "description" || field == "case_id" => {
                if s.trim().is_empty() {
                    return Err((field, "must not be empty".into()));
                }
            }
            Some(Value::String(_)) => {}
            Some(_) => return Err((field, "must be a string".into())),
        }
    }
    match obj.get("building_type") {
        Some(Value::String(s)) if BuildingType::parse(s).is_some() => {}
        Some(Value::String(s)) => {
            return Err(("building_type", format!("`{s}` is not residential, public or industrial")))
        }
        _ => return Err(("building_type", "is missing".into())),
    }
    match obj.get("building_subtype") {
        None | Some(Value::Null) | Some(Value::String(_)) => {}
        Some(_) => return Err(("building_subtype", "must be a string".into())),
    }
    match obj.get("rating_system") {
        Some(Value::String(s)) if !s.trim().is_empty() => {}
        _ => return Err(("rating_system", "is missing".into())),
    }
    match obj.get("year") {
        Some(Value::Number(n)) if n.as_i64().is_some_and(|y| (1800..=2200).contains(&y)) => {}
        Some(_) => return Err(("year", "must be an integer year".into())),
        None => return Err(("year", "is missing".into())),
    }
    match obj.get("performance_sentences") {
        None | Some(Value::Null) => {}
        Some(Value::Array(items)) if items.iter().all(Value::is_string) => {}
        Some(_) => return Err(("performance_sentences", "must be a list of strings".into())),
    }
    Ok(())
}

fn case_from_value(v: Value, file: &str) -> Result<CaseRecord, CorpusError> {
    check_case_value(&v).map_err(|(field, reason)| CorpusError::SchemaViolation {
        file: file.to_string(),
        field: field.to_string(),
        reason,
    })?;
    let mut obj = v;
    if let Some(map) = obj.as_object_mut() {
        if map.get("performance_sentences").is_some_and(Value::is_null) {
            map.remove("performance_sentences");
        }
    }
    if let Some(bt) = obj.get_mut("building_type") {
        *bt = Value::String(bt.as_str().unwrap_or_default().to_ascii_lowercase());
    }
    serde_json::from_value(obj).map_err(|e| CorpusError::SchemaViolation {
        file: file.to_string(),
        field: "<record>".into(),
        reason: e.to_string(),
    })
}

/// Case records keyed by unique id, in load order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CaseLibrary {
    cases: Vec<CaseRecord>,
}

impl CaseLibrary {
    pub fn from_records(records: Vec<CaseRecord>) -> Result<Self, CorpusError> {
        let mut seen = BTreeSet::new();
        for r in &records {
            if !seen.insert(r.case_id.as_str()) {
                return Err(CorpusError::DuplicateId(r.case_id.clone()));
            }
        }
        Ok(CaseLibrary { cases: records })
    }

    pub fn cases(&self) -> &[CaseRecord] {
        &self.cases
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn get(&self, case_id: &str) -> Option<&CaseRecord> {
        self.cases.iter().find(|c| c.case_id == case_id)
    }

    /// Chunks every case document, tagged as [`SourceKind::Case`].
    pub fn chunks(&self, chunk_size: usize, overlap: usize) -> Result<Vec<Chunk>, CorpusError> {
        let mut out = Vec::new();
        for case in &self.cases {
            out.extend(chunk_text(&case.to_document(), &case.case_id, SourceKind::Case, chunk_size, overlap)?);
        }
        Ok(out)
    }
}

/// Loads case files. Each file holds one record object or an array of them.
pub fn load_cases<P: AsRef<Path>>(files: &[P]) -> Result<CaseLibrary, CorpusError> {
    let mut records = Vec::new();
    for path in files {
        let path = path.as_ref();
        let file = path.display().to_string();
        let text = fs::read_to_string(path).map_err(|source| CorpusError::Io { file: file.clone(), source })?;
        let value: Value = serde_json::from_str(&text).map_err(|e| CorpusError::SchemaViolation {
            file: file.clone(),
            field: "<json>".into(),
            reason: e.to_string(),
        })?;
        match value {
            Value::Array(items) => {
                for item in items {
                    records.push(case_from_value(item, &file)?);
                }
            }
            other => records.push(case_from_value(other, &file)?),
        }
    }
    CaseLibrary::from_records(records)
}

/// All `*.json` files directly under `dir`, sorted by name.
pub fn case_files(dir: &Path) -> Result<Vec<PathBuf>, CorpusError> {
    let io = |source| CorpusError::Io { file: dir.display().to_string(), source };
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    Ok(files)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Textbook,
    Standard,
    Manual,
    Case,
}

impl SourceKind {
    /// Maps a reference-text directory name (`textbooks`, `standards`, ...) to a kind.
    pub fn from_dir_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().trim_end_matches('s') {
            "textbook" => Some(SourceKind::Textbook),
            "standard" => Some(SourceKind::Standard),
            "manual" => Some(SourceKind::Manual),
            "case" => Some(SourceKind::Case),
            _ => None,
        }
    }
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SourceKind::Textbook => "textbook",
            SourceKind::Standard => "standard",
            SourceKind::Manual => "manual",
            SourceKind::Case => "case",
        })
    }
}

/// A bounded span of a source document. Offsets and sizes count characters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub source_doc: String,
    pub source_kind: SourceKind,
    pub char_offset: usize,
    pub text: String,
}

/// Splits `doc` into windows of `chunk_size` characters starting every
/// `chunk_size - overlap` characters. A document no longer than one window
/// yields a single chunk; an empty one yields none.
pub fn chunk_text(
    doc: &str,
    source_doc: &str,
    source_kind: SourceKind,
    chunk_size: usize,
    overlap: usize,
) -> Result<Vec<Chunk>, CorpusError> {
    if chunk_size == 0 || overlap >= chunk_size {
        return Err(CorpusError::BadChunkParams { chunk_size, overlap });
    }
    let chars: Vec<char> = doc.chars().collect();
    let len = chars.len();
    let make = |k: usize, offset: usize| Chunk {
        chunk_id: format!("{source_doc}#{k}"),
        source_doc: source_doc.to_string(),
        source_kind,
        char_offset: offset,
        text: chars[offset..(offset + chunk_size).min(len)].iter().collect(),
    };
    if len == 0 {
        return Ok(Vec::new());
    }
    if len <= chunk_size {
        return Ok(vec![make(0, 0)]);
    }
    Ok((0..len)
        .step_by(chunk_size - overlap)
        .enumerate()
        .map(|(k, offset)| make(k, offset))
        .collect())
}

/// Reads reference texts from `root/<kind>/*.txt` where `<kind>` is one of
/// `textbooks`, `standards`, `manuals` and chunks them. Document names are
/// `<kind dir>/<file name>`.
pub fn load_reference_texts(root: &Path, chunk_size: usize, overlap: usize) -> Result<Vec<Chunk>, CorpusError> {
    let io = |p: &Path| {
        let file = p.display().to_string();
        move |source| CorpusError::Io { file, source }
    };
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(io(root))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    let mut out = Vec::new();
    for dir in dirs {
        let dir_name = dir.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        let Some(kind) = SourceKind::from_dir_name(&dir_name) else { continue };
        if kind == SourceKind::Case {
            continue;
        }
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(io(&dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "txt" || e == "md"))
            .collect();
        files.sort();
        for file in files {
            let text = fs::read_to_string(&file).map_err(io(&file))?;
            let name = format!(
                "{dir_name}/{}",
                file.file_name().and_then(|n| n.to_str()).unwrap_or_default()
            );
            out.extend(chunk_text(&text, &name, kind, chunk_size, overlap)?);
        }
    }
    Ok(out)
}

/// Instructions for turning a raw project description into a case record.
pub const EXTRACTION_PROMPT: &str = "You convert descriptions of certified green building projects into \
structured records. Reply with a single JSON object and nothing else, using exactly these fields: \
case_id (short lowercase slug), name, country, city, building_type (one of residential, public, industrial), \
building_subtype (e.g. educational, office, cultural; or null), rating_system (LEED, BREEAM or the scheme's name), \
certification_level, year (integer), description (one paragraph summary), performance_sentences \
(list of sentences from the text about the rating or building performance: energy, water, daylight, \
materials, indoor environment). Copy performance sentences verbatim from the text.";

fn strip_code_fence(s: &str) -> &str {
    let t = s.trim();
    let Some(rest) = t.strip_prefix("```") else { return t };
    let rest = rest.strip_prefix("json").unwrap_or(rest);
    rest.trim_end().strip_suffix("```").unwrap_or(rest).trim()
}

/// Asks the model for a case record describing `raw_text`. Replies that do
/// not validate are sent back with the validation error for one more try.
pub async fn extract_case(raw_text: &str, llm: &dyn ChatClient) -> Result<CaseRecord, CorpusError> {
    let mut messages = vec![ChatMessage::system(EXTRACTION_PROMPT), ChatMessage::user(raw_text)];
    let mut last_error = String::new();
    for _ in 0..EXTRACTION_ATTEMPTS {
        let reply = llm
            .complete(&ChatRequest { messages: messages.clone(), tools: Vec::new() })
            .await?;
        let content = reply.content.unwrap_or_default();
        let parsed = serde_json::from_str::<Value>(strip_code_fence(&content))
            .map_err(|e| format!("reply is not JSON: {e}"))
            .and_then(|v| case_from_value(v, "<model reply>").map_err(|e| e.to_string()));
        match parsed {
            Ok(record) => return Ok(record),
            Err(e) => {
                last_error = e;
                messages.push(ChatMessage::assistant(content));
                messages.push(ChatMessage::user(format!(
                    "That reply was rejected: {last_error}. Reply again with only the corrected JSON object."
                )));
            }
        }
    }
    Err(CorpusError::ExtractionRejected { attempts: EXTRACTION_ATTEMPTS, reason: last_error })
}
