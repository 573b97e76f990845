//! Knowledge-base directory: the merged case library plus one vector file for
//! case chunks and one for reference-text chunks.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use gbqa_core::corpus::{case_files, load_cases, load_reference_texts, CaseLibrary, CaseRecord, CorpusError};
use gbqa_core::retrieval::{build_and_persist, Embedder, RetrievalError, VectorIndex};
use gbqa_core::tools::KnowledgeBase;
use thiserror::Error;

pub const CASES_FILE: &str = "cases.json";
pub const CASE_VECTORS: &str = "cases.vec.jsonl";
pub const KNOWLEDGE_VECTORS: &str = "knowledge.vec.jsonl";

#[derive(Debug, Error)]
pub enum KbError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("{file} was built with embedder `{index}`, but `{configured}` is configured")]
    EmbedderMismatch { file: String, index: String, configured: String },
    #[error("nothing to ingest: no cases or reference texts found")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IngestReport {
    pub cases: usize,
    pub case_chunks: usize,
    pub text_chunks: usize,
}

/// Builds a knowledge-base directory from a folder of case JSON files and a
/// folder of reference texts (`textbooks/`, `standards/`, `manuals/`).
pub async fn ingest(
    cases_dir: Option<&Path>,
    texts_dir: Option<&Path>,
    out: &Path,
    embedder: &dyn Embedder,
    chunk_size: usize,
    overlap: usize,
) -> Result<IngestReport, KbError> {
    fs::create_dir_all(out).map_err(|e| KbError::Io(out.display().to_string(), e))?;
    let mut report = IngestReport { cases: 0, case_chunks: 0, text_chunks: 0 };

    if let Some(dir) = cases_dir {
        let library = load_cases(case_files(dir)?.as_slice())?;
        if !library.is_empty() {
            let path = out.join(CASES_FILE);
            let json = serde_json::to_vec_pretty(library.cases()).expect("case records serialize");
            fs::write(&path, json).map_err(|e| KbError::Io(path.display().to_string(), e))?;
            let chunks = library.chunks(chunk_size, overlap)?;
            report.cases = library.len();
            report.case_chunks = chunks.len();
            build_and_persist(chunks, embedder, &out.join(CASE_VECTORS)).await?;
        }
    }
    if let Some(dir) = texts_dir {
        let chunks = load_reference_texts(dir, chunk_size, overlap)?;
        if !chunks.is_empty() {
            report.text_chunks = chunks.len();
            build_and_persist(chunks, embedder, &out.join(KNOWLEDGE_VECTORS)).await?;
        }
    }
    if report.case_chunks + report.text_chunks == 0 {
        return Err(KbError::Empty);
    }
    Ok(report)
}

fn load_index(path: &Path, embedder: &dyn Embedder) -> Result<Option<VectorIndex>, KbError> {
    if !path.is_file() {
        return Ok(None);
    }
    let index = VectorIndex::load(path)?;
    if index.embedder_id() != embedder.id() {
        return Err(KbError::EmbedderMismatch {
            file: path.display().to_string(),
            index: index.embedder_id().to_string(),
            configured: embedder.id().to_string(),
        });
    }
    Ok(Some(index))
}

/// Loads whatever parts of a knowledge-base directory exist.
pub fn load(dir: &Path, embedder: Arc<dyn Embedder>) -> Result<KnowledgeBase, KbError> {
    let cases = match load_index(&dir.join(CASE_VECTORS), embedder.as_ref())? {
        Some(index) => {
            let path = dir.join(CASES_FILE);
            let text = fs::read(&path).map_err(|e| KbError::Io(path.display().to_string(), e))?;
            let records: Vec<CaseRecord> = serde_json::from_slice(&text).map_err(|e| CorpusError::SchemaViolation {
                file: path.display().to_string(),
                field: "<json>".into(),
                reason: e.to_string(),
            })?;
            Some((CaseLibrary::from_records(records)?, index))
        }
        None => None,
    };
    let knowledge = load_index(&dir.join(KNOWLEDGE_VECTORS), embedder.as_ref())?;
    Ok(KnowledgeBase { embedder, cases, knowledge })
}
