//! Embedding, vector index persistence, exact cosine search and prompt
//! context assembly.
//!
//! The vector file is line-delimited JSON. The first line is a header, each
//! following line one entry:
//!
//! ```text
//! {"format":"gbqa-vectors","version":1,"embedder_id":"trigram-fnv1a-256","dim":256,"count":2}
//! {"chunk_id":"doc#0","source_doc":"doc","source_kind":"textbook","char_offset":0,"text":"...","vector":[0.1,...]}
//! ```

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::corpus::Chunk;

pub const DEFAULT_TOP_K: usize = 5;
pub const DEFAULT_CONTEXT_BUDGET: usize = 4000;
const FORMAT_TAG: &str = "gbqa-vectors";

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("nothing to embed")]
    EmptyInput,
    #[error("embedding request failed: {0}")]
    Upstream(String),
    #[error("index was built with embedder `{index}` but the query uses `{query}`")]
    EmbedderMismatch { index: String, query: String },
    #[error("vector dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("k must be at least 1")]
    InvalidK,
    #[error("vector store write failed: {0}")]
    StoreWriteFailed(#[source] std::io::Error),
    #[error("vector file {path}: {reason}")]
    BadVectorFile { path: String, reason: String },
}

/// Turns texts into fixed-dimension vectors.
#[async_trait]
pub trait Embedder: Send + Sync {
    /// Identifier recorded in an index so queries use the same model.
    fn id(&self) -> &str;

    async fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, RetrievalError>;
}

/// Embeds `texts`, checking cardinality and a uniform dimension.
pub async fn embed(texts: &[String], embedder: &dyn Embedder) -> Result<Vec<Vec<f64>>, RetrievalError> {
    if texts.is_empty() {
        return Err(RetrievalError::EmptyInput);
    }
    let vectors = embedder.embed_batch(texts).await?;
    if vectors.len() != texts.len() {
        return Err(RetrievalError::Upstream(format!(
            "{} texts produced {} vectors",
            texts.len(),
            vectors.len()
        )));
    }
    let dim = vectors[0].len();
    if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
        return Err(RetrievalError::DimensionMismatch { expected: dim, found: v.len() });
    }
    Ok(vectors)
}

/// Deterministic network-free embedder: lowercase character trigrams
/// (with two boundary markers on each side) hashed with FNV-1a into 256
/// buckets, then L2-normalised.
#[derive(Debug, Clone, Copy, Default)]
pub struct OfflineEmbedder;

impl OfflineEmbedder {
    pub const ID: &'static str = "trigram-fnv1a-256";
    pub const DIM: usize = 256;

    pub fn embed_one(&self, text: &str) -> Vec<f64> {
        let chars: Vec<char> = ['\u{2}', '\u{2}']
            .into_iter()
            .chain(text.chars().flat_map(char::to_lowercase))
            .chain(['\u{3}', '\u{3}'])
            .collect();
        let mut v = vec![0.0; Self::DIM];
        for tri in chars.windows(3) {
            let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
            let mut buf = [0u8; 4];
            for c in tri {
                for b in c.encode_utf8(&mut buf).bytes() {
                    hash ^= u64::from(b);
                    hash = hash.wrapping_mul(0x0100_0000_01b3);
                }
            }
            v[(hash % Self::DIM as u64) as usize] += 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        v
    }
}

#[async_trait]
impl Embedder for OfflineEmbedder {
    fn id(&self) -> &str {
        Self::ID
    }

    async fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, RetrievalError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

/// Client for an OpenAI-style `POST {base_url}/embeddings` endpoint.
pub struct RemoteEmbedder {
    http: reqwest::Client,
    base_url: String,
    model: String,
    api_key: Option<String>,
    id: String,
}

impl RemoteEmbedder {
    pub fn new(base_url: &str, model: &str, api_key: Option<String>, timeout: Duration) -> Result<Self, RetrievalError> {
        let http = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| RetrievalError::Upstream(e.to_string()))?;
        Ok(RemoteEmbedder {
            http,
            base_url: base_url.trim_end_matches('/').to_string(),
            model: model.to_string(),
            api_key,
            id: format!("remote:{model}"),
        })
    }
}

#[async_trait]
impl Embedder for RemoteEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    async fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, RetrievalError> {
        let mut req = self
            .http
            .post(format!("{}/embeddings", self.base_url))
            .json(&json!({ "model": self.model, "input": texts }));
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let upstream = |e: reqwest::Error| RetrievalError::Upstream(e.to_string());
        let resp = req.send().await.map_err(upstream)?;
        let status = resp.status();
        if !status.is_success() {
            return Err(RetrievalError::Upstream(format!("HTTP {status}")));
        }
        let body: Value = resp.json().await.map_err(upstream)?;
        let data = body
            .get("data")
            .and_then(Value::as_array)
            .ok_or_else(|| RetrievalError::Upstream("response has no data array".into()))?;
        let mut rows: Vec<(u64, Vec<f64>)> = Vec::with_capacity(data.len());
        for (pos, item) in data.iter().enumerate() {
            let index = item.get("index").and_then(Value::as_u64).unwrap_or(pos as u64);
            let vector: Vec<f64> = item
                .get("embedding")
                .and_then(Value::as_array)
                .ok_or_else(|| RetrievalError::Upstream("item without embedding".into()))?
                .iter()
                .map(|x| x.as_f64().ok_or_else(|| RetrievalError::Upstream("non-numeric embedding".into())))
                .collect::<Result<_, _>>()?;
            rows.push((index, vector));
        }
        rows.sort_by_key(|(i, _)| *i);
        Ok(rows.into_iter().map(|(_, v)| v).collect())
    }
}

/// Cosine similarity; zero when either vector has zero length.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    let denom = na.sqrt() * nb.sqrt();
    if denom == 0.0 {
        0.0
    } else {
        dot / denom
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    #[serde(flatten)]
    pub chunk: Chunk,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    embedder_id: String,
    dim: usize,
    entries: Vec<IndexEntry>,
}

#[derive(Serialize, Deserialize)]
struct FileHeader {
    format: String,
    version: u32,
    embedder_id: String,
    dim: usize,
    count: usize,
}

impl VectorIndex {
    pub fn embedder_id(&self) -> &str {
        &self.embedder_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn chunk(&self, chunk_id: &str) -> Option<&Chunk> {
        self.entries.iter().map(|e| &e.chunk).find(|c| c.chunk_id == chunk_id)
    }

    /// Writes the vector file atomically.
    pub fn persist(&self, path: &Path) -> Result<(), RetrievalError> {
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        fs::create_dir_all(dir).map_err(RetrievalError::StoreWriteFailed)?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(RetrievalError::StoreWriteFailed)?;
        {
            let mut w = std::io::BufWriter::new(tmp.as_file_mut());
            let header = FileHeader {
                format: FORMAT_TAG.into(),
                version: 1,
                embedder_id: self.embedder_id.clone(),
                dim: self.dim,
                count: self.entries.len(),
            };
            let io = RetrievalError::StoreWriteFailed;
            serde_json::to_writer(&mut w, &header).map_err(|e| io(e.into()))?;
            w.write_all(b"\n").map_err(io)?;
            for entry in &self.entries {
                serde_json::to_writer(&mut w, entry).map_err(|e| io(e.into()))?;
                w.write_all(b"\n").map_err(io)?;
            }
            w.flush().map_err(io)?;
        }
        tmp.persist(path).map_err(|e| RetrievalError::StoreWriteFailed(e.error))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, RetrievalError> {
        let bad = |reason: String| RetrievalError::BadVectorFile { path: path.display().to_string(), reason };
        let file = fs::File::open(path).map_err(|e| bad(e.to_string()))?;
        let mut lines = BufReader::new(file).lines();
        let header: FileHeader = match lines.next() {
            Some(line) => serde_json::from_str(&line.map_err(|e| bad(e.to_string()))?)
                .map_err(|e| bad(format!("header: {e}")))?,
            None => return Err(bad("empty file".into())),
        };
        if header.format != FORMAT_TAG || header.version != 1 {
            return Err(bad(format!("unsupported format {} v{}", header.format, header.version)));
        }
        let mut entries = Vec::with_capacity(header.count);
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| bad(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: IndexEntry = serde_json::from_str(&line).map_err(|e| bad(format!("entry {}: {e}", i + 1)))?;
            if entry.vector.len() != header.dim {
                return Err(bad(format!("entry {} has dimension {}", i + 1, entry.vector.len())));
            }
            entries.push(entry);
        }
        if entries.len() != header.count {
            return Err(bad(format!("header declares {} entries, found {}", header.count, entries.len())));
        }
        Ok(VectorIndex { embedder_id: header.embedder_id, dim: header.dim, entries })
    }
}

/// Embeds every chunk and builds an index.
pub async fn build_index(chunks: Vec<Chunk>, embedder: &dyn Embedder) -> Result<VectorIndex, RetrievalError> {
    if chunks.is_empty() {
        return Err(RetrievalError::EmptyInput);
    }
    let mut seen = HashSet::new();
    if let Some(dup) = chunks.iter().find(|c| !seen.insert(c.chunk_id.as_str())) {
        return Err(RetrievalError::BadVectorFile {
            path: "<memory>".into(),
            reason: format!("duplicate chunk id `{}`", dup.chunk_id),
        });
    }
    let texts: Vec<String> = chunks.iter().map(|c| c.text.clone()).collect();
    let vectors = embed(&texts, embedder).await?;
    let dim = vectors[0].len();
    Ok(VectorIndex {
        embedder_id: embedder.id().to_string(),
        dim,
        entries: chunks.into_iter().zip(vectors).map(|(chunk, vector)| IndexEntry { chunk, vector }).collect(),
    })
}

/// Builds an index and writes it to `path`.
pub async fn build_and_persist(chunks: Vec<Chunk>, embedder: &dyn Embedder, path: &Path) -> Result<VectorIndex, RetrievalError> {
    let index = build_index(chunks, embedder).await?;
    index.persist(path)?;
    Ok(index)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchHit {
    pub chunk_id: String,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
}

/// Heap item ordered so the worst hit (lowest score, then largest id) is the max.
struct Candidate<'a> {
    score: f64,
    chunk_id: &'a str,
}

impl Ord for Candidate<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then_with(|| self.chunk_id.cmp(other.chunk_id))
    }
}

impl PartialOrd for Candidate<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Candidate<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate<'_> {}

/// Top-k entries by cosine against `query`: score descending, then chunk id ascending.
pub fn search_vector(index: &VectorIndex, query: &[f64], k: usize) -> Result<Vec<SearchHit>, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::InvalidK);
    }
    if query.len() != index.dim {
        return Err(RetrievalError::DimensionMismatch { expected: index.dim, found: query.len() });
    }
    let mut heap: BinaryHeap<Candidate<'_>> = BinaryHeap::with_capacity(k + 1);
    for entry in &index.entries {
        let cand = Candidate { score: cosine(query, &entry.vector), chunk_id: &entry.chunk.chunk_id };
        if heap.len() < k {
            heap.push(cand);
        } else if heap.peek().is_some_and(|worst| cand < *worst) {
            heap.pop();
            heap.push(cand);
        }
    }
    Ok(heap
        .into_sorted_vec()
        .into_iter()
        .enumerate()
        .map(|(i, c)| SearchHit { chunk_id: c.chunk_id.to_string(), score: c.score, rank: i + 1 })
        .collect())
}

/// Embeds `query` and returns the top-k hits.
pub async fn search(index: &VectorIndex, query: &str, k: usize, embedder: &dyn Embedder) -> Result<Vec<SearchHit>, RetrievalError> {
    if embedder.id() != index.embedder_id {
        return Err(RetrievalError::EmbedderMismatch {
            index: index.embedder_id.clone(),
            query: embedder.id().to_string(),
        });
    }
    if k == 0 {
        return Err(RetrievalError::InvalidK);
    }
    if index.is_empty() {
        return Ok(Vec::new());
    }
    let q = embed(&[query.to_string()], embedder).await?.remove(0);
    search_vector(index, &q, k)
}

/// Anything that can resolve a chunk id to its chunk.
pub trait ChunkSource {
    fn chunk(&self, chunk_id: &str) -> Option<&Chunk>;
}

impl ChunkSource for VectorIndex {
    fn chunk(&self, chunk_id: &str) -> Option<&Chunk> {
        VectorIndex::chunk(self, chunk_id)
    }
}

impl ChunkSource for [Chunk] {
    fn chunk(&self, chunk_id: &str) -> Option<&Chunk> {
        self.iter().find(|c| c.chunk_id == chunk_id)
    }
}

fn context_entry(hit: &SearchHit, chunk: &Chunk) -> String {
    format!(
        "[{}] {} ({}, {}, score {:.3})\n{}\n\n",
        hit.rank, chunk.source_doc, chunk.source_kind, chunk.chunk_id, hit.score, chunk.text
    )
}

/// Concatenates hit chunks in rank order with source attributions. Stops
/// before the first chunk that would push the block past `budget`
/// characters; chunks are never split.
pub fn assemble_context<S: ChunkSource + ?Sized>(hits: &[SearchHit], corpus: &S, budget: usize) -> String {
    let mut out = String::new();
    let mut used = 0;
    for hit in hits {
        let Some(chunk) = corpus.chunk(&hit.chunk_id) else { continue };
        let entry = context_entry(hit, chunk);
        let n = entry.chars().count();
        if used + n > budget {
            break;
        }
        used += n;
        out.push_str(&entry);
    }
    out
}
