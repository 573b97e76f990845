//! Dialogue sessions: history, uploaded files and the in-memory session table.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant, SystemTime};

use thiserror::Error;
use tokio::sync::{Mutex as AsyncMutex, OwnedMutexGuard};
use uuid::Uuid;

use crate::llm::{ChatMessage, Role};

/// Extensions accepted for upload, lowercase, without the dot.
pub const ALLOWED_EXTENSIONS: [&str; 8] = ["epw", "jpeg", "jpg", "png", "txt", "json", "pdf", "docx"];
pub const DEFAULT_MAX_UPLOAD_BYTES: usize = 20 * 1024 * 1024;
pub const DEFAULT_SESSION_TTL: Duration = Duration::from_secs(2 * 60 * 60);

pub const SYSTEM_PROMPT: &str = "You are a green building design assistant. You help architects and engineers \
make early-stage, performance-oriented design decisions: climate analysis from EPW weather files, passive and \
active design strategies, certified green building cases (LEED, BREEAM and others) and the relevant standards.\n\
\n\
Use the provided functions instead of guessing. Weather questions about an uploaded EPW file go to \
describe_weather_data or visualize_weather_data; requests for example projects go to \
retrieve_green_building_cases; questions about concepts, codes and standards go to \
query_green_building_knowledge; uploaded text documents are read with analyze_uploaded_document. \
File names the user uploaded are listed at the end of their message as [Uploaded files: ...]. \
When a function returns an error, correct the arguments or explain the problem to the user. \
When a chart is produced, tell the user what it shows. Ground answers in retrieved material and say \
which case or source it came from.\n\
\n\
Let's think step by step.";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("session `{0}` is busy with another turn")]
    Busy(String),
    #[error("file type of `{0}` is not accepted")]
    UnsupportedType(String),
    #[error("file `{name}` exceeds the {limit}-byte upload limit")]
    TooLarge { name: String, limit: usize },
    #[error("file `{0}` has not been uploaded to this session")]
    FileNotFound(String),
    #[error("could not store upload: {0}")]
    StorageFailed(String),
}

/// Reduces a client-supplied file name to a safe base name: path components
/// are dropped and characters outside `[A-Za-z0-9._-]` become `_`.
/// Returns `None` when nothing usable remains.
pub fn sanitize_file_name(raw: &str) -> Option<String> {
    let base = raw.rsplit(['/', '\\']).next().unwrap_or("");
    let cleaned: String = base
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '_' })
        .collect();
    let cleaned = cleaned.trim_start_matches('.').to_string();
    if cleaned.is_empty() || cleaned.chars().all(|c| c == '_' || c == '.') {
        None
    } else {
        Some(cleaned)
    }
}

/// Lowercase extension of a file name, if it has one.
pub fn extension_of(name: &str) -> Option<String> {
    let (stem, ext) = name.rsplit_once('.')?;
    (!stem.is_empty() && !ext.is_empty()).then(|| ext.to_ascii_lowercase())
}

pub fn image_media_type(name: &str) -> Option<&'static str> {
    match extension_of(name)?.as_str() {
        "png" => Some("image/png"),
        "jpg" | "jpeg" => Some("image/jpeg"),
        _ => None,
    }
}

#[derive(Debug)]
pub struct Session {
    pub session_id: String,
    pub messages: Vec<ChatMessage>,
    /// Sanitized file name to stored path.
    pub uploaded_files: BTreeMap<String, PathBuf>,
    pub created_at: SystemTime,
    pub last_active: Instant,
    upload_dir: PathBuf,
}

/// A fresh session whose upload area is `<upload_root>/<session_id>`.
/// The directory is created on first upload.
pub fn new_session(upload_root: &Path) -> Session {
    let session_id = Uuid::new_v4().simple().to_string();
    Session {
        upload_dir: upload_root.join(&session_id),
        session_id,
        messages: vec![ChatMessage::system(SYSTEM_PROMPT)],
        uploaded_files: BTreeMap::new(),
        created_at: SystemTime::now(),
        last_active: Instant::now(),
    }
}

impl Session {
    pub fn upload_dir(&self) -> &Path {
        &self.upload_dir
    }

    /// Number of completed turns.
    pub fn turns(&self) -> usize {
        self.messages.iter().filter(|m| m.role == Role::User).count()
    }

    /// Stores an uploaded file, replacing an earlier file of the same name.
    /// Returns the sanitized name it is registered under.
    pub fn store_upload(&mut self, raw_name: &str, bytes: &[u8], max_bytes: usize) -> Result<String, SessionError> {
        let name = sanitize_file_name(raw_name).ok_or_else(|| SessionError::UnsupportedType(raw_name.to_string()))?;
        match extension_of(&name) {
            Some(ext) if ALLOWED_EXTENSIONS.contains(&ext.as_str()) => {}
            _ => return Err(SessionError::UnsupportedType(raw_name.to_string())),
        }
        if bytes.len() > max_bytes {
            return Err(SessionError::TooLarge { name, limit: max_bytes });
        }
        let failed = |e: std::io::Error| SessionError::StorageFailed(e.to_string());
        fs::create_dir_all(&self.upload_dir).map_err(failed)?;
        let path = self.upload_dir.join(&name);
        let mut tmp = tempfile::NamedTempFile::new_in(&self.upload_dir).map_err(failed)?;
        tmp.write_all(bytes).map_err(failed)?;
        tmp.persist(&path).map_err(|e| failed(e.error))?;
        self.uploaded_files.insert(name.clone(), path);
        self.last_active = Instant::now();
        Ok(name)
    }

    pub fn resolve_file(&self, name: &str) -> Result<&Path, SessionError> {
        self.uploaded_files
            .get(name)
            .or_else(|| sanitize_file_name(name).and_then(|n| self.uploaded_files.get(&n)))
            .map(PathBuf::as_path)
            .ok_or_else(|| SessionError::FileNotFound(name.to_string()))
    }

    fn remove_uploads(&self) {
        let _ = fs::remove_dir_all(&self.upload_dir);
    }
}

/// Live sessions keyed by id. Each session sits behind its own async mutex;
/// a second concurrent turn on the same session is rejected with `Busy`.
pub struct SessionStore {
    upload_root: PathBuf,
    ttl: Duration,
    sessions: Mutex<HashMap<String, Arc<AsyncMutex<Session>>>>,
}

impl SessionStore {
    pub fn new(upload_root: impl Into<PathBuf>, ttl: Duration) -> Self {
        SessionStore { upload_root: upload_root.into(), ttl, sessions: Mutex::new(HashMap::new()) }
    }

    pub fn upload_root(&self) -> &Path {
        &self.upload_root
    }

    pub fn create(&self) -> String {
        let session = new_session(&self.upload_root);
        let id = session.session_id.clone();
        self.sessions.lock().unwrap().insert(id.clone(), Arc::new(AsyncMutex::new(session)));
        id
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, session_id: &str) -> bool {
        self.sessions.lock().unwrap().contains_key(session_id)
    }

    /// Exclusive access to a session, failing fast when it is in use.
    pub fn acquire(&self, session_id: &str) -> Result<OwnedMutexGuard<Session>, SessionError> {
        let slot = self
            .sessions
            .lock()
            .unwrap()
            .get(session_id)
            .cloned()
            .ok_or_else(|| SessionError::UnknownSession(session_id.to_string()))?;
        slot.try_lock_owned().map_err(|_| SessionError::Busy(session_id.to_string()))
    }

    /// Drops sessions idle for longer than the TTL, deleting their uploads.
    /// Sessions with a turn in flight are kept. Returns the number evicted.
    pub fn evict_expired(&self) -> usize {
        let mut table = self.sessions.lock().unwrap();
        let expired: Vec<String> = table
            .iter()
            .filter(|(_, slot)| slot.try_lock().is_ok_and(|s| s.last_active.elapsed() > self.ttl))
            .map(|(id, _)| id.clone())
            .collect();
        for id in &expired {
            if let Some(slot) = table.remove(id) {
                if let Ok(s) = slot.try_lock() {
                    s.remove_uploads();
                }
            }
        }
        expired.len()
    }
}
