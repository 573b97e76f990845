//! Flat on-disk store for tool-produced files (charts, documents).
//!
//! Each artifact is stored as `<artifact_id>.<ext>` in one directory. Writes
//! go to a temporary file in the same directory and are renamed into place,
//! so readers never observe a partial file.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;
use uuid::Uuid;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("artifact store write failed: {0}")]
    WriteFailed(#[source] io::Error),
    #[error("artifact `{0}` not found")]
    NotFound(String),
    #[error("artifact store read failed: {0}")]
    ReadFailed(#[source] io::Error),
}

/// Kinds of files the store hands out, keyed by extension.
const MEDIA_TYPES: [(&str, &str); 6] = [
    ("svg", "image/svg+xml"),
    ("png", "image/png"),
    ("jpg", "image/jpeg"),
    ("json", "application/json"),
    ("txt", "text/plain; charset=utf-8"),
    ("csv", "text/csv"),
];

pub fn media_type_for(ext: &str) -> Option<&'static str> {
    MEDIA_TYPES.iter().find(|(e, _)| *e == ext).map(|(_, m)| *m)
}

/// A stored artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StoredArtifact {
    pub artifact_id: String,
    pub media_type: &'static str,
    pub path: PathBuf,
}

#[derive(Debug, Clone)]
pub struct ArtifactStore {
    root: PathBuf,
}

impl ArtifactStore {
    pub fn open(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(ArtifactStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Stores `bytes` under a fresh id. `ext` must be a known extension.
    pub fn put(&self, bytes: &[u8], ext: &str) -> Result<StoredArtifact, StoreError> {
        let media_type = media_type_for(ext).ok_or_else(|| {
            StoreError::WriteFailed(io::Error::new(
                io::ErrorKind::InvalidInput,
                format!("unsupported artifact extension `{ext}`"),
            ))
        })?;
        let artifact_id = Uuid::new_v4().simple().to_string();
        let path = self.root.join(format!("{artifact_id}.{ext}"));
        let mut tmp = tempfile::NamedTempFile::new_in(&self.root).map_err(StoreError::WriteFailed)?;
        tmp.write_all(bytes).map_err(StoreError::WriteFailed)?;
        tmp.persist(&path).map_err(|e| StoreError::WriteFailed(e.error))?;
        Ok(StoredArtifact { artifact_id, media_type, path })
    }

    /// Looks an id up. Ids that are not plain alphanumeric tokens are
    /// reported as missing without touching the filesystem.
    pub fn locate(&self, artifact_id: &str) -> Result<StoredArtifact, StoreError> {
        let valid = !artifact_id.is_empty()
            && artifact_id.len() <= 64
            && artifact_id.bytes().all(|b| b.is_ascii_alphanumeric());
        if !valid {
            return Err(StoreError::NotFound(artifact_id.to_string()));
        }
        MEDIA_TYPES
            .iter()
            .map(|(ext, media_type)| StoredArtifact {
                artifact_id: artifact_id.to_string(),
                media_type,
                path: self.root.join(format!("{artifact_id}.{ext}")),
            })
            .find(|a| a.path.is_file())
            .ok_or_else(|| StoreError::NotFound(artifact_id.to_string()))
    }

    pub fn read(&self, artifact_id: &str) -> Result<(Vec<u8>, &'static str), StoreError> {
        let found = self.locate(artifact_id)?;
        let bytes = fs::read(&found.path).map_err(StoreError::ReadFailed)?;
        Ok((bytes, found.media_type))
    }
}
