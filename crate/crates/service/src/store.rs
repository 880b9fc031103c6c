//! File-backed persistence under one data directory.
//!
//! Layout:
//! ```text
//! blobs/<sha256>            raw document text, content addressed
//! documents/<key>.json      classified documents (raw text lives in blobs/)
//! jobs/<job_id>.json
//! models/<name>.bin         student models (self-checksummed)
//! reports/<name>.json
//! cache/teacher/<aa>/<key>  parsed teacher responses
//! ```
//! Every write goes to a temp file in the target directory and is renamed
//! into place. Files other than blobs and models start with a
//! `<sha256 hex>\n` header over the remaining bytes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use concern_core::teacher::{ResponseCache, TeacherError};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("integrity check failed for {0}")]
    Integrity(PathBuf),
    #[error("{kind} `{id}` not found")]
    NotFound { kind: &'static str, id: String },
    #[error("serialization error: {0}")]
    Serde(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `bytes` to `path` via temp file and rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| StoreError::Io { path: path.to_path_buf(), source: e.error })?;
    Ok(())
}

fn with_header(body: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(body.len() + 65);
    out.extend_from_slice(sha256_hex(body).as_bytes());
    out.push(b'\n');
    out.extend_from_slice(body);
    out
}

/// Reads a file written with a checksum header and returns its body.
pub fn read_checked(path: &Path) -> Result<Vec<u8>, StoreError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.len() < 65 || bytes[64] != b'\n' {
        return Err(StoreError::Integrity(path.to_path_buf()));
    }
    let (head, body) = (&bytes[..64], &bytes[65..]);
    if head != sha256_hex(body).as_bytes() {
        return Err(StoreError::Integrity(path.to_path_buf()));
    }
    Ok(body.to_vec())
}

pub fn write_checked(path: &Path, body: &[u8]) -> Result<(), StoreError> {
    atomic_write(path, &with_header(body))
}

/// File name for an arbitrary id.
fn key_for(id: &str) -> String {
    sha256_hex(id.as_bytes())[..40].to_string()
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Store, StoreError> {
        let root = root.into();
        for sub in ["blobs", "documents", "jobs", "models", "reports", "cache/teacher"] {
            let d = root.join(sub);
            fs::create_dir_all(&d).map_err(io_err(&d))?;
        }
        Ok(Store { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Stores `bytes` once under their SHA-256; returns the hash.
    pub fn put_blob(&self, bytes: &[u8]) -> Result<String, StoreError> {
        let hash = sha256_hex(bytes);
        let path = self.root.join("blobs").join(&hash);
        if !path.exists() {
            atomic_write(&path, bytes)?;
        }
        Ok(hash)
    }

    pub fn get_blob(&self, hash: &str) -> Result<Vec<u8>, StoreError> {
        let path = self.root.join("blobs").join(hash);
        if !path.exists() {
            return Err(StoreError::NotFound { kind: "blob", id: hash.to_string() });
        }
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        if sha256_hex(&bytes) != hash {
            return Err(StoreError::Integrity(path));
        }
        Ok(bytes)
    }

    pub fn blob_count(&self) -> Result<usize, StoreError> {
        let dir = self.root.join("blobs");
        Ok(fs::read_dir(&dir).map_err(io_err(&dir))?.filter_map(Result::ok).filter(|e| !is_temp(e)).count())
    }

    fn json_path(&self, kind: &str, id: &str) -> PathBuf {
        self.root.join(kind).join(format!("{}.json", key_for(id)))
    }

    pub fn save_json<T: Serialize>(&self, kind: &str, id: &str, value: &T) -> Result<(), StoreError> {
        let body = serde_json::to_vec_pretty(value).map_err(|e| StoreError::Serde(e.to_string()))?;
        write_checked(&self.json_path(kind, id), &body)
    }

    pub fn load_json<T: DeserializeOwned>(&self, kind: &'static str, id: &str) -> Result<T, StoreError> {
        let path = self.json_path(kind, id);
        if !path.exists() {
            return Err(StoreError::NotFound { kind, id: id.to_string() });
        }
        let body = read_checked(&path)?;
        serde_json::from_slice(&body).map_err(|e| StoreError::Serde(e.to_string()))
    }

    /// Every record of one kind, in file-name order.
    pub fn load_all<T: DeserializeOwned>(&self, kind: &str) -> Result<Vec<T>, StoreError> {
        let dir = self.root.join(kind);
        let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(io_err(&dir))?
            .filter_map(Result::ok)
            .filter(|e| !is_temp(e))
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        paths
            .iter()
            .map(|p| {
                let body = read_checked(p)?;
                serde_json::from_slice(&body).map_err(|e| StoreError::Serde(e.to_string()))
            })
            .collect()
    }

    pub fn model_path(&self, name: &str) -> PathBuf {
        self.root.join("models").join(format!("{name}.bin"))
    }

    pub fn save_model(&self, name: &str, bytes: &[u8]) -> Result<(), StoreError> {
        atomic_write(&self.model_path(name), bytes)
    }

    pub fn load_model_bytes(&self, name: &str) -> Result<Option<Vec<u8>>, StoreError> {
        let path = self.model_path(name);
        if !path.exists() {
            return Ok(None);
        }
        fs::read(&path).map(Some).map_err(io_err(&path))
    }

    pub fn save_report<T: Serialize>(&self, name: &str, value: &T) -> Result<(), StoreError> {
        self.save_json("reports", name, value)
    }

    pub fn teacher_cache(&self) -> FileCache {
        FileCache::new(self.root.join("cache/teacher"))
    }
}

fn is_temp(e: &fs::DirEntry) -> bool {
    e.file_name().to_string_lossy().starts_with(".tmp")
}

/// Teacher response cache stored as one checked file per key. Reads are
/// lock-free; each write is an atomic rename, so a crash never leaves a
/// partial entry visible.
#[derive(Debug, Clone)]
pub struct FileCache {
    dir: PathBuf,
}

impl FileCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FileCache { dir: dir.into() }
    }

    fn path(&self, key: &str) -> PathBuf {
        let shard = key.get(..2).unwrap_or("00");
        self.dir.join(shard).join(key)
    }

    pub fn len(&self) -> usize {
        fs::read_dir(&self.dir)
            .into_iter()
            .flatten()
            .filter_map(Result::ok)
            .filter_map(|shard| fs::read_dir(shard.path()).ok())
            .flat_map(|d| d.filter_map(Result::ok).filter(|e| !is_temp(e)))
            .count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ResponseCache for FileCache {
    fn get(&self, key: &str) -> Option<String> {
        let path = self.path(key);
        if !path.exists() {
            return None;
        }
        match read_checked(&path) {
            Ok(body) => String::from_utf8(body).ok(),
            Err(e) => {
                tracing::warn!("ignoring corrupt cache entry: {e}");
                None
            }
        }
    }

    fn put(&self, key: &str, response: &str) -> Result<(), TeacherError> {
        write_checked(&self.path(key), response.as_bytes()).map_err(|e| TeacherError::Cache(e.to_string()))
    }
}
