//! Teacher response cache.

use std::collections::HashMap;
use std::sync::RwLock;

use sha2::{Digest, Sha256};

use super::TeacherError;

/// Hex SHA-256 of the prompt and model name, plus the sample index for
/// repeated sampling of the same prompt.
pub fn cache_key(prompt: &str, model_name: &str, sample: Option<u32>) -> String {
    let mut h = Sha256::new();
    h.update(prompt.as_bytes());
    h.update([0u8]);
    h.update(model_name.as_bytes());
    if let Some(s) = sample {
        h.update([0u8]);
        h.update(s.to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Store of successfully parsed teacher responses.
pub trait ResponseCache: Send + Sync {
    fn get(&self, key: &str) -> Option<String>;
    fn put(&self, key: &str, response: &str) -> Result<(), TeacherError>;
}

#[derive(Debug, Default)]
pub struct MemoryCache {
    entries: RwLock<HashMap<String, String>>,
}

impl MemoryCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ResponseCache for MemoryCache {
    fn get(&self, key: &str) -> Option<String> {
        self.entries.read().expect("cache lock").get(key).cloned()
    }

    fn put(&self, key: &str, response: &str) -> Result<(), TeacherError> {
        self.entries.write().expect("cache lock").insert(key.to_string(), response.to_string());
        Ok(())
    }
}

/// A cache that stores nothing.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoCache;

impl ResponseCache for NoCache {
    fn get(&self, _: &str) -> Option<String> {
        None
    }

    fn put(&self, _: &str, _: &str) -> Result<(), TeacherError> {
        Ok(())
    }
}
