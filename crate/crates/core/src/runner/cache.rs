//! On-disk response cache: one JSON file per request hash, holding the full
//! request and the raw response body.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::{ChatCompletion, ChatRequest};
use crate::prng::sha256_hex;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct Entry {
    request: ChatRequest,
    completion: ChatCompletion,
}

#[derive(Debug)]
pub struct ResponseCache {
    dir: PathBuf,
    counter: AtomicU64,
}

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            counter: AtomicU64::new(0),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Hash of model, messages, temperature and max tokens.
    pub fn key(request: &ChatRequest) -> String {
        sha256_hex(serde_json::to_vec(request).expect("request serializes"))
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    /// Returns the stored completion only if the stored request is identical.
    pub fn get(&self, request: &ChatRequest) -> Option<ChatCompletion> {
        let text = fs::read_to_string(self.path(&Self::key(request))).ok()?;
        let entry: Entry = serde_json::from_str(&text).ok()?;
        (entry.request == *request).then_some(entry.completion)
    }

    /// Writes through a uniquely named temporary file and renames it into
    /// place, so readers never see partial entries.
    pub fn put(&self, request: &ChatRequest, completion: &ChatCompletion) -> std::io::Result<()> {
        let key = Self::key(request);
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        let tmp = self.dir.join(format!(".{key}.{}.{n}.tmp", std::process::id()));
        let entry = Entry {
            request: request.clone(),
            completion: completion.clone(),
        };
        let mut file = fs::File::create(&tmp)?;
        file.write_all(&serde_json::to_vec_pretty(&entry).expect("entry serializes"))?;
        file.sync_all()?;
        fs::rename(&tmp, self.path(&key))
    }
}
