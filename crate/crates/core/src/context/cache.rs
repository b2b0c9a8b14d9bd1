//! JSON-lines cache of LLM percentile replies.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

/// One cached reply: one line of the cache file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub context: String,
    pub variable: String,
    pub percentile: u8,
}

/// Reply cache keyed by `(context, variable)`.
///
/// Reads take a shared lock; inserts serialize on the file handle and append
/// a single line, so a crash can at worst leave one truncated final line,
/// which is skipped on the next load. Later records override earlier ones.
#[derive(Debug, Default)]
pub struct EmbeddingCache {
    entries: RwLock<HashMap<(String, String), u8>>,
    file: Option<Mutex<File>>,
    path: Option<PathBuf>,
}

impl EmbeddingCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (creating if needed) a cache file and loads its records.
    pub fn open(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let path = path.as_ref();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut entries = HashMap::new();
        if path.exists() {
            for line in BufReader::new(File::open(path)?).lines() {
                let line = line?;
                if let Ok(r) = serde_json::from_str::<CacheRecord>(&line) {
                    if r.percentile <= 100 {
                        entries.insert((r.context, r.variable), r.percentile);
                    }
                }
            }
        }
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        // Terminate a torn last line so the next record starts cleanly.
        let len = file.metadata()?.len();
        if len > 0 {
            let bytes = std::fs::read(path)?;
            if bytes.last() != Some(&b'\n') {
                file.write_all(b"\n")?;
            }
        }
        Ok(Self { entries: RwLock::new(entries), file: Some(Mutex::new(file)), path: Some(path.to_path_buf()) })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, context: &str, variable: &str) -> Option<u8> {
        self.entries.read().expect("cache lock").get(&(context.to_string(), variable.to_string())).copied()
    }

    pub fn insert(&self, context: &str, variable: &str, percentile: u8) -> std::io::Result<()> {
        if let Some(file) = &self.file {
            let record = CacheRecord { context: context.to_string(), variable: variable.to_string(), percentile };
            let mut line = serde_json::to_vec(&record).map_err(std::io::Error::other)?;
            line.push(b'\n');
            let mut f = file.lock().expect("cache file lock");
            f.write_all(&line)?;
            f.flush()?;
        }
        self.entries.write().expect("cache lock").insert((context.to_string(), variable.to_string()), percentile);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
