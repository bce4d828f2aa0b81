//! Append-only response cache, persisted as JSON lines of
//! `{"request_key": ..., "text": ...}`. The same format doubles as the
//! replay store, so a cache file from one run can script the next.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::LlmError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CacheEntry {
    pub request_key: String,
    pub text: String,
}

/// Parse a JSON-lines store into a key -> text map. Later entries for the
/// same key win, matching append-only overwrite semantics.
pub fn parse_store(content: &str) -> Result<BTreeMap<String, String>, LlmError> {
    let mut map = BTreeMap::new();
    for (idx, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: CacheEntry = serde_json::from_str(line).map_err(|e| LlmError::Store {
            line: idx + 1,
            detail: e.to_string(),
        })?;
        map.insert(entry.request_key, entry.text);
    }
    Ok(map)
}

/// Read a whole store file.
pub fn load_store(path: &Path) -> Result<BTreeMap<String, String>, LlmError> {
    let content = std::fs::read_to_string(path).map_err(|source| LlmError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_store(&content)
}

/// On-disk response cache with an in-memory index.
#[derive(Debug)]
pub struct Cache {
    path: PathBuf,
    entries: BTreeMap<String, String>,
    file: File,
}

impl Cache {
    /// Open (or create) a cache file. A corrupt final record, the signature
    /// of an interrupted append, is truncated away with a warning; corruption
    /// anywhere else is an error.
    pub fn open(path: &Path) -> Result<Self, LlmError> {
        let mut file = OpenOptions::new()
            .read(true)
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| LlmError::Io {
                path: path.display().to_string(),
                source,
            })?;
        let mut content = String::new();
        file.read_to_string(&mut content).map_err(|source| LlmError::Io {
            path: path.display().to_string(),
            source,
        })?;

        let mut entries = BTreeMap::new();
        let mut good_bytes = 0usize;
        let mut lines = content.split_inclusive('\n').enumerate().peekable();
        while let Some((idx, raw)) = lines.next() {
            let line = raw.trim_end_matches(['\n', '\r']);
            if line.trim().is_empty() {
                good_bytes += raw.len();
                continue;
            }
            match serde_json::from_str::<CacheEntry>(line) {
                Ok(entry) => {
                    entries.insert(entry.request_key, entry.text);
                    good_bytes += raw.len();
                }
                Err(e) if lines.peek().is_none() => {
                    log::warn!(
                        "cache {}: dropping corrupt trailing record at line {}: {e}",
                        path.display(),
                        idx + 1
                    );
                    file.set_len(good_bytes as u64).map_err(|source| LlmError::Io {
                        path: path.display().to_string(),
                        source,
                    })?;
                    file.seek(SeekFrom::End(0)).map_err(|source| LlmError::Io {
                        path: path.display().to_string(),
                        source,
                    })?;
                    break;
                }
                Err(e) => {
                    return Err(LlmError::Store {
                        line: idx + 1,
                        detail: e.to_string(),
                    });
                }
            }
        }

        Ok(Cache {
            path: path.to_path_buf(),
            entries,
            file,
        })
    }

    pub fn get(&self, request_key: &str) -> Option<&str> {
        self.entries.get(request_key).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Store a response. The entry is appended as one write so a crash can
    /// corrupt at most the final record.
    pub fn put(&mut self, request_key: &str, text: &str) -> Result<(), LlmError> {
        if self.entries.get(request_key).map(String::as_str) == Some(text) {
            return Ok(());
        }
        let entry = CacheEntry {
            request_key: request_key.to_string(),
            text: text.to_string(),
        };
        let mut line = serde_json::to_string(&entry).expect("cache entry serializes");
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|()| self.file.flush())
            .map_err(|source| LlmError::Io {
                path: self.path.display().to_string(),
                source,
            })?;
        self.entries.insert(entry.request_key, entry.text);
        Ok(())
    }
}
