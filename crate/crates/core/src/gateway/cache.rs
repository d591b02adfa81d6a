//! Append-only JSON-Lines response cache. Newest entry for a key wins,
//! the file survives process restarts unchanged, and a crash mid-write
//! costs at most the last line. One serialized writer, any number of
//! concurrent readers.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::BackendReply;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CacheLine {
    key: String,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    input_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    output_tokens: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct CachedEntry {
    pub text: String,
    pub input_tokens: Option<u64>,
    pub output_tokens: Option<u64>,
}

pub struct ResponseCache {
    path: PathBuf,
    map: RwLock<HashMap<String, CachedEntry>>,
    writer: Mutex<BufWriter<File>>,
}

impl ResponseCache {
    /// Open (creating if needed) a cache file and load its entries.
    /// Corrupt lines are skipped with a warning; they can only arise from
    /// a crash mid-append.
    pub fn open(path: &Path) -> std::io::Result<Self> {
        let mut map = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for (idx, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CacheLine>(&line) {
                    Ok(entry) => {
                        map.insert(
                            entry.key,
                            CachedEntry {
                                text: entry.text,
                                input_tokens: entry.input_tokens,
                                output_tokens: entry.output_tokens,
                            },
                        );
                    }
                    Err(e) => {
                        tracing::warn!(line = idx + 1, error = %e, "skipping corrupt cache line")
                    }
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(ResponseCache {
            path: path.to_path_buf(),
            map: RwLock::new(map),
            writer: Mutex::new(BufWriter::new(file)),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("cache map lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &str) -> Option<CachedEntry> {
        self.map.read().expect("cache map lock").get(key).cloned()
    }

    pub fn put(&self, key: &str, reply: &BackendReply) -> std::io::Result<()> {
        let line = CacheLine {
            key: key.to_string(),
            text: reply.text.clone(),
            input_tokens: reply.input_tokens,
            output_tokens: reply.output_tokens,
        };
        {
            let mut writer = self.writer.lock().expect("cache writer lock");
            serde_json::to_writer(&mut *writer, &line)?;
            writer.write_all(b"\n")?;
            writer.flush()?;
        }
        self.map.write().expect("cache map lock").insert(
            key.to_string(),
            CachedEntry {
                text: line.text,
                input_tokens: line.input_tokens,
                output_tokens: line.output_tokens,
            },
        );
        Ok(())
    }
}
