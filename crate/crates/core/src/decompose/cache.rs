use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Backend, DecomposeError, QueryTriple};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecomposeCacheEntry {
    pub key: String,
    pub value: QueryTriple,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
}

/// Content address of a decomposition: backend, model, prompt and the
/// whitespace-normalized query.
pub fn cache_key(backend: Backend, model: &str, prompt_digest: &str, query: &str) -> String {
    let normalized = query.split_whitespace().collect::<Vec<_>>().join(" ");
    let mut h = Sha256::new();
    for part in [backend.as_str(), model, prompt_digest, normalized.as_str()] {
        h.update(part.as_bytes());
        h.update([0u8]);
    }
    hex(&h.finalize())
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Key-addressed store of decompositions, on disk or in memory.
///
/// Writes to the same key are serialized; readers never see a partial file
/// because entries are written to a temporary name and renamed into place.
pub struct DecomposeCache {
    dir: Option<PathBuf>,
    memory: Mutex<HashMap<String, DecomposeCacheEntry>>,
    key_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    tmp_counter: AtomicU64,
}

impl DecomposeCache {
    pub fn in_memory() -> Self {
        Self {
            dir: None,
            memory: Mutex::new(HashMap::new()),
            key_locks: Mutex::new(HashMap::new()),
            tmp_counter: AtomicU64::new(0),
        }
    }

    pub fn open(dir: impl AsRef<Path>) -> Result<Self, DecomposeError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(|source| DecomposeError::Cache {
            path: dir.clone(),
            source,
        })?;
        Ok(Self {
            dir: Some(dir),
            ..Self::in_memory()
        })
    }

    fn entry_path(&self, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{key}.json")))
    }

    pub fn get(&self, key: &str) -> Option<QueryTriple> {
        if let Some(hit) = self.memory.lock().unwrap().get(key) {
            return Some(hit.value.clone());
        }
        let path = self.entry_path(key)?;
        let bytes = fs::read(&path).ok()?;
        match serde_json::from_slice::<DecomposeCacheEntry>(&bytes) {
            Ok(entry) if entry.key == key => {
                let value = entry.value.clone();
                self.memory.lock().unwrap().insert(key.to_string(), entry);
                Some(value)
            }
            Ok(_) | Err(_) => {
                log::warn!("ignoring unreadable cache entry {}", path.display());
                None
            }
        }
    }

    pub fn put(&self, key: &str, value: &QueryTriple) -> Result<(), DecomposeError> {
        let lock = {
            let mut locks = self.key_locks.lock().unwrap();
            locks.entry(key.to_string()).or_default().clone()
        };
        let _guard = lock.lock().unwrap();

        let entry = DecomposeCacheEntry {
            key: key.to_string(),
            value: value.clone(),
            created_at: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        };
        if let Some(path) = self.entry_path(key) {
            let tmp = path.with_extension(format!(
                "json.tmp.{}.{}",
                std::process::id(),
                self.tmp_counter.fetch_add(1, Ordering::Relaxed)
            ));
            let io = |source| DecomposeError::Cache {
                path: path.clone(),
                source,
            };
            let mut file = fs::File::create(&tmp).map_err(io)?;
            let body = serde_json::to_vec_pretty(&entry).expect("entry serializes");
            file.write_all(&body).map_err(io)?;
            file.sync_all().map_err(io)?;
            fs::rename(&tmp, &path).map_err(io)?;
        }
        self.memory.lock().unwrap().insert(key.to_string(), entry);
        Ok(())
    }
}
