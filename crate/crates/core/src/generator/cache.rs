//! Content-addressed store of completions, one JSON document per request
//! fingerprint. Lets an interrupted campaign resume without repeating
//! generator calls.

use std::collections::HashMap;
use std::fs;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{generate, GenerationParams, GeneratorBackend, GeneratorError, RenderedPrompt};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRecord {
    pub request_fingerprint: String,
    pub prompt: RenderedPrompt,
    pub params: GenerationParams,
    pub completion: String,
    pub backend_name: String,
    /// Seconds since the Unix epoch at which the completion was generated.
    pub timestamp: u64,
    #[serde(default)]
    pub truncated: bool,
    #[serde(default)]
    pub empty: bool,
}

#[derive(Serialize)]
struct FingerprintInput<'a> {
    full_text: &'a str,
    params: &'a GenerationParams,
    backend_name: &'a str,
}

/// SHA-256 (lowercase hex) of the canonical JSON encoding of
/// `{full_text, params, backend_name}`.
pub fn fingerprint(full_text: &str, params: &GenerationParams, backend_name: &str) -> String {
    let canonical = serde_json::to_vec(&FingerprintInput {
        full_text,
        params,
        backend_name,
    })
    .expect("fingerprint input always serialises");
    hex::encode(Sha256::digest(&canonical))
}

pub struct Cache {
    dir: PathBuf,
    reads: bool,
    in_flight: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl std::fmt::Debug for Cache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Cache")
            .field("dir", &self.dir)
            .field("reads", &self.reads)
            .finish()
    }
}

fn io_error(path: &Path, source: std::io::Error) -> GeneratorError {
    GeneratorError::CacheIo {
        path: path.display().to_string(),
        source,
    }
}

impl Cache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, GeneratorError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
        Ok(Self {
            dir,
            reads: true,
            in_flight: Mutex::new(HashMap::new()),
        })
    }

    /// A cache that never serves existing entries but still records new ones.
    pub fn write_only(mut self) -> Self {
        self.reads = false;
        self
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn entry_path(&self, fingerprint: &str) -> PathBuf {
        self.dir.join(format!("{fingerprint}.json"))
    }

    pub fn len(&self) -> Result<usize, GeneratorError> {
        let entries = fs::read_dir(&self.dir).map_err(|e| io_error(&self.dir, e))?;
        Ok(entries
            .filter_map(Result::ok)
            .filter(|e| e.path().extension().is_some_and(|x| x == "json"))
            .count())
    }

    pub fn is_empty(&self) -> Result<bool, GeneratorError> {
        self.len().map(|n| n == 0)
    }

    /// Loads and verifies an entry; a stored request that no longer hashes
    /// to its file name is an integrity fault.
    pub fn get(&self, fingerprint: &str) -> Result<Option<CompletionRecord>, GeneratorError> {
        let path = self.entry_path(fingerprint);
        let raw = match fs::read(&path) {
            Ok(raw) => raw,
            Err(e) if e.kind() == ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(io_error(&path, e)),
        };
        let integrity = |reason: String| GeneratorError::CacheIntegrity {
            entry: fingerprint.to_string(),
            reason,
        };
        let record: CompletionRecord =
            serde_json::from_slice(&raw).map_err(|e| integrity(format!("unreadable: {e}")))?;
        let recomputed = super::fingerprint(&record.prompt.full_text, &record.params, &record.backend_name);
        if record.request_fingerprint != fingerprint || recomputed != fingerprint {
            return Err(integrity(format!("stored request hashes to {recomputed}")));
        }
        Ok(Some(record))
    }

    /// Writes an entry atomically (temporary file, then rename).
    pub fn put(&self, record: &CompletionRecord) -> Result<(), GeneratorError> {
        let path = self.entry_path(&record.request_fingerprint);
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(|e| io_error(&self.dir, e))?;
        let body = serde_json::to_vec_pretty(record).expect("completion records always serialise");
        tmp.write_all(&body).map_err(|e| io_error(tmp.path(), e))?;
        tmp.persist(&path).map_err(|e| io_error(&path, e.error))?;
        Ok(())
    }

    fn lock_for(&self, fingerprint: &str) -> Arc<Mutex<()>> {
        let mut map = self.in_flight.lock().expect("cache lock table poisoned");
        map.entry(fingerprint.to_string()).or_default().clone()
    }
}

/// Returns the cached completion for this request, generating and storing
/// it first on a miss. The flag is `true` on a cache hit.
pub fn cache_get_or_generate<G: GeneratorBackend + ?Sized>(
    cache: &Cache,
    backend: &G,
    prompt: &RenderedPrompt,
    params: &GenerationParams,
) -> Result<(CompletionRecord, bool), GeneratorError> {
    let backend_name = backend.name();
    let fp = fingerprint(&prompt.full_text, params, backend_name);
    // Serialise work on one fingerprint so concurrent identical requests
    // reach the backend once.
    let lock = cache.lock_for(&fp);
    let _guard = lock.lock().expect("cache entry lock poisoned");

    if cache.reads {
        if let Some(record) = cache.get(&fp)? {
            return Ok((record, true));
        }
    }
    let generation = generate(backend, prompt, params)?;
    let record = CompletionRecord {
        request_fingerprint: fp,
        prompt: prompt.clone(),
        params: params.clone(),
        empty: generation.is_empty(),
        truncated: generation.truncated,
        completion: generation.text,
        backend_name: backend_name.to_string(),
        timestamp: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    cache.put(&record)?;
    Ok((record, false))
}
