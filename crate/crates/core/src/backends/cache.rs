//! Append-only response cache.
//!
//! Layout: `<dir>/responses.jsonl`, one record per line:
//!
//! ```text
//! {"key":"<sha256 hex>","payload":"<json text>","checksum":"<sha256 hex of key NUL payload>"}
//! ```
//!
//! Each record is written with a single `write` on a file opened in append
//! mode, so concurrent writers never interleave within a record. A torn final
//! line (no trailing newline) from a crash is dropped on open; any other
//! malformed record is reported as [`CacheError::CacheCorrupt`].

use super::{Backend, BackendDescriptor, BackendError, GenerationConfig, TokenLogprob};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use thiserror::Error;

pub const CACHE_FILE: &str = "responses.jsonl";

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt cache record at byte offset {offset}: {reason}")]
    CacheCorrupt { offset: u64, reason: String },
    #[error("cached payload for {key} does not decode: {reason}")]
    Payload { key: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestKind {
    Sample,
    Logprobs,
}

#[derive(Serialize)]
struct FingerprintInput<'a> {
    backend: &'a str,
    prompt: &'a str,
    config: &'a GenerationConfig,
    kind: RequestKind,
    ordinal: u64,
}

/// Stable request fingerprint: SHA-256 over the canonical JSON of
/// (backend id, prompt, config, request kind, ordinal).
pub fn fingerprint(
    backend_id: &str,
    prompt: &str,
    config: &GenerationConfig,
    kind: RequestKind,
    ordinal: u64,
) -> String {
    let input = FingerprintInput {
        backend: backend_id,
        prompt,
        config,
        kind,
        ordinal,
    };
    let bytes = serde_json::to_vec(&input).expect("fingerprint input serializes");
    hex(&Sha256::digest(&bytes))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn checksum(key: &str, payload: &str) -> String {
    let mut h = Sha256::new();
    h.update(key.as_bytes());
    h.update([0u8]);
    h.update(payload.as_bytes());
    hex(&h.finalize())
}

#[derive(Serialize, Deserialize)]
struct Record {
    key: String,
    payload: String,
    checksum: String,
}

#[derive(Debug)]
pub struct ResponseCache {
    path: PathBuf,
    index: RwLock<HashMap<String, String>>,
    writer: Mutex<File>,
}

impl ResponseCache {
    pub fn open(dir: &Path) -> Result<Self, CacheError> {
        let io = |source| CacheError::Io {
            path: dir.to_path_buf(),
            source,
        };
        std::fs::create_dir_all(dir).map_err(io)?;
        let path = dir.join(CACHE_FILE);
        let io = |source| CacheError::Io {
            path: path.clone(),
            source,
        };
        let mut contents = Vec::new();
        if path.exists() {
            File::open(&path)
                .and_then(|mut f| f.read_to_end(&mut contents))
                .map_err(io)?;
        }
        // drop a torn tail
        let complete = contents
            .iter()
            .rposition(|&b| b == b'\n')
            .map_or(0, |p| p + 1);
        if complete < contents.len() {
            log::warn!(
                "{}: discarding {} bytes of incomplete trailing record",
                path.display(),
                contents.len() - complete
            );
            OpenOptions::new()
                .write(true)
                .open(&path)
                .and_then(|f| f.set_len(complete as u64))
                .map_err(io)?;
        }
        let index = Self::parse(&contents[..complete])?;
        let writer = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io)?;
        Ok(Self {
            path,
            index: RwLock::new(index),
            writer: Mutex::new(writer),
        })
    }

    fn parse(contents: &[u8]) -> Result<HashMap<String, String>, CacheError> {
        let mut index = HashMap::new();
        let mut offset = 0u64;
        for line in contents.split_inclusive(|&b| b == b'\n') {
            let corrupt = |reason: String| CacheError::CacheCorrupt { offset, reason };
            let body = line.strip_suffix(b"\n").unwrap_or(line);
            if !body.is_empty() {
                let record: Record =
                    serde_json::from_slice(body).map_err(|e| corrupt(e.to_string()))?;
                if checksum(&record.key, &record.payload) != record.checksum {
                    return Err(corrupt("checksum mismatch".into()));
                }
                index.entry(record.key).or_insert(record.payload);
            }
            offset += line.len() as u64;
        }
        Ok(index)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.index.read().expect("cache index lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.index
            .read()
            .expect("cache index lock")
            .get(key)
            .cloned()
    }

    /// Appends a record; the first payload stored for a key wins.
    pub fn put(&self, key: &str, payload: &str) -> Result<(), CacheError> {
        if self
            .index
            .read()
            .expect("cache index lock")
            .contains_key(key)
        {
            return Ok(());
        }
        let record = Record {
            key: key.to_string(),
            payload: payload.to_string(),
            checksum: checksum(key, payload),
        };
        let mut line = serde_json::to_vec(&record).expect("record serializes");
        line.push(b'\n');
        {
            let mut writer = self.writer.lock().expect("cache writer lock");
            writer
                .write_all(&line)
                .and_then(|_| writer.flush())
                .map_err(|source| CacheError::Io {
                    path: self.path.clone(),
                    source,
                })?;
        }
        self.index
            .write()
            .expect("cache index lock")
            .entry(key.to_string())
            .or_insert_with(|| payload.to_string());
        Ok(())
    }
}

pub fn cache_get(cache: &ResponseCache, key: &str) -> Option<String> {
    cache.get(key)
}

pub fn cache_put(cache: &ResponseCache, key: &str, payload: &str) -> Result<(), CacheError> {
    cache.put(key, payload)
}

/// Serves requests from the cache and records every fresh response before
/// returning it.
pub struct CachedBackend {
    inner: Arc<dyn Backend>,
    cache: Arc<ResponseCache>,
}

impl CachedBackend {
    pub fn new(inner: Arc<dyn Backend>, cache: Arc<ResponseCache>) -> Self {
        Self { inner, cache }
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    fn decode<T: for<'de> Deserialize<'de>>(key: &str, payload: &str) -> Result<T, CacheError> {
        serde_json::from_str(payload).map_err(|e| CacheError::Payload {
            key: key.to_string(),
            reason: e.to_string(),
        })
    }

    fn store_samples(&self, keys: &[String], texts: &[String]) -> Result<(), CacheError> {
        for (key, text) in keys.iter().zip(texts) {
            let payload = serde_json::to_string(text).expect("string serializes");
            self.cache.put(key, &payload)?;
        }
        Ok(())
    }
}

impl Backend for CachedBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        self.inner.descriptor()
    }

    fn sample_completions(
        &self,
        prompt: &str,
        first_ordinal: u64,
        n: usize,
        config: &GenerationConfig,
    ) -> Result<Vec<String>, BackendError> {
        let id = &self.inner.descriptor().id;
        let keys: Vec<String> = (first_ordinal..first_ordinal + n as u64)
            .map(|i| fingerprint(id, prompt, config, RequestKind::Sample, i))
            .collect();
        let mut out: Vec<Option<String>> = Vec::with_capacity(n);
        for key in &keys {
            out.push(match self.cache.get(key) {
                Some(payload) => Some(Self::decode(key, &payload)?),
                None => None,
            });
        }
        // fetch each contiguous run of misses
        let mut i = 0;
        while i < n {
            if out[i].is_some() {
                i += 1;
                continue;
            }
            let start = i;
            while i < n && out[i].is_none() {
                i += 1;
            }
            let run = &keys[start..i];
            match self.inner.sample_completions(
                prompt,
                first_ordinal + start as u64,
                i - start,
                config,
            ) {
                Ok(texts) if texts.len() == run.len() => {
                    self.store_samples(run, &texts)?;
                    for (slot, text) in out[start..i].iter_mut().zip(texts) {
                        *slot = Some(text);
                    }
                }
                Ok(texts) => {
                    self.store_samples(run, &texts)?;
                    let received = out.iter().flatten().cloned().chain(texts).collect();
                    return Err(BackendError::PartialResult {
                        requested: n,
                        received,
                    });
                }
                Err(BackendError::PartialResult {
                    received: texts, ..
                }) => {
                    self.store_samples(run, &texts)?;
                    let received = out.iter().flatten().cloned().chain(texts).collect();
                    return Err(BackendError::PartialResult {
                        requested: n,
                        received,
                    });
                }
                Err(e) => return Err(e),
            }
        }
        Ok(out.into_iter().map(|t| t.expect("filled")).collect())
    }

    fn first_token_logprobs(
        &self,
        prompt: &str,
        config: &GenerationConfig,
    ) -> Result<Vec<TokenLogprob>, BackendError> {
        let id = &self.inner.descriptor().id;
        let key = fingerprint(id, prompt, config, RequestKind::Logprobs, 0);
        if let Some(payload) = self.cache.get(&key) {
            return Ok(Self::decode(&key, &payload)?);
        }
        let lps = self.inner.first_token_logprobs(prompt, config)?;
        let payload = serde_json::to_string(&lps).expect("logprobs serialize");
        self.cache.put(&key, &payload)?;
        Ok(lps)
    }

    fn request_count(&self) -> u64 {
        self.inner.request_count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::MockBackend;

    #[test]
    fn put_get_roundtrip_and_absence() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        assert_eq!(cache_get(&cache, "nope"), None);
        cache_put(&cache, "k", "{\"a\": 1.5e-3}").unwrap();
        assert_eq!(cache_get(&cache, "k").as_deref(), Some("{\"a\": 1.5e-3}"));
        drop(cache);
        let reopened = ResponseCache::open(dir.path()).unwrap();
        assert_eq!(reopened.get("k").as_deref(), Some("{\"a\": 1.5e-3}"));
        assert_eq!(reopened.len(), 1);
    }

    #[test]
    fn concurrent_puts() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Arc::new(ResponseCache::open(dir.path()).unwrap());
        std::thread::scope(|s| {
            for t in 0..8 {
                let cache = cache.clone();
                s.spawn(move || {
                    for i in 0..50 {
                        cache
                            .put(&format!("{t}-{i}"), &format!("\"v{t}{i}\""))
                            .unwrap();
                    }
                });
            }
        });
        let reopened = ResponseCache::open(dir.path()).unwrap();
        assert_eq!(reopened.len(), 400);
        assert_eq!(reopened.get("3-17").as_deref(), Some("\"v317\""));
    }

    #[test]
    fn corrupt_record_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        {
            let cache = ResponseCache::open(dir.path()).unwrap();
            cache.put("a", "\"x\"").unwrap();
        }
        let path = dir.path().join(CACHE_FILE);
        let first_len = std::fs::metadata(&path).unwrap().len();
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"key\":\"b\",\"payload\":\"1\",\"checksum\":\"00\"}\n")
            .unwrap();
        match ResponseCache::open(dir.path()) {
            Err(CacheError::CacheCorrupt { offset, .. }) => assert_eq!(offset, first_len),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn torn_tail_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        {
            let cache = ResponseCache::open(dir.path()).unwrap();
            cache.put("a", "\"x\"").unwrap();
        }
        let path = dir.path().join(CACHE_FILE);
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"key\":\"b\",\"pay").unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        assert_eq!(cache.len(), 1);
        cache.put("c", "\"y\"").unwrap();
        drop(cache);
        assert_eq!(ResponseCache::open(dir.path()).unwrap().len(), 2);
    }

    #[test]
    fn fingerprint_depends_on_every_part() {
        let cfg = GenerationConfig::for_mcr();
        let base = fingerprint("b", "p", &cfg, RequestKind::Sample, 0);
        assert_eq!(base, fingerprint("b", "p", &cfg, RequestKind::Sample, 0));
        assert_ne!(base, fingerprint("c", "p", &cfg, RequestKind::Sample, 0));
        assert_ne!(base, fingerprint("b", "q", &cfg, RequestKind::Sample, 0));
        assert_ne!(base, fingerprint("b", "p", &cfg, RequestKind::Sample, 1));
        assert_ne!(base, fingerprint("b", "p", &cfg, RequestKind::Logprobs, 0));
        assert_ne!(
            base,
            fingerprint(
                "b",
                "p",
                &GenerationConfig::for_lpr(),
                RequestKind::Sample,
                0
            )
        );
        assert_eq!(base.len(), 64);
    }

    #[test]
    fn cached_backend_fills_gaps_only() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Arc::new(ResponseCache::open(dir.path()).unwrap());
        let mock = Arc::new(
            MockBackend::new(
                "m",
                vec![("a".into(), 1.0), ("b".into(), 1.0)],
                vec![("1".into(), 0.5)],
                3,
            )
            .unwrap(),
        );
        let cached = CachedBackend::new(mock.clone(), cache);
        let cfg = GenerationConfig::for_mcr();
        let first = cached.sample_completions("p", 0, 5, &cfg).unwrap();
        assert_eq!(mock.request_count(), 1);
        let more = cached.sample_completions("p", 0, 8, &cfg).unwrap();
        assert_eq!(&more[..5], &first[..]);
        assert_eq!(mock.request_count(), 2);
        let again = cached.sample_completions("p", 0, 8, &cfg).unwrap();
        assert_eq!(again, more);
        assert_eq!(mock.request_count(), 2);
        assert_eq!(more, mock.sample_completions("p", 0, 8, &cfg).unwrap());

        let lp1 = cached
            .first_token_logprobs("p", &GenerationConfig::for_lpr())
            .unwrap();
        let lp2 = cached
            .first_token_logprobs("p", &GenerationConfig::for_lpr())
            .unwrap();
        assert_eq!(lp1, lp2);
        assert_eq!(mock.request_count(), 4);
    }
}
