//! Cache store: every LLM exchange plus per-module I/O records.
//!
//! Exchanges serve exact lookups (keyed by a content hash of the prompt)
//! and nearest-neighbor lookups over the embedding of the query's
//! serialized record. Module I/O records let plan evaluation replay
//! previous verdicts without touching a provider.
//!
//! Persistence is an append-only line-delimited file; the in-memory maps
//! are rebuilt on load. Single-writer, multi-reader.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::ModuleVerdict;
use crate::provider::{Embedding, LlmExchange};
use crate::value::fnv1a;

/// One cached LLM exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachedExchange {
    /// Content hash of the prompt. Collisions fall back to full-prompt
    /// equality.
    pub key: u64,
    pub exchange: LlmExchange,
    /// Serialized record text the query was about; what gets embedded.
    pub record_text: String,
    pub embedding: Embedding,
    pub created_seq: u64,
}

/// Key for a replayable module execution.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModuleIOKey {
    pub module_id: String,
    pub params_digest: u64,
    pub input_digest: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModuleIORecord {
    key: ModuleIOKey,
    verdict: ModuleVerdict,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum PersistedRecord {
    Exchange(CachedExchange),
    ModuleIo(ModuleIORecord),
}

#[derive(Default)]
struct StoreInner {
    by_key: HashMap<u64, Vec<usize>>,
    exchanges: Vec<CachedExchange>,
    module_io: HashMap<ModuleIOKey, ModuleVerdict>,
    replay_hits: u64,
    next_seq: u64,
}

/// The cache store. Cheap to share behind an `Arc`.
pub struct CacheStore {
    inner: RwLock<StoreInner>,
    path: Option<PathBuf>,
    dim: usize,
}

impl CacheStore {
    pub fn in_memory(dim: usize) -> Self {
        Self {
            inner: RwLock::new(StoreInner::default()),
            path: None,
            dim,
        }
    }

    /// Open (or create) a persistent store backed by `path`.
    pub fn open(path: &Path, dim: usize) -> Result<Self> {
        let mut inner = StoreInner::default();
        if path.exists() {
            let file = std::fs::File::open(path)?;
            for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let record: PersistedRecord =
                    serde_json::from_str(&line).map_err(|e| Error::CorruptCache {
                        line: lineno + 1,
                        reason: e.to_string(),
                    })?;
                match record {
                    PersistedRecord::Exchange(e) => {
                        inner.next_seq = inner.next_seq.max(e.created_seq + 1);
                        inner.by_key.entry(e.key).or_default().push(inner.exchanges.len());
                        inner.exchanges.push(e);
                    }
                    PersistedRecord::ModuleIo(r) => {
                        inner.module_io.insert(r.key, r.verdict);
                    }
                }
            }
        }
        Ok(Self {
            inner: RwLock::new(inner),
            path: Some(path.to_path_buf()),
            dim,
        })
    }

    fn append(&self, record: &PersistedRecord) -> Result<()> {
        if let Some(path) = &self.path {
            let mut file = std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)?;
            let line = serde_json::to_string(record)?;
            writeln!(file, "{line}")?;
        }
        Ok(())
    }

    pub fn prompt_key(prompt: &str) -> u64 {
        fnv1a(prompt.as_bytes())
    }

    /// Store one exchange, indexed both exactly and by embedding.
    pub fn put_exchange(
        &self,
        record_text: &str,
        embedding: Embedding,
        exchange: LlmExchange,
    ) -> Result<CachedExchange> {
        if embedding.dim() != self.dim {
            return Err(Error::DimMismatch {
                got: embedding.dim(),
                want: self.dim,
            });
        }
        let cached = {
            let mut inner = self.inner.write().unwrap();
            let cached = CachedExchange {
                key: Self::prompt_key(&exchange.prompt),
                exchange,
                record_text: record_text.to_string(),
                embedding,
                created_seq: inner.next_seq,
            };
            inner.next_seq += 1;
            let idx = inner.exchanges.len();
            inner.by_key.entry(cached.key).or_default().push(idx);
            inner.exchanges.push(cached.clone());
            cached
        };
        self.append(&PersistedRecord::Exchange(cached.clone()))?;
        Ok(cached)
    }

    /// Exact lookup: hit iff an equal prompt was stored.
    pub fn lookup_exact(&self, prompt: &str) -> Option<CachedExchange> {
        let key = Self::prompt_key(prompt);
        let inner = self.inner.read().unwrap();
        inner.by_key.get(&key).and_then(|idxs| {
            idxs.iter()
                .map(|&i| &inner.exchanges[i])
                .find(|e| e.exchange.prompt == prompt)
                .cloned()
        })
    }

    /// k nearest stored exchanges by cosine distance, ties broken by
    /// insertion order. Exact linear scan.
    pub fn nearest(&self, query: &Embedding, k: usize) -> Result<Vec<(CachedExchange, f64)>> {
        if query.dim() != self.dim {
            return Err(Error::DimMismatch {
                got: query.dim(),
                want: self.dim,
            });
        }
        let inner = self.inner.read().unwrap();
        let mut scored: Vec<(usize, f64)> = inner
            .exchanges
            .iter()
            .enumerate()
            .map(|(i, e)| (i, query.cosine_distance(&e.embedding)))
            .collect();
        scored.sort_by(|a, b| {
            a.1.partial_cmp(&b.1)
                .unwrap()
                .then_with(|| inner.exchanges[a.0].created_seq.cmp(&inner.exchanges[b.0].created_seq))
        });
        Ok(scored
            .into_iter()
            .take(k)
            .map(|(i, d)| (inner.exchanges[i].clone(), d))
            .collect())
    }

    pub fn exchange_count(&self) -> usize {
        self.inner.read().unwrap().exchanges.len()
    }

    /// All exchanges in insertion order, e.g. as model training data.
    pub fn all_exchanges(&self) -> Vec<CachedExchange> {
        self.inner.read().unwrap().exchanges.clone()
    }

    /// Record a module execution for later replay.
    pub fn record_module_io(&self, key: ModuleIOKey, verdict: ModuleVerdict) -> Result<()> {
        self.inner
            .write()
            .unwrap()
            .module_io
            .insert(key.clone(), verdict.clone());
        self.append(&PersistedRecord::ModuleIo(ModuleIORecord { key, verdict }))
    }

    /// Replay a previously recorded module execution, if any.
    pub fn replay_module_io(&self, key: &ModuleIOKey) -> Option<ModuleVerdict> {
        let mut inner = self.inner.write().unwrap();
        let hit = inner.module_io.get(key).cloned();
        if hit.is_some() {
            inner.replay_hits += 1;
        }
        hit
    }

    pub fn module_io_count(&self) -> usize {
        self.inner.read().unwrap().module_io.len()
    }

    pub fn replay_hits(&self) -> u64 {
        self.inner.read().unwrap().replay_hits
    }
}
