//! Episodic memory.
//!
//! Long-term memory persists one record per finished episode — the
//! question, its policy, a condensed trajectory, the refinement, and the
//! verdict — indexed by an embedding of "question_type: question_text"
//! and retrieved by cosine similarity. Short-term memory is the
//! per-episode cache of tool observations keyed by (frame, tool), which
//! makes re-access free.
//!
//! The store file is JSON-lines, one record per line. Ids and
//! `created_at` stamps are logical sequence numbers assigned at append
//! time, so identical runs produce identical stores.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{Embedder, EmbeddingVector, GatewayError};
use crate::reflection::Refinement;
use crate::toolbox::Observation;

/// One condensed trajectory step kept in a memory record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DigestStep {
    pub action: String,
    pub input: String,
    pub observation_head: String,
}

/// Maximum characters of an observation kept in a trajectory digest.
pub const OBSERVATION_HEAD_CHARS: usize = 200;

impl DigestStep {
    pub fn new(action: &str, input: &str, observation: &str) -> Self {
        let observation_head: String = observation.chars().take(OBSERVATION_HEAD_CHARS).collect();
        DigestStep {
            action: action.to_string(),
            input: input.to_string(),
            observation_head,
        }
    }
}

/// A persisted episode experience.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryRecord {
    #[serde(default)]
    pub id: String,
    pub question_type: String,
    pub question_text: String,
    pub policy_raw: String,
    pub trajectory_digest: Vec<DigestStep>,
    pub refinement: Option<Refinement>,
    pub verdict: bool,
    pub confidence: u8,
    pub embedding: EmbeddingVector,
    #[serde(default)]
    pub created_at: u64,
}

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("embedding dimension {got} does not match store dimension {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("question_type must be non-empty")]
    EmptyQuestionType,
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed store file {path}: {detail}")]
    Malformed { path: PathBuf, detail: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

struct StoreInner {
    records: Vec<MemoryRecord>,
    file: Option<File>,
    next_seq: u64,
}

/// Long-term memory store with linear-scan cosine retrieval.
///
/// Appends and retrievals may run concurrently; a retrieval sees a
/// consistent prefix of the appended records.
pub struct MemoryStore {
    embedder: Arc<dyn Embedder>,
    inner: Mutex<StoreInner>,
    path: Option<PathBuf>,
    min_similarity: f64,
    only_successful: bool,
}

impl MemoryStore {
    /// Open (or create) a JSONL-backed store.
    pub fn open(path: &Path, embedder: Arc<dyn Embedder>) -> Result<Self, MemoryError> {
        let mut records = Vec::new();
        if path.exists() {
            let text = std::fs::read_to_string(path).map_err(|e| MemoryError::Io {
                path: path.to_path_buf(),
                source: e,
            })?;
            for (lineno, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let record: MemoryRecord =
                    serde_json::from_str(line).map_err(|e| MemoryError::Malformed {
                        path: path.to_path_buf(),
                        detail: format!("line {}: {e}", lineno + 1),
                    })?;
                records.push(record);
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| MemoryError::Io {
                path: path.to_path_buf(),
                source: e,
            })?;
        let next_seq = records.iter().map(|r| r.created_at).max().unwrap_or(0) + 1;
        Ok(MemoryStore {
            embedder,
            inner: Mutex::new(StoreInner {
                records,
                file: Some(file),
                next_seq,
            }),
            path: Some(path.to_path_buf()),
            min_similarity: 0.5,
            only_successful: false,
        })
    }

    /// Volatile store for tests and ephemeral runs.
    pub fn in_memory(embedder: Arc<dyn Embedder>) -> Self {
        MemoryStore {
            embedder,
            inner: Mutex::new(StoreInner {
                records: Vec::new(),
                file: None,
                next_seq: 1,
            }),
            path: None,
            min_similarity: 0.5,
            only_successful: false,
        }
    }

    /// Retrieval floor: candidates below this cosine similarity are
    /// excluded (default 0.5).
    pub fn with_min_similarity(mut self, min_similarity: f64) -> Self {
        self.min_similarity = min_similarity;
        self
    }

    /// Restrict retrieval to records whose episode evaluated true.
    pub fn with_only_successful(mut self, only_successful: bool) -> Self {
        self.only_successful = only_successful;
        self
    }

    pub fn embedder(&self) -> &Arc<dyn Embedder> {
        &self.embedder
    }

    /// The embedding key for a (question type, question text) pair.
    pub fn embed_key(
        &self,
        question_type: &str,
        question_text: &str,
    ) -> Result<EmbeddingVector, MemoryError> {
        Ok(self
            .embedder
            .embed(&format!("{question_type}: {question_text}"))?)
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("store lock").records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Snapshot of all records, oldest first.
    pub fn records(&self) -> Vec<MemoryRecord> {
        self.inner.lock().expect("store lock").records.clone()
    }

    /// Append a record durably. The store assigns the id and the
    /// logical `created_at` stamp; the caller's values are overwritten.
    pub fn put(&self, mut record: MemoryRecord) -> Result<String, MemoryError> {
        if record.embedding.dimension() != self.embedder.dimension() {
            return Err(MemoryError::DimensionMismatch {
                got: record.embedding.dimension(),
                expected: self.embedder.dimension(),
            });
        }
        if record.question_type.trim().is_empty() {
            return Err(MemoryError::EmptyQuestionType);
        }
        let mut inner = self.inner.lock().expect("store lock");
        record.created_at = inner.next_seq;
        record.id = format!("mem-{:06}", inner.next_seq);
        inner.next_seq += 1;
        if inner.file.is_some() {
            let line = serde_json::to_string(&record).expect("record serializes");
            let path = self.path.clone().expect("file-backed store has a path");
            let file = inner.file.as_mut().expect("file handle");
            writeln!(file, "{line}").map_err(|e| MemoryError::Io {
                path: path.clone(),
                source: e,
            })?;
            file.flush()
                .map_err(|e| MemoryError::Io { path, source: e })?;
        }
        let id = record.id.clone();
        inner.records.push(record);
        Ok(id)
    }

    /// Top-k records by cosine similarity to the query key, most
    /// similar first, ties broken by newer `created_at`. Entries below
    /// the similarity floor are excluded; an empty store yields an
    /// empty list.
    pub fn retrieve(
        &self,
        question_type: &str,
        question_text: &str,
        k: usize,
    ) -> Result<Vec<(MemoryRecord, f64)>, MemoryError> {
        if k == 0 {
            return Ok(Vec::new());
        }
        let snapshot = self.records();
        if snapshot.is_empty() {
            return Ok(Vec::new());
        }
        let query = self.embed_key(question_type, question_text)?;
        let mut scored: Vec<(MemoryRecord, f64)> = snapshot
            .into_iter()
            .filter(|r| !self.only_successful || r.verdict)
            .map(|r| {
                let similarity = query.cosine(&r.embedding);
                (r, similarity)
            })
            .filter(|(_, similarity)| *similarity >= self.min_similarity)
            .collect();
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(b.0.created_at.cmp(&a.0.created_at))
        });
        scored.truncate(k);
        Ok(scored)
    }
}

/// Per-episode cache of tool observations keyed by (frame, tool).
#[derive(Debug, Clone, Default)]
pub struct ShortTermCache {
    map: HashMap<(u32, String), Observation>,
}

impl ShortTermCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, frame: u32, tool: &str) -> Option<&Observation> {
        self.map.get(&(frame, tool.to_string()))
    }

    /// Last write wins per (frame, tool).
    pub fn put(&mut self, frame: u32, tool: &str, observation: Observation) {
        self.map.insert((frame, tool.to_string()), observation);
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn clear(&mut self) {
        self.map.clear();
    }

    /// Distinct frames ever stored, across tools.
    pub fn distinct_frames(&self) -> std::collections::BTreeSet<u32> {
        self.map.keys().map(|(frame, _)| *frame).collect()
    }
}
