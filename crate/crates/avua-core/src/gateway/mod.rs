//! Uniform access to text completion and text embedding.
//!
//! Three interchangeable completion backends share one trait: a remote
//! HTTP endpoint, a recorded-session replayer, and a scripted
//! deterministic mock for tests. Every completion made during an episode
//! is appended to that episode's transcript, tagged with the prompt
//! template it was rendered from, so ablation wiring can be checked
//! mechanically after the fact.

mod embed;
mod remote;
mod replay;
mod script;

pub use embed::{Embedder, EmbeddingVector, HashingEmbedder, DEFAULT_EMBED_DIM};
pub use remote::RemoteBackend;
pub use replay::{record_and_replay, RecordingBackend, ReplayBackend, SessionMode};
pub use script::{MatcherKind, ScriptEntry, ScriptMode, ScriptedBackend};

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Errors raised by completion and embedding backends.
#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("prompt user text must be non-empty")]
    EmptyText,
    #[error("no script entry matches prompt (digest {digest}): {head:?}")]
    NoScriptMatch { digest: String, head: String },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("replay session has no response for digest {0}")]
    DigestMiss(String),
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed script or session file {path}: {detail}")]
    Malformed { path: PathBuf, detail: String },
}

impl GatewayError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        GatewayError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Decoding controls sent with every completion request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodingParams {
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default)]
    pub stop_sequences: Vec<String>,
}

impl Default for DecodingParams {
    fn default() -> Self {
        // Deterministic runs: temperature 0.
        DecodingParams {
            temperature: 0.0,
            max_tokens: 1024,
            stop_sequences: Vec::new(),
        }
    }
}

/// A fully rendered prompt ready for a completion backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
    pub decoding: DecodingParams,
}

impl PromptBundle {
    pub fn new(system_text: impl Into<String>, user_text: impl Into<String>) -> Self {
        PromptBundle {
            system_text: system_text.into(),
            user_text: user_text.into(),
            decoding: DecodingParams::default(),
        }
    }

    /// System and user text joined the way matchers and digests see it.
    pub fn rendered(&self) -> String {
        if self.system_text.is_empty() {
            self.user_text.clone()
        } else {
            format!("{}\n\n{}", self.system_text, self.user_text)
        }
    }

    /// Content digest keying record/replay sessions.
    ///
    /// Decoding parameters are part of the digest so that (say) a
    /// temperature change invalidates previously recorded responses.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("prompt bundle serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        let out = hasher.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn check(&self) -> Result<(), GatewayError> {
        if self.user_text.trim().is_empty() {
            return Err(GatewayError::EmptyText);
        }
        Ok(())
    }
}

/// A text-completion backend. Handles are shareable across concurrent
/// episodes; per-episode state (transcripts) lives in [`LlmSession`].
pub trait CompletionBackend: Send + Sync {
    fn complete(&self, bundle: &PromptBundle) -> Result<String, GatewayError>;
}

impl CompletionBackend for Arc<dyn CompletionBackend> {
    fn complete(&self, bundle: &PromptBundle) -> Result<String, GatewayError> {
        (**self).complete(bundle)
    }
}

/// One logged completion: which template produced it, what was sent,
/// what came back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub tag: String,
    pub digest: String,
    pub prompt: String,
    pub response: String,
}

/// Per-episode, single-writer log of every completion call.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of entries produced from the named prompt template.
    pub fn count_tag(&self, tag: &str) -> usize {
        self.entries.iter().filter(|e| e.tag == tag).count()
    }

    /// True if any logged prompt contains the given marker text.
    pub fn any_prompt_contains(&self, marker: &str) -> bool {
        self.entries.iter().any(|e| e.prompt.contains(marker))
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<(), GatewayError> {
        let mut out = String::new();
        for entry in &self.entries {
            out.push_str(&serde_json::to_string(entry).expect("transcript entry serializes"));
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| GatewayError::io(path, e))
    }

    pub fn read_jsonl(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path).map_err(|e| GatewayError::io(path, e))?;
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: TranscriptEntry =
                serde_json::from_str(line).map_err(|e| GatewayError::Malformed {
                    path: path.to_path_buf(),
                    detail: format!("line {}: {e}", lineno + 1),
                })?;
            entries.push(entry);
        }
        Ok(Transcript { entries })
    }
}

/// A backend handle plus the transcript for one episode.
pub struct LlmSession<'a> {
    backend: &'a dyn CompletionBackend,
    pub transcript: Transcript,
}

impl<'a> LlmSession<'a> {
    pub fn new(backend: &'a dyn CompletionBackend) -> Self {
        LlmSession {
            backend,
            transcript: Transcript::default(),
        }
    }

    /// Complete a prompt and log it under the given template tag.
    pub fn complete(&mut self, tag: &str, bundle: &PromptBundle) -> Result<String, GatewayError> {
        bundle.check()?;
        let response = self.backend.complete(bundle)?;
        self.transcript.entries.push(TranscriptEntry {
            tag: tag.to_string(),
            digest: bundle.digest(),
            prompt: bundle.rendered(),
            response: response.clone(),
        });
        Ok(response)
    }
}
