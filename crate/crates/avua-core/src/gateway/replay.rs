//! Record/replay sessions: capture live responses once, replay them
//! deterministically with zero network use.
//!
//! Sessions are JSON-lines of `{digest, response}` pairs keyed by the
//! prompt digest, not call order, so replays tolerate reordered calls.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{CompletionBackend, GatewayError, PromptBundle};

#[derive(Debug, Serialize, Deserialize)]
struct SessionLine {
    digest: String,
    response: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionMode {
    Record,
    Replay,
}

/// Wraps a live backend and appends every (digest, response) pair to a
/// session file.
pub struct RecordingBackend {
    inner: Arc<dyn CompletionBackend>,
    path: PathBuf,
    file: Mutex<File>,
}

impl RecordingBackend {
    pub fn create(inner: Arc<dyn CompletionBackend>, path: &Path) -> Result<Self, GatewayError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| GatewayError::io(path, e))?;
        Ok(RecordingBackend {
            inner,
            path: path.to_path_buf(),
            file: Mutex::new(file),
        })
    }
}

impl CompletionBackend for RecordingBackend {
    fn complete(&self, bundle: &PromptBundle) -> Result<String, GatewayError> {
        let response = self.inner.complete(bundle)?;
        let line = SessionLine {
            digest: bundle.digest(),
            response: response.clone(),
        };
        let mut file = self.file.lock().expect("session file lock");
        let encoded = serde_json::to_string(&line).expect("session line serializes");
        writeln!(file, "{encoded}").map_err(|e| GatewayError::io(&self.path, e))?;
        file.flush().map_err(|e| GatewayError::io(&self.path, e))?;
        Ok(response)
    }
}

/// Serves recorded responses by prompt digest; unseen digests fail.
pub struct ReplayBackend {
    // Responses per digest in recorded order; the cursor advances FIFO
    // and sticks at the last response once exhausted.
    sessions: Mutex<HashMap<String, (Vec<String>, usize)>>,
}

impl ReplayBackend {
    pub fn open(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path).map_err(|e| GatewayError::io(path, e))?;
        let mut sessions: HashMap<String, (Vec<String>, usize)> = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: SessionLine =
                serde_json::from_str(line).map_err(|e| GatewayError::Malformed {
                    path: path.to_path_buf(),
                    detail: format!("line {}: {e}", lineno + 1),
                })?;
            sessions
                .entry(parsed.digest)
                .or_default()
                .0
                .push(parsed.response);
        }
        Ok(ReplayBackend {
            sessions: Mutex::new(sessions),
        })
    }

    pub fn recorded_digests(&self) -> usize {
        self.sessions.lock().expect("session lock").len()
    }
}

impl CompletionBackend for ReplayBackend {
    fn complete(&self, bundle: &PromptBundle) -> Result<String, GatewayError> {
        let digest = bundle.digest();
        let mut sessions = self.sessions.lock().expect("session lock");
        match sessions.get_mut(&digest) {
            Some((responses, cursor)) => {
                let response = responses[(*cursor).min(responses.len() - 1)].clone();
                *cursor += 1;
                Ok(response)
            }
            None => Err(GatewayError::DigestMiss(digest)),
        }
    }
}

/// Open a record-or-replay backend on a session file.
///
/// Record mode wraps the given live backend; replay mode requires the
/// session file to exist and needs no inner backend.
pub fn record_and_replay(
    path: &Path,
    mode: SessionMode,
    inner: Option<Arc<dyn CompletionBackend>>,
) -> Result<Arc<dyn CompletionBackend>, GatewayError> {
    match mode {
        SessionMode::Record => {
            let inner = inner.ok_or_else(|| GatewayError::Malformed {
                path: path.to_path_buf(),
                detail: "record mode requires a live backend to wrap".into(),
            })?;
            Ok(Arc::new(RecordingBackend::create(inner, path)?))
        }
        SessionMode::Replay => Ok(Arc::new(ReplayBackend::open(path)?)),
    }
}
