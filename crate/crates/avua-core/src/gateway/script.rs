//! Scripted deterministic completion backend for tests and fixtures.

use std::path::Path;
use std::sync::Mutex;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{CompletionBackend, GatewayError, PromptBundle};

/// How a script entry's `matcher` is interpreted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatcherKind {
    #[default]
    Substring,
    Regex,
}

/// One scripted response. Entries are tested in file order; the first
/// matching entry with remaining uses wins.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub matcher: String,
    #[serde(default)]
    pub matcher_kind: MatcherKind,
    pub response: String,
    #[serde(default)]
    pub max_uses: Option<u32>,
}

impl ScriptEntry {
    pub fn substring(matcher: impl Into<String>, response: impl Into<String>) -> Self {
        ScriptEntry {
            matcher: matcher.into(),
            matcher_kind: MatcherKind::Substring,
            response: response.into(),
            max_uses: None,
        }
    }

    pub fn regex(matcher: impl Into<String>, response: impl Into<String>) -> Self {
        ScriptEntry {
            matcher: matcher.into(),
            matcher_kind: MatcherKind::Regex,
            response: response.into(),
            max_uses: None,
        }
    }

    pub fn once(mut self) -> Self {
        self.max_uses = Some(1);
        self
    }
}

/// Strict mode surfaces a missing fixture as an error; lenient mode
/// substitutes a fixed fallback response for exploratory runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptMode {
    Strict,
    Lenient { fallback: String },
}

struct CompiledEntry {
    entry: ScriptEntry,
    regex: Option<Regex>,
}

impl CompiledEntry {
    fn matches(&self, rendered: &str) -> bool {
        match self.entry.matcher_kind {
            MatcherKind::Substring => rendered.contains(&self.entry.matcher),
            MatcherKind::Regex => self
                .regex
                .as_ref()
                .map(|r| r.is_match(rendered))
                .unwrap_or(false),
        }
    }
}

/// Deterministic mock backend driven by a script file.
pub struct ScriptedBackend {
    entries: Vec<CompiledEntry>,
    uses: Mutex<Vec<u32>>,
    mode: ScriptMode,
}

impl ScriptedBackend {
    pub fn from_entries(entries: Vec<ScriptEntry>, mode: ScriptMode) -> Result<Self, GatewayError> {
        let mut compiled = Vec::with_capacity(entries.len());
        for entry in entries {
            let regex = match entry.matcher_kind {
                MatcherKind::Regex => {
                    Some(
                        Regex::new(&entry.matcher).map_err(|e| GatewayError::Malformed {
                            path: "<entries>".into(),
                            detail: format!("bad regex {:?}: {e}", entry.matcher),
                        })?,
                    )
                }
                MatcherKind::Substring => None,
            };
            compiled.push(CompiledEntry { entry, regex });
        }
        let uses = Mutex::new(vec![0; compiled.len()]);
        Ok(ScriptedBackend {
            entries: compiled,
            uses,
            mode,
        })
    }

    /// Load a script file: a JSON array of entries.
    pub fn from_path(path: &Path, mode: ScriptMode) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path).map_err(|e| GatewayError::io(path, e))?;
        let entries: Vec<ScriptEntry> =
            serde_json::from_str(&text).map_err(|e| GatewayError::Malformed {
                path: path.to_path_buf(),
                detail: e.to_string(),
            })?;
        Self::from_entries(entries, mode)
    }

    pub fn entry_count(&self) -> usize {
        self.entries.len()
    }

    /// Uses consumed so far, per entry (in file order).
    pub fn use_counts(&self) -> Vec<u32> {
        self.uses.lock().expect("script uses lock").clone()
    }
}

impl CompletionBackend for ScriptedBackend {
    fn complete(&self, bundle: &PromptBundle) -> Result<String, GatewayError> {
        let rendered = bundle.rendered();
        let mut uses = self.uses.lock().expect("script uses lock");
        for (i, compiled) in self.entries.iter().enumerate() {
            if let Some(limit) = compiled.entry.max_uses {
                if uses[i] >= limit {
                    continue;
                }
            }
            if compiled.matches(&rendered) {
                uses[i] += 1;
                return Ok(compiled.entry.response.clone());
            }
        }
        match &self.mode {
            ScriptMode::Strict => {
                let head: String = rendered.chars().take(160).collect();
                Err(GatewayError::NoScriptMatch {
                    digest: bundle.digest(),
                    head,
                })
            }
            ScriptMode::Lenient { fallback } => Ok(fallback.clone()),
        }
    }
}
