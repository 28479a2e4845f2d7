//! Benchmark items and manifests.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::{DatasetKind, Question, VideoMeta};

/// Positional wording in the question, when present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CuePosition {
    Start,
    Middle,
    End,
    None,
}

impl CuePosition {
    pub fn label(&self) -> &'static str {
        match self {
            CuePosition::Start => "start",
            CuePosition::Middle => "middle",
            CuePosition::End => "end",
            CuePosition::None => "none",
        }
    }
}

/// Ground truth for one item; the variant must match the question's
/// dataset kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoldAnswer {
    OptionIndex(usize),
    FrameWindow([u32; 2]),
    FreeText(String),
}

/// One benchmark question bound to a video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkItem {
    pub id: String,
    pub question: Question,
    pub meta: VideoMeta,
    #[serde(default)]
    pub gold: Option<GoldAnswer>,
    pub video_ref: String,
    #[serde(default)]
    pub cue_tag: Option<CuePosition>,
}

#[derive(Debug, Error)]
pub enum ItemError {
    #[error("item {id}: gold answer kind does not match dataset kind")]
    GoldKindMismatch { id: String },
    #[error("item {id}: gold answer missing")]
    GoldMissing { id: String },
    #[error("item {id}: {detail}")]
    Invalid { id: String, detail: String },
    #[error("failed reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest {path}: {detail}")]
    Malformed { path: PathBuf, detail: String },
}

/// Default cue keywords; configurable because benchmarks carry no
/// machine-readable cue labels.
pub fn default_cue_keywords() -> Vec<(String, CuePosition)> {
    [
        ("beginning", CuePosition::Start),
        ("start", CuePosition::Start),
        ("first", CuePosition::Start),
        ("middle", CuePosition::Middle),
        ("end", CuePosition::End),
        ("last", CuePosition::End),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

/// Tag a question by scanning for positional keywords.
pub fn auto_cue_tag(question_text: &str, keywords: &[(String, CuePosition)]) -> CuePosition {
    let lower = question_text.to_lowercase();
    let words: Vec<&str> = lower
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .collect();
    for (keyword, position) in keywords {
        if words.contains(&keyword.as_str()) {
            return *position;
        }
    }
    CuePosition::None
}

impl BenchmarkItem {
    /// Check internal consistency; a benchmark run requires gold.
    pub fn validate(&self, require_gold: bool) -> Result<(), ItemError> {
        self.question.validate().map_err(|e| ItemError::Invalid {
            id: self.id.clone(),
            detail: e.to_string(),
        })?;
        self.meta.validate().map_err(|e| ItemError::Invalid {
            id: self.id.clone(),
            detail: e.to_string(),
        })?;
        match (&self.gold, self.question.dataset_kind) {
            (None, _) => {
                if require_gold {
                    return Err(ItemError::GoldMissing {
                        id: self.id.clone(),
                    });
                }
            }
            (Some(GoldAnswer::OptionIndex(index)), DatasetKind::Mcq) => {
                let count = self.question.options.as_ref().map(Vec::len).unwrap_or(0);
                if *index >= count {
                    return Err(ItemError::Invalid {
                        id: self.id.clone(),
                        detail: format!("gold option {index} out of range ({count} options)"),
                    });
                }
            }
            (Some(GoldAnswer::FrameWindow(window)), DatasetKind::TemporalLocalization) => {
                if window[0] > window[1] || window[1] >= self.meta.total_frames {
                    return Err(ItemError::Invalid {
                        id: self.id.clone(),
                        detail: format!("gold window {window:?} out of range"),
                    });
                }
            }
            (Some(GoldAnswer::FreeText(_)), DatasetKind::OpenEnded) => {}
            (Some(_), _) => {
                return Err(ItemError::GoldKindMismatch {
                    id: self.id.clone(),
                });
            }
        }
        Ok(())
    }

    /// The cue tag, auto-derived from keywords when the manifest did
    /// not set one.
    pub fn effective_cue(&self, keywords: &[(String, CuePosition)]) -> CuePosition {
        self.cue_tag
            .unwrap_or_else(|| auto_cue_tag(&self.question.text, keywords))
    }
}

/// Load a manifest: a JSON list of items, sorted by id for stable
/// aggregation.
pub fn load_manifest(path: &Path) -> Result<Vec<BenchmarkItem>, ItemError> {
    let text = std::fs::read_to_string(path).map_err(|e| ItemError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut items: Vec<BenchmarkItem> =
        serde_json::from_str(&text).map_err(|e| ItemError::Malformed {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
    items.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(items)
}
