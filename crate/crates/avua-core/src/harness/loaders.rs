//! Loaders for public dataset annotation formats, exercised in CI on
//! bundled miniature fixtures.

use std::path::Path;

use serde_json::Value;

use super::items::{BenchmarkItem, GoldAnswer, ItemError};
use crate::policy::{Question, VideoMeta};

fn read_json(path: &Path) -> Result<Value, ItemError> {
    let text = std::fs::read_to_string(path).map_err(|e| ItemError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| ItemError::Malformed {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

fn malformed(path: &Path, detail: impl Into<String>) -> ItemError {
    ItemError::Malformed {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

/// Substitute `{id}` in a video-ref template.
fn video_ref_for(template: &str, id: &str) -> String {
    template.replace("{id}", id)
}

/// Load an MCQ annotation file (EgoSchema/NextQA style): a JSON array
/// of objects with a question, five (or fewer) options as either
/// `"option 0"`..`"option 4"` keys or an `options` array, an optional
/// integer `answer`, and an id under `q_uid` or `id`.
///
/// These files carry no video metadata, so the caller supplies the
/// metadata and a `{id}`-templated video reference shared by the set.
pub fn load_mcq_annotations(
    path: &Path,
    meta: &VideoMeta,
    video_ref_template: &str,
) -> Result<Vec<BenchmarkItem>, ItemError> {
    let root = read_json(path)?;
    let entries = root
        .as_array()
        .ok_or_else(|| malformed(path, "expected a JSON array"))?;
    let mut items = Vec::with_capacity(entries.len());
    for (i, entry) in entries.iter().enumerate() {
        let id = entry
            .get("q_uid")
            .or_else(|| entry.get("id"))
            .and_then(Value::as_str)
            .map(String::from)
            .unwrap_or_else(|| format!("item-{i:04}"));
        let text = entry
            .get("question")
            .and_then(Value::as_str)
            .ok_or_else(|| malformed(path, format!("entry {i}: missing question")))?;
        let options: Vec<String> =
            if let Some(list) = entry.get("options").and_then(Value::as_array) {
                list.iter()
                    .filter_map(Value::as_str)
                    .map(String::from)
                    .collect()
            } else {
                (0..5)
                    .filter_map(|k| entry.get(format!("option {k}")))
                    .filter_map(Value::as_str)
                    .map(String::from)
                    .collect()
            };
        let question =
            Question::mcq(text, options).map_err(|e| malformed(path, format!("entry {i}: {e}")))?;
        let gold = entry
            .get("answer")
            .or_else(|| entry.get("truth"))
            .and_then(Value::as_u64)
            .map(|v| GoldAnswer::OptionIndex(v as usize));
        let item = BenchmarkItem {
            video_ref: video_ref_for(video_ref_template, &id),
            id,
            question,
            meta: meta.clone(),
            gold,
            cue_tag: None,
        };
        item.validate(false)?;
        items.push(item);
    }
    items.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(items)
}

/// Load a temporal-localization annotation file (natural-language-query
/// style): a JSON array of objects with a `query`, a gold window as
/// either `window: [start, end]` (frames) or `video_start_frame` /
/// `video_end_frame`, plus `duration_sec` and `frame_rate`.
pub fn load_nlq_annotations(
    path: &Path,
    video_ref_template: &str,
) -> Result<Vec<BenchmarkItem>, ItemError> {
    let root = read_json(path)?;
    let entries = root
        .as_array()
        .ok_or_else(|| malformed(path, "expected a JSON array"))?;
    let mut items = Vec::with_capacity(entries.len());
    for (i, entry) in entries.iter().enumerate() {
        let id = entry
            .get("sample_id")
            .or_else(|| entry.get("id"))
            .and_then(Value::as_str)
            .map(String::from)
            .unwrap_or_else(|| format!("nlq-{i:04}"));
        let text = entry
            .get("query")
            .or_else(|| entry.get("question"))
            .and_then(Value::as_str)
            .ok_or_else(|| malformed(path, format!("entry {i}: missing query")))?;
        let window: Option<[u32; 2]> =
            if let Some(pair) = entry.get("window").and_then(Value::as_array) {
                match (
                    pair.first().and_then(Value::as_u64),
                    pair.get(1).and_then(Value::as_u64),
                ) {
                    (Some(s), Some(e)) => Some([s as u32, e as u32]),
                    _ => None,
                }
            } else {
                match (
                    entry.get("video_start_frame").and_then(Value::as_u64),
                    entry.get("video_end_frame").and_then(Value::as_u64),
                ) {
                    (Some(s), Some(e)) => Some([s as u32, e as u32]),
                    _ => None,
                }
            };
        let duration = entry
            .get("duration_sec")
            .and_then(Value::as_f64)
            .ok_or_else(|| malformed(path, format!("entry {i}: missing duration_sec")))?;
        let frame_rate = entry
            .get("frame_rate")
            .and_then(Value::as_f64)
            .unwrap_or(30.0);
        let item = BenchmarkItem {
            video_ref: video_ref_for(video_ref_template, &id),
            id,
            question: Question::localization(text),
            meta: VideoMeta::new(duration, frame_rate),
            gold: window.map(GoldAnswer::FrameWindow),
            cue_tag: None,
        };
        item.validate(false)?;
        items.push(item);
    }
    items.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(items)
}
