//! The frame sampler: a separately prompted model instance that
//! proposes which frame indices to access next.
//!
//! The sampler is advisory. Whatever goes wrong — unparseable output,
//! a missing script entry, an unreachable backend — the planner's own
//! proposal passes through unchanged, so a trial is never blocked on
//! sampling.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{LlmSession, PromptBundle};
use crate::planner::{ActionInput, Trajectory};
use crate::policy::{Policy, Question, VideoMeta};
use crate::prompts::PromptCatalog;

/// Hard cap on indices returned per suggestion, bounding frame charges.
pub const DEFAULT_SUGGESTION_CAP: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMode {
    Sparse,
    Dense,
    Switch,
}

/// A validated set of frame indices to access next.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSuggestion {
    pub indices: Vec<u32>,
    pub rationale: String,
    pub mode: SampleMode,
}

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("invalid range: start {start} > end {end} or step {step} == 0")]
    InvalidRange { start: u32, end: u32, step: u32 },
}

/// Arithmetic progression start, start+step, ... bounded by both `end`
/// and the last valid frame index.
pub fn expand_range(start: u32, end: u32, step: u32, total: u32) -> Result<Vec<u32>, SamplerError> {
    if start > end || step == 0 {
        return Err(SamplerError::InvalidRange { start, end, step });
    }
    let limit = end.min(total.saturating_sub(1));
    let mut frames = Vec::new();
    let mut current = start as u64;
    while current <= limit as u64 {
        frames.push(current as u32);
        current += step as u64;
    }
    if frames.is_empty() && start < total {
        frames.push(start);
    }
    Ok(frames)
}

fn detect_mode(text: &str) -> SampleMode {
    let lower = text.to_lowercase();
    if lower.contains("switch") {
        SampleMode::Switch
    } else if lower.contains("dense") {
        SampleMode::Dense
    } else {
        SampleMode::Sparse
    }
}

/// Pull frame indices out of sampler output. Lines mentioning "frame"
/// are preferred; failing that, any integers in the text are taken.
fn extract_indices(text: &str) -> Vec<u64> {
    let number = regex::Regex::new(r"\d+").expect("static regex");
    let frame_lines: Vec<&str> = text
        .lines()
        .filter(|line| line.to_lowercase().contains("frame") && number.is_match(line))
        .collect();
    let haystacks: Vec<&str> = if frame_lines.is_empty() {
        text.lines().collect()
    } else {
        frame_lines
    };
    let mut indices = Vec::new();
    for line in haystacks {
        for m in number.find_iter(line) {
            if let Ok(v) = m.as_str().parse::<u64>() {
                indices.push(v);
            }
        }
    }
    indices
}

fn sanitize(raw: Vec<u64>, meta: &VideoMeta, cap: usize) -> (Vec<u32>, bool) {
    let last = meta.last_frame() as u64;
    let mut clamped = false;
    let mut indices: Vec<u32> = raw
        .into_iter()
        .map(|v| {
            if v > last {
                clamped = true;
                last as u32
            } else {
                v as u32
            }
        })
        .collect();
    indices.sort_unstable();
    indices.dedup();
    if indices.len() > cap {
        indices.truncate(cap);
        clamped = true;
    }
    (indices, clamped)
}

fn fallback(proposed: &ActionInput, meta: &VideoMeta, cap: usize, why: &str) -> FrameSuggestion {
    let (indices, _) = sanitize(
        proposed.frame_indices.iter().map(|&f| f as u64).collect(),
        meta,
        cap,
    );
    FrameSuggestion {
        indices,
        rationale: format!("sampler unavailable ({why}); using the planner's proposal"),
        mode: SampleMode::Sparse,
    }
}

/// Ask the sampler to revise the planner's proposed frames.
///
/// The prompt carries the policy's sampling strategy, the most recent
/// observations, and the proposal; the reply's indices are clamped to
/// the video, deduplicated, and capped.
#[allow(clippy::too_many_arguments)]
pub fn suggest(
    session: &mut LlmSession,
    catalog: &PromptCatalog,
    question: &Question,
    policy: Option<&Policy>,
    trajectory: &Trajectory,
    meta: &VideoMeta,
    proposed: &ActionInput,
    cap: usize,
) -> FrameSuggestion {
    let strategy = policy
        .map(|p| p.sampling_strategy.clone())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "(no explicit strategy)".to_string());
    let recent = trajectory.recent_observations_text(2);
    let proposed_text = if proposed.frame_indices.is_empty() {
        "(none)".to_string()
    } else {
        proposed
            .frame_indices
            .iter()
            .map(|f| f.to_string())
            .collect::<Vec<_>>()
            .join(", ")
    };
    let user = match catalog.render(
        "sampler",
        &[
            ("question", question.text.clone()),
            ("sampling_strategy", strategy),
            ("total_frames", meta.total_frames.to_string()),
            ("proposed_frames", proposed_text),
            (
                "recent_observations",
                if recent.is_empty() {
                    "(none yet)".to_string()
                } else {
                    recent
                },
            ),
            ("cap", cap.to_string()),
        ],
    ) {
        Ok(user) => user,
        Err(e) => return fallback(proposed, meta, cap, &e.to_string()),
    };

    let text = match session.complete("sampler", &PromptBundle::new("", user)) {
        Ok(text) => text,
        Err(e) => return fallback(proposed, meta, cap, &e.to_string()),
    };

    let raw = extract_indices(&text);
    if raw.is_empty() {
        return fallback(proposed, meta, cap, "no indices in reply");
    }
    let (indices, clamped) = sanitize(raw, meta, cap);
    if indices.is_empty() {
        return fallback(proposed, meta, cap, "no valid indices in reply");
    }
    let mut rationale = text.trim().to_string();
    if clamped {
        rationale.push_str("\n[warning: out-of-range or excess indices were clamped]");
    }
    FrameSuggestion {
        indices,
        rationale,
        mode: detect_mode(&text),
    }
}
