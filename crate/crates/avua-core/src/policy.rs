//! Policy generation and parsing.
//!
//! A policy is the pre-trial plan for a question: a short question-type
//! label, a free-text analysis, and a frame-sampling strategy. It is
//! produced by a model call over the policy prompt, optionally
//! conditioned on retrieved past experiences and, on retrials, on the
//! previous trial's refinement.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{GatewayError, LlmSession, PromptBundle};
use crate::memory::MemoryRecord;
use crate::prompts::{CatalogError, PromptCatalog};
use crate::reflection::Refinement;

/// Which benchmark family a question belongs to; decides answer format
/// and scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Mcq,
    TemporalLocalization,
    OpenEnded,
}

/// A question posed over one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub text: String,
    #[serde(default)]
    pub options: Option<Vec<String>>,
    pub dataset_kind: DatasetKind,
}

#[derive(Debug, Error)]
pub enum QuestionError {
    #[error("multiple-choice questions need 2-5 options, got {0}")]
    BadOptionCount(usize),
    #[error("options are only valid for multiple-choice questions")]
    UnexpectedOptions,
    #[error("multiple-choice questions require options")]
    MissingOptions,
}

impl Question {
    pub fn mcq(text: impl Into<String>, options: Vec<String>) -> Result<Self, QuestionError> {
        let q = Question {
            text: text.into(),
            options: Some(options),
            dataset_kind: DatasetKind::Mcq,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn open_ended(text: impl Into<String>) -> Self {
        Question {
            text: text.into(),
            options: None,
            dataset_kind: DatasetKind::OpenEnded,
        }
    }

    pub fn localization(text: impl Into<String>) -> Self {
        Question {
            text: text.into(),
            options: None,
            dataset_kind: DatasetKind::TemporalLocalization,
        }
    }

    pub fn validate(&self) -> Result<(), QuestionError> {
        match (&self.options, self.dataset_kind) {
            (Some(opts), DatasetKind::Mcq) => {
                if opts.len() < 2 || opts.len() > 5 {
                    Err(QuestionError::BadOptionCount(opts.len()))
                } else {
                    Ok(())
                }
            }
            (None, DatasetKind::Mcq) => Err(QuestionError::MissingOptions),
            (Some(_), _) => Err(QuestionError::UnexpectedOptions),
            (None, _) => Ok(()),
        }
    }

    /// Question text plus numbered options, as shown to the model.
    pub fn rendered(&self) -> String {
        let mut out = format!("Question: {}", self.text);
        if let Some(options) = &self.options {
            for (i, option) in options.iter().enumerate() {
                out.push_str(&format!("\nOption {i}: {option}"));
            }
        }
        out
    }
}

/// Metadata-only view of a video: the agent never sees pixels, only
/// this summary plus tool observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub duration_sec: f64,
    pub frame_rate: f64,
    pub total_frames: u32,
    #[serde(default)]
    pub scene_change_frames: Option<Vec<u32>>,
}

#[derive(Debug, Error)]
pub enum VideoMetaError {
    #[error("total_frames {total} inconsistent with duration {duration}s at {fps} fps")]
    FrameCountMismatch { total: u32, duration: f64, fps: f64 },
    #[error("scene change frame {0} out of range (total {1})")]
    SceneOutOfRange(u32, u32),
    #[error("scene change list must be sorted")]
    SceneUnsorted,
    #[error("frame rate must be positive")]
    BadFrameRate,
}

impl VideoMeta {
    /// Build metadata from duration and frame rate; the frame count is
    /// derived (always at least one frame).
    pub fn new(duration_sec: f64, frame_rate: f64) -> Self {
        let total = (duration_sec * frame_rate).round().max(1.0) as u32;
        VideoMeta {
            duration_sec,
            frame_rate,
            total_frames: total,
            scene_change_frames: None,
        }
    }

    pub fn with_scene_changes(mut self, frames: Vec<u32>) -> Self {
        self.scene_change_frames = Some(frames);
        self
    }

    pub fn validate(&self) -> Result<(), VideoMetaError> {
        if self.frame_rate <= 0.0 {
            return Err(VideoMetaError::BadFrameRate);
        }
        let expected = self.duration_sec * self.frame_rate;
        if (self.total_frames as f64 - expected).abs() > 1.0 + 1e-9 {
            return Err(VideoMetaError::FrameCountMismatch {
                total: self.total_frames,
                duration: self.duration_sec,
                fps: self.frame_rate,
            });
        }
        if let Some(scenes) = &self.scene_change_frames {
            if scenes.windows(2).any(|w| w[0] > w[1]) {
                return Err(VideoMetaError::SceneUnsorted);
            }
            for &frame in scenes {
                if frame >= self.total_frames {
                    return Err(VideoMetaError::SceneOutOfRange(frame, self.total_frames));
                }
            }
        }
        Ok(())
    }

    /// Highest valid frame index.
    pub fn last_frame(&self) -> u32 {
        self.total_frames.saturating_sub(1)
    }

    pub fn clamp_index(&self, index: u32) -> u32 {
        index.min(self.last_frame())
    }

    pub fn duration_minutes(&self) -> f64 {
        self.duration_sec / 60.0
    }

    pub fn scene_list_text(&self) -> String {
        match &self.scene_change_frames {
            Some(frames) if !frames.is_empty() => frames
                .iter()
                .map(|f| f.to_string())
                .collect::<Vec<_>>()
                .join(", "),
            _ => "(none provided)".to_string(),
        }
    }

    /// Summary block used by the policy prompt's video-details slot.
    pub fn details_text(&self) -> String {
        format!(
            "Video details:\n- Duration: {:.2} minutes ({} seconds)\n- Frame Rate: {} frame per second\n- Total Frames: {} frames\n- Frames with scene change: {}",
            self.duration_minutes(),
            trim_float(self.duration_sec),
            trim_float(self.frame_rate),
            self.total_frames,
            self.scene_list_text(),
        )
    }
}

/// Format a float without a trailing `.0` when it is integral.
pub(crate) fn trim_float(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Where a policy came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Generated,
    Refined,
    Retrieved,
}

/// The pre-trial plan: question type, analysis, sampling strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub question_type: String,
    pub analysis: String,
    pub sampling_strategy: String,
    pub raw_text: String,
    pub provenance: Provenance,
}

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("policy text has no question-type heading")]
    ParseFailure,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
}

/// True when a heading (text before the first colon) names the given
/// marker, e.g. "Question Type" for "type".
fn heading_of(line: &str) -> Option<(&str, &str)> {
    let (head, rest) = line.split_once(':')?;
    let trimmed = head.trim();
    if trimmed.is_empty() || trimmed.len() > 48 {
        return None;
    }
    // A heading is a short label, not prose: letters/spaces only.
    if !trimmed
        .chars()
        .all(|c| c.is_alphabetic() || c.is_whitespace() || c == '-' || c == '/')
    {
        return None;
    }
    Some((trimmed, rest))
}

enum Bucket {
    Analysis,
    Sampling,
}

/// Extract policy fields from model output by heading keywords.
///
/// The question type comes from the first line whose heading mentions
/// "type"; the sampling strategy from lines under a heading mentioning
/// "sampl" (plus continuation lines); everything else is analysis.
/// Headings are matched case-insensitively wherever they appear, so
/// reordered output parses the same.
pub fn parse_policy(text: &str) -> Result<Policy, PolicyError> {
    let mut question_type: Option<String> = None;
    let mut sampling_lines: Vec<String> = Vec::new();
    let mut analysis_lines: Vec<String> = Vec::new();
    let mut current = Bucket::Analysis;

    for line in text.lines() {
        if let Some((head, rest)) = heading_of(line) {
            let head_lower = head.to_lowercase();
            if head_lower.contains("type") && question_type.is_none() {
                question_type = Some(rest.trim().to_string());
                current = Bucket::Analysis;
                continue;
            }
            if head_lower.contains("sampl") {
                sampling_lines.push(rest.trim().to_string());
                current = Bucket::Sampling;
                continue;
            }
            if head_lower.contains("analy") {
                analysis_lines.push(rest.trim().to_string());
                current = Bucket::Analysis;
                continue;
            }
            // Unrecognized heading: the whole line is analysis.
            analysis_lines.push(line.to_string());
            current = Bucket::Analysis;
            continue;
        }
        match current {
            Bucket::Sampling => sampling_lines.push(line.to_string()),
            Bucket::Analysis => analysis_lines.push(line.to_string()),
        }
    }

    let question_type = question_type
        .filter(|t| !t.is_empty())
        .ok_or(PolicyError::ParseFailure)?;
    Ok(Policy {
        question_type,
        analysis: analysis_lines.join("\n").trim().to_string(),
        sampling_strategy: sampling_lines.join("\n").trim().to_string(),
        raw_text: text.to_string(),
        provenance: Provenance::Generated,
    })
}

/// Serialize retrieved experiences for the policy prompt, most similar
/// first, capped at three.
fn experiences_section(experiences: &[MemoryRecord]) -> String {
    let mut out = String::from("Past experiences with similar questions:");
    for (i, record) in experiences.iter().take(3).enumerate() {
        out.push_str(&format!(
            "\nExperience {} (question type: {}):",
            i + 1,
            record.question_type
        ));
        if record.trajectory_digest.is_empty() {
            out.push_str("\n  Trajectory: (empty)");
        } else {
            out.push_str("\n  Trajectory:");
            for step in &record.trajectory_digest {
                out.push_str(&format!(
                    "\n    - {} [{}] -> {}",
                    step.action, step.input, step.observation_head
                ));
            }
        }
        match &record.refinement {
            Some(refinement) => {
                out.push_str(&format!("\n  Refinement: {}", refinement.refined_plan))
            }
            None => out.push_str("\n  Refinement: (none)"),
        }
    }
    out
}

const POLICY_FORMAT_REMINDER: &str = "Format reminder: reply with a 'Question type:' line, an 'Analysis:' line, and a 'Sampling strategy:' line.";

/// Generate a policy for a question, optionally conditioned on past
/// experiences and a refinement carried over from the previous trial.
///
/// Reprompts once with a format reminder when the completion does not
/// parse; a second malformed completion is an error.
pub fn generate_policy(
    session: &mut LlmSession,
    catalog: &PromptCatalog,
    question: &Question,
    meta: &VideoMeta,
    experiences: &[MemoryRecord],
    prior_refinement: Option<&Refinement>,
) -> Result<Policy, PolicyError> {
    let mut user = catalog.render(
        "policy",
        &[
            ("Question", question.rendered()),
            ("Video details", meta.details_text()),
        ],
    )?;
    if !experiences.is_empty() {
        user.push_str("\n\n");
        user.push_str(&experiences_section(experiences));
    }
    if let Some(refinement) = prior_refinement {
        user.push_str("\n\nRefinement from the previous trial:\n");
        user.push_str(&refinement.refined_plan);
    }

    let bundle = PromptBundle::new("", user.clone());
    let first = session.complete("policy", &bundle)?;
    let parsed = match parse_policy(&first) {
        Ok(policy) => policy,
        Err(_) => {
            let retry_bundle = PromptBundle::new("", format!("{user}\n\n{POLICY_FORMAT_REMINDER}"));
            let second = session.complete("policy", &retry_bundle)?;
            parse_policy(&second)?
        }
    };
    let provenance = if prior_refinement.is_some() {
        Provenance::Refined
    } else {
        Provenance::Generated
    };
    Ok(Policy {
        provenance,
        ..parsed
    })
}
