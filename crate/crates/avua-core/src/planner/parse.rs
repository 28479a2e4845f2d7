//! Parsing of agent completions: step headers, final answers, and the
//! free-text action inputs models emit.

use thiserror::Error;

use super::ActionInput;
use crate::policy::VideoMeta;
use crate::sampler::expand_range;

/// A recognized agent completion: either one more step to dispatch or
/// the final answer.
#[derive(Debug, Clone, PartialEq)]
pub enum ParsedStep {
    Header {
        thought: String,
        action: String,
        raw_input: String,
    },
    Final(String),
}

#[derive(Debug, Error)]
#[error("completion has neither a Thought/Action/Action Input block nor a Final Answer")]
pub struct StepParseError;

fn label_regex() -> &'static regex::Regex {
    use std::sync::OnceLock;
    static RE: OnceLock<regex::Regex> = OnceLock::new();
    // "action input" is listed before "action": alternation prefers
    // earlier branches, so the longer label wins at the same position.
    RE.get_or_init(|| {
        regex::Regex::new(r"(?im)^[ \t]*(action[ \t_-]*input|thought|action|observation|final[ \t]*answer)[ \t]*:").expect("static regex")
    })
}

fn canonical_label(raw: &str) -> &'static str {
    let lower = raw.to_lowercase();
    if lower.starts_with("action") && lower.contains("input") {
        "action_input"
    } else if lower.starts_with("action") {
        "action"
    } else if lower.starts_with("thought") {
        "thought"
    } else if lower.starts_with("final") {
        "final"
    } else {
        "observation"
    }
}

/// Recognize the next step or the final answer in a completion.
///
/// Label matching is case-insensitive and tolerates leading whitespace
/// and reordered labels. Anything the model "hallucinated" after an
/// Observation label is ignored. A Final Answer block wins over a step
/// header; its content runs to the end of the completion.
pub fn parse_step(text: &str) -> Result<ParsedStep, StepParseError> {
    // Gather label positions, cutting at the first Observation label.
    let mut labels: Vec<(&'static str, usize, usize)> = Vec::new(); // (label, content_start, match_start)
    let mut cut = text.len();
    for captures in label_regex().captures_iter(text) {
        let whole = captures.get(0).expect("match");
        let label = canonical_label(&captures[1]);
        if label == "observation" {
            cut = whole.start();
            break;
        }
        labels.push((label, whole.end(), whole.start()));
    }
    let text = &text[..cut];

    let mut thought = None;
    let mut action = None;
    let mut action_input = None;
    let mut final_answer = None;
    for (i, &(label, content_start, _)) in labels.iter().enumerate() {
        let content_end = if label == "final" {
            // Final answers run to the end of the completion.
            text.len()
        } else {
            labels
                .get(i + 1)
                .map(|&(_, _, next_start)| next_start)
                .unwrap_or(text.len())
        };
        let content = text[content_start..content_end.max(content_start)].trim();
        match label {
            "thought" if thought.is_none() => thought = Some(content.to_string()),
            "action" if action.is_none() => action = Some(content.to_string()),
            "action_input" if action_input.is_none() => action_input = Some(content.to_string()),
            "final" if final_answer.is_none() => final_answer = Some(content.to_string()),
            _ => {}
        }
        if label == "final" {
            break;
        }
    }

    if let Some(answer) = final_answer {
        return Ok(ParsedStep::Final(answer));
    }
    match (action, action_input) {
        (Some(action), Some(raw_input)) if !action.is_empty() => {
            // Tool names are single-line; trim trailing punctuation.
            let action = action
                .lines()
                .next()
                .unwrap_or_default()
                .trim()
                .trim_end_matches(['.', ',', ';'])
                .trim()
                .to_string();
            if action.is_empty() {
                return Err(StepParseError);
            }
            Ok(ParsedStep::Header {
                thought: thought.unwrap_or_default(),
                action,
                raw_input,
            })
        }
        _ => Err(StepParseError),
    }
}

/// Result of interpreting a raw action input.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionInputParse {
    pub input: ActionInput,
    /// True when out-of-range indices were clamped into the video.
    pub clamped: bool,
}

const FRAME_VOCAB: [&str; 13] = [
    "frame", "frames", "index", "indices", "step", "stride", "to", "every", "and", "at", "of",
    "the", "idx",
];

fn query_candidate(text: &str) -> bool {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| w.len() >= 2 && w.chars().all(|c| c.is_alphabetic()))
        .any(|w| !FRAME_VOCAB.contains(&w.to_lowercase().as_str()))
}

/// Interpret the model's free-text action input.
///
/// Accepted frame shapes: "frame 12", "frame index 0", "frames 10-20
/// step 5", and bare comma lists. Out-of-range indices are clamped, not
/// rejected. Text after a comma that reads like a question becomes the
/// query; inputs with no digits at all are treated as pure queries.
pub fn parse_action_input(raw: &str, meta: &VideoMeta) -> ActionInputParse {
    let trimmed = raw.trim();
    let last = meta.last_frame();
    let mut clamped = false;

    let range_re = regex::Regex::new(
        r"(?i)(\d+)\s*(?:-|–|\.\.|to)\s*(\d+)(?:\s*(?:step|stride|every)\s*(\d+))?",
    )
    .expect("static regex");
    let number_re = regex::Regex::new(r"\d+").expect("static regex");

    let mut indices: Vec<u32> = Vec::new();
    if let Some(captures) = range_re.captures(trimmed) {
        let start: u64 = captures[1].parse().unwrap_or(0);
        let end: u64 = captures[2].parse().unwrap_or(start);
        let step: u32 = captures
            .get(3)
            .and_then(|m| m.as_str().parse().ok())
            .unwrap_or(1);
        let (lo, hi) = if start <= end {
            (start, end)
        } else {
            (end, start)
        };
        if hi > last as u64 {
            clamped = true;
        }
        let lo = lo.min(last as u64) as u32;
        let hi = hi.min(last as u64) as u32;
        if let Ok(expanded) = expand_range(lo, hi, step.max(1), meta.total_frames) {
            indices = expanded;
        }
    } else {
        for m in number_re.find_iter(trimmed) {
            let value: u64 = match m.as_str().parse() {
                Ok(v) => v,
                Err(_) => {
                    clamped = true;
                    continue;
                }
            };
            if value > last as u64 {
                clamped = true;
                indices.push(last);
            } else {
                indices.push(value as u32);
            }
        }
    }
    indices.sort_unstable();
    indices.dedup();

    // Query extraction.
    let mut query: Option<String> = None;
    if !number_re.is_match(trimmed) {
        if !trimmed.is_empty() {
            query = Some(trimmed.to_string());
        }
    } else {
        for (pos, _) in trimmed.match_indices(',') {
            let rest = trimmed[pos + 1..].trim();
            if !rest.is_empty() && query_candidate(rest) {
                query = Some(rest.to_string());
                break;
            }
        }
    }

    ActionInputParse {
        input: ActionInput {
            frame_indices: indices,
            query,
            raw: raw.to_string(),
        },
        clamped,
    }
}
