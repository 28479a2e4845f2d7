//! Self-reflection: the evaluator and the refiner.
//!
//! The evaluator judges a finished trajectory as True/False with a
//! 0-100 confidence; the refiner produces a diagnosis and a refined
//! plan. A refinement is produced whether or not the verdict was
//! positive: on failure it steers the next trial, on success it is
//! stored with the episode in long-term memory.

use serde::{Deserialize, Serialize};

use crate::gateway::{GatewayError, LlmSession, PromptBundle};
use crate::planner::Trajectory;
use crate::policy::{Policy, Question};
use crate::prompts::PromptCatalog;

/// Binary verdict over a trajectory with clamped confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub verdict: bool,
    pub confidence: u8,
    pub raw_text: String,
}

/// Diagnosis plus refined plan for the next trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub diagnosis: String,
    pub refined_plan: String,
    pub raw_text: String,
}

/// Longest character suffix of `text` within `limit`, marked when cut.
fn tail_with_marker(text: &str, limit: usize) -> String {
    let chars: Vec<char> = text.chars().collect();
    if chars.len() <= limit {
        return text.to_string();
    }
    let tail: String = chars[chars.len() - limit..].iter().collect();
    format!("[... earlier steps truncated ...]\n{tail}")
}

const EVALUATOR_TRAJECTORY_LIMIT: usize = 8_000;
const EVAL_FORMAT_REMINDER: &str =
    "Format reminder: reply with 'Evaluation: True' or 'Evaluation: False' and 'Confidence: N' (0-100).";

fn parse_evaluation(text: &str) -> Option<(bool, u8)> {
    let verdict_re = regex::Regex::new(r"(?i)evaluation\s*:\s*(true|false)").expect("static regex");
    let confidence_re = regex::Regex::new(r"(?i)confidence\s*:\s*(-?\d+)").expect("static regex");
    let verdict = verdict_re
        .captures(text)
        .map(|c| c[1].eq_ignore_ascii_case("true"))?;
    let confidence = confidence_re
        .captures(text)
        .and_then(|c| c[1].parse::<i64>().ok())?;
    Some((verdict, confidence.clamp(0, 100) as u8))
}

fn trial_summary(question: &Question, policy: Option<&Policy>, trajectory: &Trajectory) -> String {
    let mut out = String::new();
    out.push_str(&question.rendered());
    if let Some(policy) = policy {
        out.push_str(&format!("\nPolicy question type: {}", policy.question_type));
    }
    out.push_str("\nReasoning trajectory:\n");
    out.push_str(&tail_with_marker(
        &trajectory.rendered_text(),
        EVALUATOR_TRAJECTORY_LIMIT,
    ));
    out.push_str(&format!(
        "\nFinal Answer: {}",
        trajectory.final_answer.as_deref().unwrap_or("(none given)")
    ));
    out
}

/// Judge a trajectory. Trajectories without a final answer auto-fail
/// with full confidence and no model call. A malformed completion gets
/// one reprompt; if that also fails to parse, the evaluation falls back
/// to a conservative `false` with confidence 0, which triggers a retry.
pub fn evaluate(
    session: &mut LlmSession,
    catalog: &PromptCatalog,
    question: &Question,
    policy: Option<&Policy>,
    trajectory: &Trajectory,
) -> Result<Evaluation, GatewayError> {
    if trajectory.final_answer.is_none() {
        return Ok(Evaluation {
            verdict: false,
            confidence: 100,
            raw_text: "auto-fail: trajectory ended without a final answer".to_string(),
        });
    }
    let template = catalog
        .render("evaluator", &[])
        .expect("evaluator template present");
    let user = format!(
        "{template}\n\n{}",
        trial_summary(question, policy, trajectory)
    );
    let first = session.complete("evaluator", &PromptBundle::new("", user.clone()))?;
    if let Some((verdict, confidence)) = parse_evaluation(&first) {
        return Ok(Evaluation {
            verdict,
            confidence,
            raw_text: first,
        });
    }
    let retry = format!("{user}\n\n{EVAL_FORMAT_REMINDER}");
    let second = session.complete("evaluator", &PromptBundle::new("", retry))?;
    match parse_evaluation(&second) {
        Some((verdict, confidence)) => Ok(Evaluation {
            verdict,
            confidence,
            raw_text: second,
        }),
        None => {
            log::warn!("evaluator output unparseable twice; treating as verdict=false");
            Ok(Evaluation {
                verdict: false,
                confidence: 0,
                raw_text: second,
            })
        }
    }
}

/// Split refiner output at a "plan" heading into diagnosis and refined
/// plan. Without such a heading both fields carry the whole text.
fn split_refinement(text: &str) -> (String, String) {
    let lines: Vec<&str> = text.lines().collect();
    let plan_at = lines.iter().position(|line| {
        line.split_once(':')
            .map(|(head, _)| {
                let head = head.trim().to_lowercase();
                head.len() <= 48 && head.contains("plan")
            })
            .unwrap_or(false)
    });
    match plan_at {
        Some(i) => {
            let mut diagnosis_lines: Vec<String> = Vec::new();
            for line in &lines[..i] {
                match line.split_once(':') {
                    Some((head, rest)) if head.trim().to_lowercase().contains("diagnos") => {
                        diagnosis_lines.push(rest.trim().to_string());
                    }
                    _ => diagnosis_lines.push(line.to_string()),
                }
            }
            let mut plan_lines: Vec<String> = Vec::new();
            let (_, first_rest) = lines[i].split_once(':').expect("heading has colon");
            plan_lines.push(first_rest.trim().to_string());
            for line in &lines[i + 1..] {
                plan_lines.push(line.to_string());
            }
            (
                diagnosis_lines.join("\n").trim().to_string(),
                plan_lines.join("\n").trim().to_string(),
            )
        }
        None => (text.trim().to_string(), text.trim().to_string()),
    }
}

/// Produce a refinement for a finished trial. Lenient by design:
/// refinements are advisory, so any completion shape is accepted.
pub fn refine(
    session: &mut LlmSession,
    catalog: &PromptCatalog,
    question: &Question,
    policy: Option<&Policy>,
    trajectory: &Trajectory,
    evaluation: Option<&Evaluation>,
) -> Result<Refinement, GatewayError> {
    let template = catalog
        .render("refiner", &[])
        .expect("refiner template present");
    let eval_line = match evaluation {
        Some(ev) => format!(
            "Evaluation: {}, Confidence: {}",
            if ev.verdict { "True" } else { "False" },
            ev.confidence
        ),
        None => "Evaluation: (not available)".to_string(),
    };
    let user = format!(
        "{template}\n\n{}\n{eval_line}",
        trial_summary(question, policy, trajectory)
    );
    let text = session.complete("refiner", &PromptBundle::new("", user))?;
    let (diagnosis, refined_plan) = split_refinement(&text);
    Ok(Refinement {
        diagnosis,
        refined_plan,
        raw_text: text,
    })
}
