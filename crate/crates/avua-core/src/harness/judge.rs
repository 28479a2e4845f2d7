//! Model-judged scoring of open-ended answers.

use crate::gateway::{GatewayError, LlmSession, PromptBundle};
use crate::policy::Question;
use crate::prompts::PromptCatalog;

/// An item only counts as correct when the judge says True with
/// confidence at or above this floor.
pub const JUDGE_CONFIDENCE_FLOOR: u8 = 80;

/// Judge verdict over one (prediction, gold) pair.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct JudgeOutcome {
    pub verdict: bool,
    pub confidence: u8,
    pub parse_failed: bool,
}

impl JudgeOutcome {
    pub fn correct(&self) -> bool {
        self.verdict && self.confidence >= JUDGE_CONFIDENCE_FLOOR
    }
}

/// Ask the judge whether a free-text prediction matches the ground
/// truth. Unparseable judge output counts the item incorrect and is
/// logged, never raised.
pub fn judge_open_ended(
    session: &mut LlmSession,
    catalog: &PromptCatalog,
    question: &Question,
    gold: &str,
    prediction: &str,
) -> Result<JudgeOutcome, GatewayError> {
    let template = catalog
        .render("evaluator", &[])
        .expect("evaluator template present");
    let user = format!(
        "{template}\n\n{}\nGround truth answer: {gold}\nPredicted answer: {prediction}",
        question.rendered()
    );
    let text = session.complete("judge", &PromptBundle::new("", user))?;

    let verdict_re = regex::Regex::new(r"(?i)evaluation\s*:\s*(true|false)").expect("static regex");
    let confidence_re = regex::Regex::new(r"(?i)confidence\s*:\s*(-?\d+)").expect("static regex");
    let verdict = verdict_re
        .captures(&text)
        .map(|c| c[1].eq_ignore_ascii_case("true"));
    let confidence = confidence_re
        .captures(&text)
        .and_then(|c| c[1].parse::<i64>().ok())
        .map(|v| v.clamp(0, 100) as u8);
    match (verdict, confidence) {
        (Some(verdict), Some(confidence)) => Ok(JudgeOutcome {
            verdict,
            confidence,
            parse_failed: false,
        }),
        _ => {
            log::warn!("judge output unparseable; counting the item incorrect");
            Ok(JudgeOutcome {
                verdict: false,
                confidence: 0,
                parse_failed: true,
            })
        }
    }
}
