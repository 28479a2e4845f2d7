//! Final-answer normalization.
//!
//! Multiple-choice finals must name an option; the normalizer maps the
//! common shapes models emit ("option 3", "(3)", "Option 3: ...") onto
//! the option index. Anything else counts as a wrong answer, never an
//! error. Temporal finals must carry a `[start, end]` frame window;
//! reversed bounds are swapped.

/// Extract the option index from a multiple-choice final answer.
pub fn normalize_mcq_answer(text: &str) -> Option<usize> {
    let option_re = regex::Regex::new(r"(?i)\boption\s*[:#]?\s*(\d+)").expect("static regex");
    if let Some(captures) = option_re.captures(text) {
        return captures[1].parse().ok();
    }
    // Bare forms: "3", "(3)", "3.", "(3):"
    let bare_re = regex::Regex::new(r"^\s*\(?\s*(\d+)\s*\)?\s*[:.]?\s*$").expect("static regex");
    bare_re
        .captures(text.trim())
        .and_then(|c| c[1].parse().ok())
}

/// Extract a frame window from a temporal-localization final answer.
pub fn parse_frame_window(text: &str) -> Option<[u32; 2]> {
    let bracket_re = regex::Regex::new(r"\[\s*(\d+)\s*,\s*(\d+)\s*\]").expect("static regex");
    let pair_re = regex::Regex::new(r"^\s*(\d+)\s*[,\-]\s*(\d+)\s*$").expect("static regex");
    let captures = bracket_re
        .captures(text)
        .or_else(|| pair_re.captures(text.trim()))?;
    let a: u32 = captures[1].parse().ok()?;
    let b: u32 = captures[2].parse().ok()?;
    Some(if a <= b { [a, b] } else { [b, a] })
}
