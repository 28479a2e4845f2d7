//! Metric primitives: temporal IoU, recall at top-1, MCQ scoring.

use crate::answer::normalize_mcq_answer;

/// Intersection-over-union of two frame windows, counting frame
/// indices inclusively (both bounds belong to the window). Windows must
/// arrive normalized (start <= end); disjoint windows score 0.
pub fn interval_iou(pred: [u32; 2], gold: [u32; 2]) -> f64 {
    let [ps, pe] = pred;
    let [gs, ge] = gold;
    debug_assert!(ps <= pe && gs <= ge, "windows must be normalized");
    let lo = ps.max(gs) as i64;
    let hi = pe.min(ge) as i64;
    let intersection = (hi - lo + 1).max(0) as u64;
    if intersection == 0 {
        return 0.0;
    }
    let pred_len = (pe - ps + 1) as u64;
    let gold_len = (ge - gs + 1) as u64;
    let union = pred_len + gold_len - intersection;
    intersection as f64 / union as f64
}

/// Fraction of (pred, gold) pairs whose IoU reaches the threshold.
/// An empty pair list is defined as 0 (with a warning).
pub fn recall_at_1(pairs: &[([u32; 2], [u32; 2])], threshold: f64) -> f64 {
    if pairs.is_empty() {
        log::warn!("recall_at_1 over an empty pair list; defining the result as 0");
        return 0.0;
    }
    let hits = pairs
        .iter()
        .filter(|(pred, gold)| interval_iou(*pred, *gold) >= threshold)
        .count();
    hits as f64 / pairs.len() as f64
}

/// True iff the final answer normalizes to exactly the gold option.
/// Unparseable finals are wrong, never errors.
pub fn score_mcq(final_answer: &str, gold_index: usize) -> bool {
    normalize_mcq_answer(final_answer) == Some(gold_index)
}
