//! Textual-cue analysis: where in the video did episodes look, split by
//! the cue present in the question.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::items::CuePosition;
use crate::trace::TraceRecord;

pub const CUE_BINS: usize = 10;

/// Inputs for one item's cue analysis.
pub struct CueSample<'a> {
    pub cue: CuePosition,
    pub total_frames: u32,
    pub distinct_frames: u64,
    pub trace: &'a [TraceRecord],
}

/// Positional access histograms per cue tag plus cue/no-cue mean frame
/// counts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CueBucketReport {
    /// Per cue tag: share of accessed-frame positions falling into each
    /// of ten equal bins over the normalized [0, 1] video position.
    pub histograms: BTreeMap<String, Vec<f64>>,
    /// Per cue tag: raw access counts behind the histogram.
    pub counts: BTreeMap<String, Vec<u64>>,
    pub cue_mean_frames: f64,
    pub no_cue_mean_frames: f64,
    pub cue_items: usize,
    pub no_cue_items: usize,
}

/// Fold per-item traces into the cue report. Items with an empty trace
/// set contribute nothing; an entirely empty input yields empty
/// histograms.
pub fn cue_bucket_report(samples: &[CueSample]) -> CueBucketReport {
    let mut counts: BTreeMap<String, Vec<u64>> = BTreeMap::new();
    let mut cue_frames_total = 0u64;
    let mut cue_items = 0usize;
    let mut no_cue_frames_total = 0u64;
    let mut no_cue_items = 0usize;

    for sample in samples {
        if sample.cue == CuePosition::None {
            no_cue_frames_total += sample.distinct_frames;
            no_cue_items += 1;
        } else {
            cue_frames_total += sample.distinct_frames;
            cue_items += 1;
        }
        if sample.total_frames == 0 {
            continue;
        }
        let bins = counts
            .entry(sample.cue.label().to_string())
            .or_insert_with(|| vec![0; CUE_BINS]);
        for record in sample.trace {
            for &frame in &record.frames_charged {
                let position = frame as f64 / sample.total_frames as f64;
                let bin = ((position * CUE_BINS as f64) as usize).min(CUE_BINS - 1);
                bins[bin] += 1;
            }
        }
    }

    let histograms = counts
        .iter()
        .map(|(cue, bins)| {
            let total: u64 = bins.iter().sum();
            let mass = if total == 0 {
                vec![0.0; CUE_BINS]
            } else {
                bins.iter().map(|&c| c as f64 / total as f64).collect()
            };
            (cue.clone(), mass)
        })
        .collect();

    CueBucketReport {
        histograms,
        counts,
        cue_mean_frames: if cue_items == 0 {
            0.0
        } else {
            cue_frames_total as f64 / cue_items as f64
        },
        no_cue_mean_frames: if no_cue_items == 0 {
            0.0
        } else {
            no_cue_frames_total as f64 / no_cue_items as f64
        },
        cue_items,
        no_cue_items,
    }
}
