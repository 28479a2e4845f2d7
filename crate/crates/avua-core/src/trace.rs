//! Episode traces: the JSON-lines record a run leaves behind.
//!
//! One line per event — policy, step, sampler suggestion, evaluation,
//! refinement, final — each carrying the trial number, a payload, and
//! the frames charged by that event. Replays recompute ledger totals
//! from these records and check them against the stored final summary.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    Policy,
    Step,
    Sampler,
    Evaluation,
    Refinement,
    Final,
}

/// One trace line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub kind: TraceKind,
    pub trial: u32,
    pub payload: serde_json::Value,
    #[serde(default)]
    pub frames_charged: Vec<u32>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace {path} is corrupt: {detail}")]
    Corrupt { path: PathBuf, detail: String },
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub fn write_trace(path: &Path, records: &[TraceRecord]) -> Result<(), TraceError> {
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(record).expect("trace record serializes"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| TraceError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>, TraceError> {
    let text = std::fs::read_to_string(path).map_err(|e| TraceError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut records = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: TraceRecord = serde_json::from_str(line).map_err(|e| TraceError::Corrupt {
            path: path.to_path_buf(),
            detail: format!("line {}: {e}", lineno + 1),
        })?;
        records.push(record);
    }
    if records.is_empty() {
        return Err(TraceError::Corrupt {
            path: path.to_path_buf(),
            detail: "trace has no records".into(),
        });
    }
    Ok(records)
}

/// Ledger totals recomputed from trace records alone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayTotals {
    pub total_charges: u64,
    pub distinct_frames: BTreeSet<u32>,
}

/// Recompute frame totals from the charged frames on each record.
/// Cache-served events charge nothing, so a plain sum reconstructs the
/// live ledger exactly.
pub fn replay_totals(records: &[TraceRecord]) -> ReplayTotals {
    let mut total_charges = 0u64;
    let mut distinct_frames = BTreeSet::new();
    for record in records {
        total_charges += record.frames_charged.len() as u64;
        distinct_frames.extend(record.frames_charged.iter().copied());
    }
    ReplayTotals {
        total_charges,
        distinct_frames,
    }
}

/// The stored final summary of a trace, if present and well-formed.
pub fn final_summary(records: &[TraceRecord]) -> Option<&serde_json::Value> {
    records
        .iter()
        .rev()
        .find(|r| r.kind == TraceKind::Final)
        .map(|r| &r.payload)
}
