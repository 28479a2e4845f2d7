//! Benchmark harness: dataset items in, metric report out.
//!
//! Runs one episode per item against the configured backends, scores
//! answers per dataset kind (MCQ accuracy, temporal IoU recall at 0.3
//! and 0.5, judge-gated open-ended accuracy), aggregates frame-access
//! statistics, and emits a JSON report plus a plaintext table. Per-item
//! failures are recorded and the run continues.

mod cue;
mod items;
mod judge;
mod loaders;
mod metrics;

pub use cue::{cue_bucket_report, CueBucketReport, CueSample, CUE_BINS};
pub use items::{
    auto_cue_tag, default_cue_keywords, load_manifest, BenchmarkItem, CuePosition, GoldAnswer,
    ItemError,
};
pub use judge::{judge_open_ended, JudgeOutcome, JUDGE_CONFIDENCE_FLOOR};
pub use loaders::{load_mcq_annotations, load_nlq_annotations};
pub use metrics::{interval_iou, recall_at_1, score_mcq};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answer::parse_frame_window;
use crate::gateway::{CompletionBackend, GatewayError, LlmSession};
use crate::memory::MemoryStore;
use crate::planner::{AblationConfig, Budgets, EpisodeError, EpisodeRunner, RunOptions};
use crate::policy::{DatasetKind, VideoMeta};
use crate::prompts::PromptCatalog;
use crate::toolbox::{
    standard_registry, HttpToolAdapter, SyntheticToolAdapter, SyntheticVideoSpec, ToolRegistry,
    ToolboxError, VideoSpecError,
};
use crate::trace::{write_trace, TraceError, TraceRecord};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Item(#[from] ItemError),
    #[error(transparent)]
    Episode(#[from] EpisodeError),
    #[error(transparent)]
    VideoSpec(#[from] VideoSpecError),
    #[error(transparent)]
    Toolbox(#[from] ToolboxError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("video {video_ref}: metadata disagrees with the manifest ({detail})")]
    MetaMismatch { video_ref: String, detail: String },
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("benchmark manifest is empty")]
    EmptyManifest,
}

/// Supplies a tool registry for each item's video.
pub trait ToolboxProvider: Send + Sync {
    fn registry_for(&self, video_ref: &str, meta: &VideoMeta)
        -> Result<ToolRegistry, HarnessError>;
}

/// Serves synthetic fixture videos from a directory, cached per path.
pub struct SyntheticToolboxProvider {
    base_dir: PathBuf,
    window_stride: u32,
    detection_threshold: f64,
    cache: Mutex<BTreeMap<PathBuf, Arc<SyntheticVideoSpec>>>,
}

impl SyntheticToolboxProvider {
    pub fn new(base_dir: impl Into<PathBuf>) -> Self {
        SyntheticToolboxProvider {
            base_dir: base_dir.into(),
            window_stride: 1,
            detection_threshold: 0.6,
            cache: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn with_window_stride(mut self, stride: u32) -> Self {
        self.window_stride = stride.max(1);
        self
    }

    pub fn with_detection_threshold(mut self, threshold: f64) -> Self {
        self.detection_threshold = threshold;
        self
    }

    pub fn load_spec(&self, video_ref: &str) -> Result<Arc<SyntheticVideoSpec>, HarnessError> {
        let path = if Path::new(video_ref).is_absolute() {
            PathBuf::from(video_ref)
        } else {
            self.base_dir.join(video_ref)
        };
        let mut cache = self.cache.lock().expect("video cache lock");
        if let Some(spec) = cache.get(&path) {
            return Ok(spec.clone());
        }
        let spec = Arc::new(SyntheticVideoSpec::from_path(&path)?);
        cache.insert(path, spec.clone());
        Ok(spec)
    }
}

impl ToolboxProvider for SyntheticToolboxProvider {
    fn registry_for(
        &self,
        video_ref: &str,
        meta: &VideoMeta,
    ) -> Result<ToolRegistry, HarnessError> {
        let spec = self.load_spec(video_ref)?;
        if spec.meta.total_frames != meta.total_frames {
            return Err(HarnessError::MetaMismatch {
                video_ref: video_ref.to_string(),
                detail: format!(
                    "total_frames {} vs manifest {}",
                    spec.meta.total_frames, meta.total_frames
                ),
            });
        }
        let adapter = Arc::new(
            SyntheticToolAdapter::new(spec).with_detection_threshold(self.detection_threshold),
        );
        Ok(standard_registry(adapter, self.window_stride)?)
    }
}

/// One remote tool service shared by every item.
pub struct RemoteToolboxProvider {
    base_url: String,
    window_stride: u32,
}

impl RemoteToolboxProvider {
    pub fn new(base_url: impl Into<String>) -> Self {
        RemoteToolboxProvider {
            base_url: base_url.into(),
            window_stride: 1,
        }
    }

    pub fn with_window_stride(mut self, stride: u32) -> Self {
        self.window_stride = stride.max(1);
        self
    }
}

impl ToolboxProvider for RemoteToolboxProvider {
    fn registry_for(
        &self,
        _video_ref: &str,
        _meta: &VideoMeta,
    ) -> Result<ToolRegistry, HarnessError> {
        let adapter = Arc::new(HttpToolAdapter::new(self.base_url.clone()));
        Ok(standard_registry(adapter, self.window_stride)?)
    }
}

/// Everything a benchmark run needs besides the items.
pub struct BenchSetup<'a> {
    pub backend: &'a dyn CompletionBackend,
    pub catalog: &'a PromptCatalog,
    pub toolbox: &'a dyn ToolboxProvider,
    pub memory: Option<&'a MemoryStore>,
    pub budgets: Budgets,
    pub options: RunOptions,
}

/// Per-run knobs.
#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub ablation: AblationConfig,
    pub row_name: String,
    pub config_digest: String,
    pub jobs: usize,
    pub out_dir: Option<PathBuf>,
    pub cue_keywords: Vec<(String, CuePosition)>,
    pub iou_thresholds: Vec<f64>,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            ablation: AblationConfig::full(),
            row_name: "ours".into(),
            config_digest: String::new(),
            jobs: 1,
            out_dir: None,
            cue_keywords: default_cue_keywords(),
            iou_thresholds: vec![0.3, 0.5],
        }
    }
}

/// Scored outcome of one item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemOutcome {
    pub id: String,
    pub kind: DatasetKind,
    pub answer: String,
    /// Present for MCQ and open-ended items.
    pub correct: Option<bool>,
    /// Present for localization items.
    pub iou: Option<f64>,
    pub frames: u64,
    pub total_charges: u64,
    pub ratio: f64,
    pub question_type: String,
    pub cue_tag: CuePosition,
    pub trials: usize,
    #[serde(default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub n: u64,
    pub correct: u64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CueStats {
    pub n: u64,
    pub mean_frames: f64,
    pub accuracy: f64,
}

/// Conventions pinned by the run, printed at the top of every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub row: String,
    pub config_digest: String,
    /// Frame windows are inclusive integer index ranges; IoU counts
    /// frames, with the frame rate reported so a seconds view stays
    /// derivable.
    pub iou_convention: String,
    pub iou_thresholds: Vec<f64>,
    pub judge_confidence_floor: u8,
}

/// The aggregate benchmark result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub header: ReportHeader,
    pub n_items: u64,
    /// Fraction correct over MCQ plus open-ended items.
    pub accuracy: f64,
    /// Recall at top-1 per IoU threshold, over localization items.
    pub iou_recall: BTreeMap<String, f64>,
    /// Mean distinct frames accessed per item.
    pub avg_frames: f64,
    /// Mean per-item distinct-frame ratio.
    pub avg_ratio: f64,
    pub per_question_type: BTreeMap<String, GroupStats>,
    pub per_cue: BTreeMap<String, CueStats>,
    pub cue_report: CueBucketReport,
    pub items: Vec<ItemOutcome>,
}

fn threshold_key(threshold: f64) -> String {
    format!("{threshold}")
}

/// Fold item outcomes into the aggregate numbers. Kept separate from
/// the runner so reports can be re-derived from their per-item records.
pub fn aggregate(
    header: ReportHeader,
    outcomes: Vec<ItemOutcome>,
    cue_report: CueBucketReport,
) -> BenchmarkReport {
    let scored: Vec<&ItemOutcome> = outcomes.iter().filter(|o| o.error.is_none()).collect();

    let graded: Vec<&&ItemOutcome> = scored.iter().filter(|o| o.correct.is_some()).collect();
    let correct = graded.iter().filter(|o| o.correct.unwrap_or(false)).count();
    let accuracy = if graded.is_empty() {
        0.0
    } else {
        correct as f64 / graded.len() as f64
    };

    let mut iou_recall = BTreeMap::new();
    let loc: Vec<&&ItemOutcome> = scored.iter().filter(|o| o.iou.is_some()).collect();
    for &threshold in &header.iou_thresholds {
        let recall = if loc.is_empty() {
            0.0
        } else {
            loc.iter()
                .filter(|o| o.iou.unwrap_or(0.0) >= threshold)
                .count() as f64
                / loc.len() as f64
        };
        iou_recall.insert(threshold_key(threshold), recall);
    }

    let avg_frames = if scored.is_empty() {
        0.0
    } else {
        scored.iter().map(|o| o.frames as f64).sum::<f64>() / scored.len() as f64
    };
    let avg_ratio = if scored.is_empty() {
        0.0
    } else {
        scored.iter().map(|o| o.ratio).sum::<f64>() / scored.len() as f64
    };

    let mut per_question_type: BTreeMap<String, GroupStats> = BTreeMap::new();
    for outcome in &scored {
        let stats = per_question_type
            .entry(outcome.question_type.clone())
            .or_default();
        stats.n += 1;
        if outcome.correct == Some(true) {
            stats.correct += 1;
        }
    }
    for stats in per_question_type.values_mut() {
        stats.accuracy = if stats.n == 0 {
            0.0
        } else {
            stats.correct as f64 / stats.n as f64
        };
    }

    let mut per_cue: BTreeMap<String, CueStats> = BTreeMap::new();
    for outcome in &scored {
        let stats = per_cue
            .entry(outcome.cue_tag.label().to_string())
            .or_default();
        stats.n += 1;
        stats.mean_frames += outcome.frames as f64;
        if outcome.correct == Some(true) {
            stats.accuracy += 1.0;
        }
    }
    for stats in per_cue.values_mut() {
        if stats.n > 0 {
            stats.mean_frames /= stats.n as f64;
            stats.accuracy /= stats.n as f64;
        }
    }

    BenchmarkReport {
        header,
        n_items: outcomes.len() as u64,
        accuracy,
        iou_recall,
        avg_frames,
        avg_ratio,
        per_question_type,
        per_cue,
        cue_report,
        items: outcomes,
    }
}

impl BenchmarkReport {
    /// Re-derive the aggregates from the per-item records and compare.
    /// Holds because aggregation has no hidden state.
    pub fn consistent_with_items(&self) -> bool {
        let recomputed = aggregate(
            self.header.clone(),
            self.items.clone(),
            self.cue_report.clone(),
        );
        recomputed.accuracy == self.accuracy
            && recomputed.iou_recall == self.iou_recall
            && recomputed.avg_frames == self.avg_frames
            && recomputed.avg_ratio == self.avg_ratio
            && recomputed.per_question_type == self.per_question_type
            && recomputed.per_cue == self.per_cue
            && recomputed.n_items == self.n_items
    }

    /// Plaintext table view of the report.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "row: {}\nconfig: {}\niou: {} at thresholds {:?}; judge floor {}\n",
            self.header.row,
            self.header.config_digest,
            self.header.iou_convention,
            self.header.iou_thresholds,
            self.header.judge_confidence_floor,
        ));
        out.push_str(&format!(
            "items: {}  accuracy: {:.4}  avg_frames: {:.2}  avg_ratio: {:.6}\n",
            self.n_items, self.accuracy, self.avg_frames, self.avg_ratio
        ));
        for (threshold, recall) in &self.iou_recall {
            out.push_str(&format!("r@1(iou>={threshold}): {recall:.4}\n"));
        }
        out.push_str(&format!(
            "{:<8} {:<22} {:>7} {:>8} {:>9} {:>6}  {}\n",
            "id", "kind/score", "frames", "ratio", "trials", "cue", "answer"
        ));
        for item in &self.items {
            let score = match (&item.error, item.correct, item.iou) {
                (Some(_), _, _) => "error".to_string(),
                (None, Some(true), _) => "correct".to_string(),
                (None, Some(false), _) => "wrong".to_string(),
                (None, None, Some(iou)) => format!("iou={iou:.3}"),
                (None, None, None) => "-".to_string(),
            };
            let kind = match item.kind {
                DatasetKind::Mcq => "mcq",
                DatasetKind::TemporalLocalization => "loc",
                DatasetKind::OpenEnded => "open",
            };
            let answer: String = item.answer.chars().take(32).collect();
            out.push_str(&format!(
                "{:<8} {:<22} {:>7} {:>8.5} {:>9} {:>6}  {}\n",
                item.id,
                format!("{kind}/{score}"),
                item.frames,
                item.ratio,
                item.trials,
                item.cue_tag.label(),
                answer
            ));
        }
        out
    }
}

struct ItemRun {
    outcome: ItemOutcome,
    trace: Vec<TraceRecord>,
    total_frames: u32,
}

fn run_item(
    item: &BenchmarkItem,
    setup: &BenchSetup,
    options: &BenchOptions,
) -> Result<ItemRun, HarnessError> {
    item.validate(true)?;
    let registry = setup.toolbox.registry_for(&item.video_ref, &item.meta)?;
    let runner = EpisodeRunner {
        backend: setup.backend,
        catalog: setup.catalog,
        registry: &registry,
        memory: setup.memory,
        budgets: setup.budgets,
        options: setup.options,
    };
    let transcript_ref = options
        .out_dir
        .as_ref()
        .map(|_| format!("transcript_{}.jsonl", item.id));
    let mut result = runner.run_episode(
        &item.question,
        &item.meta,
        &options.ablation,
        transcript_ref,
    )?;
    if let Some(record) = result.trace.last_mut() {
        if let Some(payload) = record.payload.as_object_mut() {
            payload.insert(
                "config_digest".to_string(),
                serde_json::Value::String(options.config_digest.clone()),
            );
        }
    }

    let mut transcript = result.transcript.clone();
    let (correct, iou) = match (&item.gold, item.question.dataset_kind) {
        (Some(GoldAnswer::OptionIndex(gold)), DatasetKind::Mcq) => {
            (Some(score_mcq(&result.answer, *gold)), None)
        }
        (Some(GoldAnswer::FrameWindow(gold)), DatasetKind::TemporalLocalization) => {
            let iou = parse_frame_window(&result.answer)
                .map(|pred| interval_iou(pred, *gold))
                .unwrap_or(0.0);
            (None, Some(iou))
        }
        (Some(GoldAnswer::FreeText(gold)), DatasetKind::OpenEnded) => {
            let mut judge_session = LlmSession::new(setup.backend);
            let outcome = judge_open_ended(
                &mut judge_session,
                setup.catalog,
                &item.question,
                gold,
                &result.answer,
            )?;
            transcript.entries.extend(judge_session.transcript.entries);
            (Some(outcome.correct()), None)
        }
        _ => (None, None),
    };

    let question_type = result
        .trials
        .last()
        .and_then(|t| t.policy.as_ref())
        .map(|p| p.question_type.clone())
        .unwrap_or_else(|| "unclassified".to_string());

    if let Some(out_dir) = &options.out_dir {
        write_trace(
            &out_dir.join(format!("trace_{}.jsonl", item.id)),
            &result.trace,
        )?;
        let transcript_path = out_dir.join(format!("transcript_{}.jsonl", item.id));
        transcript
            .write_jsonl(&transcript_path)
            .map_err(HarnessError::Gateway)?;
    }

    Ok(ItemRun {
        outcome: ItemOutcome {
            id: item.id.clone(),
            kind: item.question.dataset_kind,
            answer: result.answer.clone(),
            correct,
            iou,
            frames: result.distinct_frames_accessed,
            total_charges: result.frames_accessed,
            ratio: if item.meta.total_frames == 0 {
                0.0
            } else {
                result.distinct_frames_accessed as f64 / item.meta.total_frames as f64
            },
            question_type,
            cue_tag: item.effective_cue(&options.cue_keywords),
            trials: result.trials.len(),
            error: None,
        },
        trace: result.trace,
        total_frames: item.meta.total_frames,
    })
}

fn error_outcome(item: &BenchmarkItem, options: &BenchOptions, error: String) -> ItemRun {
    ItemRun {
        outcome: ItemOutcome {
            id: item.id.clone(),
            kind: item.question.dataset_kind,
            answer: String::new(),
            correct: None,
            iou: None,
            frames: 0,
            total_charges: 0,
            ratio: 0.0,
            question_type: "unclassified".to_string(),
            cue_tag: item.effective_cue(&options.cue_keywords),
            trials: 0,
            error: Some(error),
        },
        trace: Vec::new(),
        total_frames: item.meta.total_frames,
    }
}

/// Run every item and aggregate the report. Items execute in id order
/// (concurrently when `jobs > 1`); aggregation is a deterministic fold
/// over the id-sorted outcomes, so the report is independent of
/// execution order.
pub fn run_benchmark(
    items: &[BenchmarkItem],
    setup: &BenchSetup,
    options: &BenchOptions,
) -> Result<BenchmarkReport, HarnessError> {
    if items.is_empty() {
        return Err(HarnessError::EmptyManifest);
    }
    let mut sorted: Vec<&BenchmarkItem> = items.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));

    if let Some(out_dir) = &options.out_dir {
        std::fs::create_dir_all(out_dir).map_err(|e| HarnessError::Io {
            path: out_dir.clone(),
            source: e,
        })?;
    }

    let jobs = options.jobs.max(1);
    let mut runs: Vec<ItemRun> = Vec::with_capacity(sorted.len());
    if jobs == 1 {
        for item in &sorted {
            let run = run_item(item, setup, options)
                .unwrap_or_else(|e| error_outcome(item, options, e.to_string()));
            runs.push(run);
        }
    } else {
        for chunk in sorted.chunks(jobs) {
            let mut chunk_runs: Vec<Option<ItemRun>> = Vec::new();
            std::thread::scope(|scope| {
                let handles: Vec<_> = chunk
                    .iter()
                    .map(|item| {
                        scope.spawn(move || {
                            run_item(item, setup, options)
                                .unwrap_or_else(|e| error_outcome(item, options, e.to_string()))
                        })
                    })
                    .collect();
                for handle in handles {
                    chunk_runs.push(Some(handle.join().expect("bench worker panicked")));
                }
            });
            runs.extend(chunk_runs.into_iter().flatten());
        }
    }

    // Fold in id order regardless of completion order.
    runs.sort_by(|a, b| a.outcome.id.cmp(&b.outcome.id));

    let samples: Vec<CueSample> = runs
        .iter()
        .map(|run| CueSample {
            cue: run.outcome.cue_tag,
            total_frames: run.total_frames,
            distinct_frames: run.outcome.frames,
            trace: &run.trace,
        })
        .collect();
    let cue_report = cue_bucket_report(&samples);

    let header = ReportHeader {
        row: options.row_name.clone(),
        config_digest: options.config_digest.clone(),
        iou_convention: "inclusive integer frame-index windows".to_string(),
        iou_thresholds: options.iou_thresholds.clone(),
        judge_confidence_floor: JUDGE_CONFIDENCE_FLOOR,
    };
    let outcomes: Vec<ItemOutcome> = runs.into_iter().map(|r| r.outcome).collect();
    let report = aggregate(header, outcomes, cue_report);

    if let Some(out_dir) = &options.out_dir {
        let json_path = out_dir.join("report.json");
        let encoded = serde_json::to_string_pretty(&report).expect("report serializes");
        std::fs::write(&json_path, encoded).map_err(|e| HarnessError::Io {
            path: json_path,
            source: e,
        })?;
        let table_path = out_dir.join("report.txt");
        std::fs::write(&table_path, report.render_table()).map_err(|e| HarnessError::Io {
            path: table_path,
            source: e,
        })?;
    }

    Ok(report)
}
