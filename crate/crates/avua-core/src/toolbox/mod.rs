//! Tool registry, dispatch, and the frame-access ledger.
//!
//! Tools are registered once per episode setup and dispatched by name.
//! Dispatch owns the accounting rules: video-window tools expand each
//! requested index to a 4-frame window, frames already held in the
//! episode's short-term cache are served for free, and every fresh
//! access is charged to the ledger that the benchmark reports read.

mod http;
mod mock;

pub use http::HttpToolAdapter;
pub use mock::{
    AudioSegment, DetectedObject, FrameAnnotation, SyntheticToolAdapter, SyntheticVideoSpec,
    VideoSpecError,
};

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::memory::ShortTermCache;
use crate::planner::ActionInput;
use crate::policy::VideoMeta;

/// Input family a tool consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Video,
    Image,
    Audio,
    Meta,
}

/// Registry entry describing one invokable tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolDescriptor {
    pub name: String,
    pub modality: Modality,
    /// Fixed frame window charged per requested index; 0 means the tool
    /// consumes a variable (possibly zero) number of frames.
    pub frames_per_call: u32,
    pub accepts_query: bool,
    pub description: String,
}

/// What a tool invocation returned, plus its accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub text: String,
    /// Frames newly charged by this invocation; empty when everything
    /// was served from the short-term cache.
    pub frames_charged: Vec<u32>,
    pub tool: String,
    pub cache_hit: bool,
}

/// Per-episode frame-access accounting.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameLedger {
    pub total_charges: u64,
    pub distinct_frames: BTreeSet<u32>,
    pub per_tool: BTreeMap<String, u64>,
}

impl FrameLedger {
    pub fn charge(&mut self, tool: &str, frames: &[u32]) {
        self.total_charges += frames.len() as u64;
        self.distinct_frames.extend(frames.iter().copied());
        *self.per_tool.entry(tool.to_string()).or_insert(0) += frames.len() as u64;
    }

    pub fn distinct_count(&self) -> u64 {
        self.distinct_frames.len() as u64
    }
}

/// Distinct-frame count and its share of the whole video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerReport {
    pub frames: u64,
    pub ratio: f64,
}

/// Benchmark-facing view of a ledger: cached re-reads are free, so the
/// reported count is the number of distinct frames accessed.
pub fn ledger_report(ledger: &FrameLedger, meta: &VideoMeta) -> LedgerReport {
    let frames = ledger.distinct_count();
    let ratio = if meta.total_frames == 0 {
        0.0
    } else {
        frames as f64 / meta.total_frames as f64
    };
    LedgerReport { frames, ratio }
}

/// Request handed to an adapter after dispatch-level bookkeeping.
pub struct AdapterRequest<'a> {
    pub tool: &'a ToolDescriptor,
    pub frames: &'a [u32],
    pub query: Option<&'a str>,
}

/// Raw adapter output before accounting is attached.
#[derive(Debug, Clone)]
pub struct AdapterResponse {
    pub text: String,
    pub frames_consumed: Option<u64>,
    pub metadata: serde_json::Value,
}

impl AdapterResponse {
    pub fn text(text: impl Into<String>) -> Self {
        AdapterResponse {
            text: text.into(),
            frames_consumed: None,
            metadata: serde_json::Value::Null,
        }
    }
}

#[derive(Debug, Error)]
#[error("{0}")]
pub struct AdapterError(pub String);

/// Backend executing tool calls: synthetic mock or remote HTTP service.
pub trait ToolAdapter: Send + Sync {
    fn call(&self, request: &AdapterRequest) -> Result<AdapterResponse, AdapterError>;
}

#[derive(Debug, Error)]
pub enum ToolboxError {
    #[error("tool {0:?} is already registered")]
    DuplicateTool(String),
    #[error("unknown tool {0:?}")]
    UnknownTool(String),
}

struct RegisteredTool {
    descriptor: ToolDescriptor,
    adapter: Arc<dyn ToolAdapter>,
}

/// Read-only-after-setup registry of invokable tools.
pub struct ToolRegistry {
    tools: Vec<RegisteredTool>,
    window_stride: u32,
}

impl Default for ToolRegistry {
    fn default() -> Self {
        Self::new()
    }
}

impl ToolRegistry {
    pub fn new() -> Self {
        ToolRegistry {
            tools: Vec::new(),
            window_stride: 1,
        }
    }

    /// Spacing between the frames of an expanded window (default 1,
    /// i.e. consecutive frames).
    pub fn with_window_stride(mut self, stride: u32) -> Self {
        self.window_stride = stride.max(1);
        self
    }

    pub fn register(
        &mut self,
        descriptor: ToolDescriptor,
        adapter: Arc<dyn ToolAdapter>,
    ) -> Result<(), ToolboxError> {
        if self
            .tools
            .iter()
            .any(|t| t.descriptor.name == descriptor.name)
        {
            return Err(ToolboxError::DuplicateTool(descriptor.name));
        }
        self.tools.push(RegisteredTool {
            descriptor,
            adapter,
        });
        Ok(())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tools.iter().any(|t| t.descriptor.name == name)
    }

    pub fn len(&self) -> usize {
        self.tools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }

    pub fn descriptors(&self) -> impl Iterator<Item = &ToolDescriptor> {
        self.tools.iter().map(|t| &t.descriptor)
    }

    /// Tool list block for the agent prompt's `{tools}` slot.
    pub fn tool_list_text(&self) -> String {
        self.tools
            .iter()
            .map(|t| format!("- {}: {}", t.descriptor.name, t.descriptor.description))
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Comma-joined names for the `{tool_names}` slot.
    pub fn tool_names_text(&self) -> String {
        self.tools
            .iter()
            .map(|t| t.descriptor.name.clone())
            .collect::<Vec<_>>()
            .join(", ")
    }

    /// The 4-frame window anchored at `anchor`, clamped to the video.
    fn window(&self, anchor: u32, len: u32, meta: &VideoMeta) -> Vec<u32> {
        let mut frames = Vec::with_capacity(len as usize);
        for k in 0..len {
            let frame = anchor as u64 + (k as u64) * (self.window_stride as u64);
            if frame > meta.last_frame() as u64 {
                break;
            }
            frames.push(frame as u32);
        }
        if frames.is_empty() {
            frames.push(meta.clamp_index(anchor));
        }
        frames
    }

    /// Dispatch a tool call.
    ///
    /// Each requested index is treated as a window anchor. Anchors whose
    /// observation is already in the short-term cache are served for
    /// free; fresh anchors invoke the adapter, charge every window frame
    /// to the ledger, and populate the cache under each charged frame.
    /// Adapter failures degrade to an error-text observation so the
    /// trial keeps running.
    pub fn invoke(
        &self,
        tool: &str,
        input: &ActionInput,
        meta: &VideoMeta,
        ledger: &mut FrameLedger,
        cache: &mut ShortTermCache,
    ) -> Result<Observation, ToolboxError> {
        let registered = self
            .tools
            .iter()
            .find(|t| t.descriptor.name == tool)
            .ok_or_else(|| ToolboxError::UnknownTool(tool.to_string()))?;
        let descriptor = &registered.descriptor;
        let query = input.query.as_deref();

        // Audio consumes no frames: pass indices through for context,
        // charge nothing, cache nothing.
        if descriptor.modality == Modality::Audio {
            let request = AdapterRequest {
                tool: descriptor,
                frames: &input.frame_indices,
                query,
            };
            let text = match registered.adapter.call(&request) {
                Ok(response) => response.text,
                Err(e) => format!("[tool error] {tool}: {e}"),
            };
            return Ok(Observation {
                text,
                frames_charged: Vec::new(),
                tool: tool.to_string(),
                cache_hit: false,
            });
        }

        let mut anchors: Vec<u32> = input
            .frame_indices
            .iter()
            .map(|&f| meta.clamp_index(f))
            .collect();
        anchors.sort_unstable();
        anchors.dedup();

        if anchors.is_empty() {
            return Ok(Observation {
                text: format!("[tool error] {tool}: no valid frame indices provided"),
                frames_charged: Vec::new(),
                tool: tool.to_string(),
                cache_hit: false,
            });
        }

        let window_len = descriptor.frames_per_call.max(1);
        let mut texts: Vec<String> = Vec::new();
        let mut seen_texts: BTreeSet<String> = BTreeSet::new();
        let mut newly_charged: Vec<u32> = Vec::new();
        let mut all_cached = true;

        for &anchor in &anchors {
            if let Some(cached) = cache.get(anchor, tool) {
                if seen_texts.insert(cached.text.clone()) {
                    texts.push(cached.text.clone());
                }
                continue;
            }
            all_cached = false;
            let frames = self.window(anchor, window_len, meta);
            let request = AdapterRequest {
                tool: descriptor,
                frames: &frames,
                query,
            };
            match registered.adapter.call(&request) {
                Ok(response) => {
                    ledger.charge(tool, &frames);
                    newly_charged.extend(frames.iter().copied());
                    let observation = Observation {
                        text: response.text.clone(),
                        frames_charged: frames.clone(),
                        tool: tool.to_string(),
                        cache_hit: false,
                    };
                    for &frame in &frames {
                        cache.put(frame, tool, observation.clone());
                    }
                    if seen_texts.insert(response.text.clone()) {
                        texts.push(response.text);
                    }
                }
                Err(e) => {
                    // Degrade: the planner sees the failure as text.
                    let text = format!("[tool error] {tool} at frame {anchor}: {e}");
                    if seen_texts.insert(text.clone()) {
                        texts.push(text);
                    }
                }
            }
        }

        Ok(Observation {
            text: texts.join("\n"),
            frames_charged: newly_charged,
            tool: tool.to_string(),
            cache_hit: all_cached,
        })
    }
}

/// Descriptors for the standard toolset: six model-backed tools plus
/// the frame-info helper the agent prompt names.
pub fn standard_descriptors() -> Vec<ToolDescriptor> {
    vec![
        ToolDescriptor {
            name: "video_caption".into(),
            modality: Modality::Video,
            frames_per_call: 4,
            accepts_query: false,
            description: "Generate captions describing actions and objects over a 4-frame window"
                .into(),
        },
        ToolDescriptor {
            name: "video_qa".into(),
            modality: Modality::Video,
            frames_per_call: 4,
            accepts_query: true,
            description: "Answer a question about a 4-frame window of the video".into(),
        },
        ToolDescriptor {
            name: "image_qa".into(),
            modality: Modality::Image,
            frames_per_call: 1,
            accepts_query: true,
            description: "Describe a single frame or answer a question about it".into(),
        },
        ToolDescriptor {
            name: "object_tracking".into(),
            modality: Modality::Image,
            frames_per_call: 1,
            accepts_query: false,
            description: "Detect objects in the given frames (confident detections only)".into(),
        },
        ToolDescriptor {
            name: "text_caption".into(),
            modality: Modality::Image,
            frames_per_call: 1,
            accepts_query: false,
            description: "Read visible text in the given frames, if any is present".into(),
        },
        ToolDescriptor {
            name: "audio_transcription".into(),
            modality: Modality::Audio,
            frames_per_call: 0,
            accepts_query: true,
            description: "Transcribe the audio track (frame indices select the time range)".into(),
        },
        ToolDescriptor {
            name: "get_frame_info".into(),
            modality: Modality::Meta,
            frames_per_call: 1,
            accepts_query: false,
            description: "Get general information about single frames".into(),
        },
    ]
}

/// Registry with the standard toolset all backed by one adapter.
pub fn standard_registry(
    adapter: Arc<dyn ToolAdapter>,
    window_stride: u32,
) -> Result<ToolRegistry, ToolboxError> {
    let mut registry = ToolRegistry::new().with_window_stride(window_stride);
    for descriptor in standard_descriptors() {
        registry.register(descriptor, adapter.clone())?;
    }
    Ok(registry)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct EchoAdapter;

    impl ToolAdapter for EchoAdapter {
        fn call(&self, request: &AdapterRequest) -> Result<AdapterResponse, AdapterError> {
            Ok(AdapterResponse::text(format!(
                "{} on {:?}",
                request.tool.name, request.frames
            )))
        }
    }

    struct FailingAdapter;

    impl ToolAdapter for FailingAdapter {
        fn call(&self, _request: &AdapterRequest) -> Result<AdapterResponse, AdapterError> {
            Err(AdapterError("backend offline".into()))
        }
    }

    fn input(frames: Vec<u32>) -> ActionInput {
        ActionInput {
            frame_indices: frames,
            query: None,
            raw: String::new(),
        }
    }

    fn meta() -> VideoMeta {
        VideoMeta::new(180.0, 30.0)
    }

    #[test]
    fn standard_toolset_lists_seven_names() {
        let registry = standard_registry(Arc::new(EchoAdapter), 1).unwrap();
        assert_eq!(registry.len(), 7);
        let names = registry.tool_names_text();
        for name in [
            "video_caption",
            "video_qa",
            "image_qa",
            "object_tracking",
            "text_caption",
            "audio_transcription",
            "get_frame_info",
        ] {
            assert!(names.contains(name), "missing {name}");
        }
    }

    #[test]
    fn duplicate_registration_rejected() {
        let mut registry = standard_registry(Arc::new(EchoAdapter), 1).unwrap();
        let err = registry
            .register(standard_descriptors().remove(0), Arc::new(EchoAdapter))
            .unwrap_err();
        assert!(matches!(err, ToolboxError::DuplicateTool(_)));
    }

    #[test]
    fn empty_registry_renders_empty_tool_section() {
        let registry = ToolRegistry::new();
        assert_eq!(registry.tool_list_text(), "");
        assert_eq!(registry.tool_names_text(), "");
    }

    #[test]
    fn window_tool_charges_four_frames() {
        let registry = standard_registry(Arc::new(EchoAdapter), 1).unwrap();
        let mut ledger = FrameLedger::default();
        let mut cache = ShortTermCache::default();
        let obs = registry
            .invoke(
                "video_caption",
                &input(vec![100]),
                &meta(),
                &mut ledger,
                &mut cache,
            )
            .unwrap();
        assert_eq!(obs.frames_charged, vec![100, 101, 102, 103]);
        assert_eq!(ledger.total_charges, 4);
        assert_eq!(ledger.distinct_count(), 4);
        assert!(!obs.cache_hit);
    }

    #[test]
    fn window_clamped_at_video_end() {
        let registry = standard_registry(Arc::new(EchoAdapter), 1).unwrap();
        let mut ledger = FrameLedger::default();
        let mut cache = ShortTermCache::default();
        let obs = registry
            .invoke(
                "video_caption",
                &input(vec![5398]),
                &meta(),
                &mut ledger,
                &mut cache,
            )
            .unwrap();
        assert_eq!(obs.frames_charged, vec![5398, 5399]);
        assert_eq!(ledger.total_charges, 2);
    }

    #[test]
    fn cached_anchor_is_free() {
        let registry = standard_registry(Arc::new(EchoAdapter), 1).unwrap();
        let mut ledger = FrameLedger::default();
        let mut cache = ShortTermCache::default();
        registry
            .invoke(
                "get_frame_info",
                &input(vec![7]),
                &meta(),
                &mut ledger,
                &mut cache,
            )
            .unwrap();
        let again = registry
            .invoke(
                "get_frame_info",
                &input(vec![7]),
                &meta(),
                &mut ledger,
                &mut cache,
            )
            .unwrap();
        assert!(again.cache_hit);
        assert!(again.frames_charged.is_empty());
        assert_eq!(ledger.total_charges, 1);
        assert_eq!(ledger.distinct_count(), 1);
    }

    #[test]
    fn window_overlap_hits_cache_per_frame() {
        let registry = standard_registry(Arc::new(EchoAdapter), 1).unwrap();
        let mut ledger = FrameLedger::default();
        let mut cache = ShortTermCache::default();
        registry
            .invoke(
                "video_caption",
                &input(vec![100]),
                &meta(),
                &mut ledger,
                &mut cache,
            )
            .unwrap();
        // 102 lies inside the already-charged window: free.
        let obs = registry
            .invoke(
                "video_caption",
                &input(vec![102]),
                &meta(),
                &mut ledger,
                &mut cache,
            )
            .unwrap();
        assert!(obs.cache_hit);
        assert_eq!(ledger.total_charges, 4);
    }

    #[test]
    fn cache_is_tool_keyed() {
        let registry = standard_registry(Arc::new(EchoAdapter), 1).unwrap();
        let mut ledger = FrameLedger::default();
        let mut cache = ShortTermCache::default();
        registry
            .invoke(
                "get_frame_info",
                &input(vec![7]),
                &meta(),
                &mut ledger,
                &mut cache,
            )
            .unwrap();
        let other_tool = registry
            .invoke(
                "object_tracking",
                &input(vec![7]),
                &meta(),
                &mut ledger,
                &mut cache,
            )
            .unwrap();
        assert!(!other_tool.cache_hit);
        assert_eq!(ledger.total_charges, 2);
        assert_eq!(ledger.distinct_count(), 1);
    }

    #[test]
    fn audio_charges_nothing() {
        let registry = standard_registry(Arc::new(EchoAdapter), 1).unwrap();
        let mut ledger = FrameLedger::default();
        let mut cache = ShortTermCache::default();
        let obs = registry
            .invoke(
                "audio_transcription",
                &input(vec![0, 300]),
                &meta(),
                &mut ledger,
                &mut cache,
            )
            .unwrap();
        assert!(obs.frames_charged.is_empty());
        assert_eq!(ledger.total_charges, 0);
    }

    #[test]
    fn unknown_tool_is_an_error() {
        let registry = standard_registry(Arc::new(EchoAdapter), 1).unwrap();
        let mut ledger = FrameLedger::default();
        let mut cache = ShortTermCache::default();
        let err = registry
            .invoke(
                "warp_drive",
                &input(vec![0]),
                &meta(),
                &mut ledger,
                &mut cache,
            )
            .unwrap_err();
        assert!(matches!(err, ToolboxError::UnknownTool(_)));
    }

    #[test]
    fn adapter_failure_degrades_to_text() {
        let registry = standard_registry(Arc::new(FailingAdapter), 1).unwrap();
        let mut ledger = FrameLedger::default();
        let mut cache = ShortTermCache::default();
        let obs = registry
            .invoke(
                "video_caption",
                &input(vec![10]),
                &meta(),
                &mut ledger,
                &mut cache,
            )
            .unwrap();
        assert!(obs.text.contains("[tool error]"));
        assert!(obs.text.contains("backend offline"));
        // Failures charge nothing and cache nothing.
        assert_eq!(ledger.total_charges, 0);
        let retry = registry
            .invoke(
                "video_caption",
                &input(vec![10]),
                &meta(),
                &mut ledger,
                &mut cache,
            )
            .unwrap();
        assert!(!retry.cache_hit);
    }

    #[test]
    fn ledger_report_ratios() {
        let meta = meta();
        let mut ledger = FrameLedger::default();
        assert_eq!(ledger_report(&ledger, &meta).ratio, 0.0);

        ledger.charge("t", &(0..14).collect::<Vec<_>>());
        let report = ledger_report(&ledger, &meta);
        assert_eq!(report.frames, 14);
        assert!((report.ratio - 14.0 / 5400.0).abs() < 1e-12);

        let mut full = FrameLedger::default();
        full.charge("t", &(0..5400).collect::<Vec<_>>());
        assert_eq!(ledger_report(&full, &meta).ratio, 1.0);
    }

    #[test]
    fn ledger_distinct_equals_cache_key_set() {
        // Cache soundness: the distinct ledger holds exactly the frames
        // ever written to the short-term cache.
        let registry = standard_registry(Arc::new(EchoAdapter), 1).unwrap();
        let mut ledger = FrameLedger::default();
        let mut cache = ShortTermCache::default();
        let calls: [(&str, Vec<u32>); 6] = [
            ("video_caption", vec![0]),
            ("video_caption", vec![2, 10]),
            ("get_frame_info", vec![10, 11]),
            ("object_tracking", vec![0]),
            ("audio_transcription", vec![500]),
            ("video_qa", vec![5398]),
        ];
        for (tool, frames) in calls {
            registry
                .invoke(tool, &input(frames), &meta(), &mut ledger, &mut cache)
                .unwrap();
        }
        assert_eq!(ledger.distinct_frames, cache.distinct_frames());
    }

    #[test]
    fn out_of_range_anchor_clamped() {
        let registry = standard_registry(Arc::new(EchoAdapter), 1).unwrap();
        let mut ledger = FrameLedger::default();
        let mut cache = ShortTermCache::default();
        let obs = registry
            .invoke(
                "get_frame_info",
                &input(vec![99999]),
                &meta(),
                &mut ledger,
                &mut cache,
            )
            .unwrap();
        assert_eq!(obs.frames_charged, vec![5399]);
    }
}
