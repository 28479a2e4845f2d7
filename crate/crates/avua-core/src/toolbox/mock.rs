//! Synthetic annotated-video fixture and the adapter that serves it.
//!
//! A `SyntheticVideoSpec` is a JSON document standing in for a real
//! video: per-frame captions, detected objects with confidences, OCR
//! text, optional planted answer windows, and audio segments. The
//! adapter answers every standard tool from these annotations, fully
//! deterministically.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AdapterError, AdapterRequest, AdapterResponse, ToolAdapter};
use crate::policy::VideoMeta;

/// One detection with its confidence in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedObject {
    pub label: String,
    pub confidence: f64,
}

/// Ground-truth annotations planted at a single frame.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameAnnotation {
    #[serde(default)]
    pub caption: String,
    #[serde(default)]
    pub objects: Vec<DetectedObject>,
    #[serde(default)]
    pub ocr_text: String,
    #[serde(default)]
    pub answer_window: Option<[u32; 2]>,
}

/// A transcribed stretch of the audio track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioSegment {
    pub start_sec: f64,
    pub end_sec: f64,
    pub transcript: String,
}

/// The whole synthetic video: metadata plus sparse annotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticVideoSpec {
    pub meta: VideoMeta,
    #[serde(default)]
    pub frames: BTreeMap<u32, FrameAnnotation>,
    #[serde(default)]
    pub audio_segments: Vec<AudioSegment>,
}

#[derive(Debug, Error)]
pub enum VideoSpecError {
    #[error("failed reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed video spec {path}: {detail}")]
    Malformed { path: PathBuf, detail: String },
    #[error("annotated frame {0} out of range (total {1})")]
    FrameOutOfRange(u32, u32),
    #[error("answer window [{0}, {1}] out of range (total {2})")]
    WindowOutOfRange(u32, u32, u32),
    #[error("invalid metadata: {0}")]
    Meta(#[from] crate::policy::VideoMetaError),
}

impl SyntheticVideoSpec {
    pub fn from_path(path: &Path) -> Result<Self, VideoSpecError> {
        let text = std::fs::read_to_string(path).map_err(|e| VideoSpecError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let spec: SyntheticVideoSpec =
            serde_json::from_str(&text).map_err(|e| VideoSpecError::Malformed {
                path: path.to_path_buf(),
                detail: e.to_string(),
            })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), VideoSpecError> {
        self.meta.validate()?;
        for (&frame, annotation) in &self.frames {
            if frame >= self.meta.total_frames {
                return Err(VideoSpecError::FrameOutOfRange(
                    frame,
                    self.meta.total_frames,
                ));
            }
            if let Some([start, end]) = annotation.answer_window {
                if start > end || end >= self.meta.total_frames {
                    return Err(VideoSpecError::WindowOutOfRange(
                        start,
                        end,
                        self.meta.total_frames,
                    ));
                }
            }
        }
        Ok(())
    }

    fn caption_at(&self, frame: u32) -> String {
        match self.frames.get(&frame) {
            Some(annotation) if !annotation.caption.is_empty() => annotation.caption.clone(),
            _ => format!("no notable activity at frame {frame}"),
        }
    }

    fn answer_window_at(&self, frame: u32) -> Option<[u32; 2]> {
        self.frames.get(&frame).and_then(|a| a.answer_window)
    }
}

/// Serves every standard tool from a [`SyntheticVideoSpec`].
pub struct SyntheticToolAdapter {
    spec: Arc<SyntheticVideoSpec>,
    detection_threshold: f64,
}

impl SyntheticToolAdapter {
    pub fn new(spec: Arc<SyntheticVideoSpec>) -> Self {
        SyntheticToolAdapter {
            spec,
            // Only detections above this confidence are reported.
            detection_threshold: 0.6,
        }
    }

    pub fn with_detection_threshold(mut self, threshold: f64) -> Self {
        self.detection_threshold = threshold;
        self
    }

    pub fn spec(&self) -> &SyntheticVideoSpec {
        &self.spec
    }

    fn caption_lines(&self, frames: &[u32]) -> Vec<String> {
        frames
            .iter()
            .map(|&f| format!("Frame {f}: {}", self.spec.caption_at(f)))
            .collect()
    }

    fn video_caption(&self, frames: &[u32]) -> String {
        self.caption_lines(frames).join("\n")
    }

    fn video_qa(&self, frames: &[u32], query: Option<&str>) -> String {
        let mut lines = self.caption_lines(frames);
        if let Some(query) = query {
            let window = frames.iter().find_map(|&f| self.spec.answer_window_at(f));
            let answer = match window {
                Some([start, end]) => format!(
                    "the activity relevant to this question appears around frames [{start}, {end}]"
                ),
                None => "see the frame descriptions above".to_string(),
            };
            lines.push(format!("In response to '{query}': {answer}"));
        }
        lines.join("\n")
    }

    fn image_qa(&self, frames: &[u32], query: Option<&str>) -> String {
        let mut lines: Vec<String> = frames
            .iter()
            .map(|&f| format!("Frame {f} shows: {}", self.spec.caption_at(f)))
            .collect();
        if let Some(query) = query {
            lines.push(format!("Regarding '{query}': see the description above"));
        }
        lines.join("\n")
    }

    fn object_tracking(&self, frames: &[u32]) -> String {
        frames
            .iter()
            .map(|&f| {
                let detections: Vec<String> = self
                    .spec
                    .frames
                    .get(&f)
                    .map(|a| {
                        a.objects
                            .iter()
                            .filter(|o| o.confidence > self.detection_threshold)
                            .map(|o| format!("{} ({:.2})", o.label, o.confidence))
                            .collect()
                    })
                    .unwrap_or_default();
                if detections.is_empty() {
                    format!(
                        "Frame {f}: no objects detected above confidence {:.2}",
                        self.detection_threshold
                    )
                } else {
                    format!("Frame {f}: {}", detections.join(", "))
                }
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn text_caption(&self, frames: &[u32]) -> String {
        frames
            .iter()
            .map(|&f| {
                match self.spec.frames.get(&f) {
                    Some(a) if !a.ocr_text.is_empty() => {
                        format!("Frame {f} text: {:?}", a.ocr_text)
                    }
                    // Text is reported only when present in the frame.
                    _ => format!("Frame {f}: no text detected"),
                }
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn audio_transcription(&self, frames: &[u32]) -> String {
        let segments: Vec<&AudioSegment> = if frames.is_empty() {
            self.spec.audio_segments.iter().collect()
        } else {
            let fps = self.spec.meta.frame_rate.max(f64::MIN_POSITIVE);
            let lo = *frames.iter().min().expect("non-empty") as f64 / fps;
            let hi = *frames.iter().max().expect("non-empty") as f64 / fps;
            self.spec
                .audio_segments
                .iter()
                .filter(|s| s.end_sec >= lo && s.start_sec <= hi)
                .collect()
        };
        if segments.is_empty() {
            "no audio segments in the requested range".to_string()
        } else {
            segments
                .iter()
                .map(|s| format!("[{}-{}s] {}", s.start_sec, s.end_sec, s.transcript))
                .collect::<Vec<_>>()
                .join("\n")
        }
    }

    fn get_frame_info(&self, frames: &[u32]) -> String {
        frames
            .iter()
            .map(|&f| {
                let scene = self
                    .spec
                    .meta
                    .scene_change_frames
                    .as_ref()
                    .map(|s| s.contains(&f))
                    .unwrap_or(false);
                let marker = if scene { " (scene change)" } else { "" };
                format!("Frame {f}{marker}: {}", self.spec.caption_at(f))
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

impl ToolAdapter for SyntheticToolAdapter {
    fn call(&self, request: &AdapterRequest) -> Result<AdapterResponse, AdapterError> {
        let frames = request.frames;
        let text = match request.tool.name.as_str() {
            "video_caption" => self.video_caption(frames),
            "video_qa" => self.video_qa(frames, request.query),
            "image_qa" => self.image_qa(frames, request.query),
            "object_tracking" => self.object_tracking(frames),
            "text_caption" => self.text_caption(frames),
            "audio_transcription" => self.audio_transcription(frames),
            "get_frame_info" => self.get_frame_info(frames),
            other => return Err(AdapterError(format!("unsupported tool {other:?}"))),
        };
        Ok(AdapterResponse::text(text))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toolbox::ToolDescriptor;

    fn spec() -> SyntheticVideoSpec {
        let mut frames = BTreeMap::new();
        frames.insert(
            100,
            FrameAnnotation {
                caption: "a hand reaches for the counter".into(),
                objects: vec![
                    DetectedObject {
                        label: "cup".into(),
                        confidence: 0.95,
                    },
                    DetectedObject {
                        label: "fork".into(),
                        confidence: 0.41,
                    },
                ],
                ocr_text: String::new(),
                answer_window: None,
            },
        );
        frames.insert(
            200,
            FrameAnnotation {
                caption: "a recipe card on the table".into(),
                objects: vec![],
                ocr_text: "RECIPE: pancakes".into(),
                answer_window: Some([180, 240]),
            },
        );
        SyntheticVideoSpec {
            meta: VideoMeta::new(180.0, 30.0).with_scene_changes(vec![0, 1800]),
            frames,
            audio_segments: vec![AudioSegment {
                start_sec: 0.0,
                end_sec: 10.0,
                transcript: "let's make breakfast".into(),
            }],
        }
    }

    fn descriptor(name: &str) -> ToolDescriptor {
        crate::toolbox::standard_descriptors()
            .into_iter()
            .find(|d| d.name == name)
            .unwrap()
    }

    fn call(
        adapter: &SyntheticToolAdapter,
        tool: &str,
        frames: &[u32],
        query: Option<&str>,
    ) -> String {
        let descriptor = descriptor(tool);
        adapter
            .call(&AdapterRequest {
                tool: &descriptor,
                frames,
                query,
            })
            .unwrap()
            .text
    }

    #[test]
    fn detection_threshold_filters_low_confidence() {
        let adapter = SyntheticToolAdapter::new(Arc::new(spec()));
        let text = call(&adapter, "object_tracking", &[100], None);
        assert!(text.contains("cup"));
        assert!(!text.contains("fork"));
    }

    #[test]
    fn raising_threshold_never_adds_objects() {
        let base = SyntheticToolAdapter::new(Arc::new(spec()));
        let strict = SyntheticToolAdapter::new(Arc::new(spec())).with_detection_threshold(0.97);
        let loose_text = call(&base, "object_tracking", &[100], None);
        let strict_text = call(&strict, "object_tracking", &[100], None);
        assert!(loose_text.contains("cup"));
        assert!(!strict_text.contains("cup"));
    }

    #[test]
    fn ocr_reports_only_present_text() {
        let adapter = SyntheticToolAdapter::new(Arc::new(spec()));
        assert!(call(&adapter, "text_caption", &[200], None).contains("RECIPE: pancakes"));
        assert!(call(&adapter, "text_caption", &[100], None).contains("no text detected"));
    }

    #[test]
    fn audio_by_frame_range() {
        let adapter = SyntheticToolAdapter::new(Arc::new(spec()));
        assert!(
            call(&adapter, "audio_transcription", &[0, 150], None).contains("let's make breakfast")
        );
        assert!(call(&adapter, "audio_transcription", &[3000], None).contains("no audio segments"));
    }

    #[test]
    fn video_qa_surfaces_planted_window() {
        let adapter = SyntheticToolAdapter::new(Arc::new(spec()));
        let text = call(
            &adapter,
            "video_qa",
            &[200],
            Some("when is the recipe shown?"),
        );
        assert!(text.contains("[180, 240]"));
    }

    #[test]
    fn scene_change_marker_in_frame_info() {
        let adapter = SyntheticToolAdapter::new(Arc::new(spec()));
        assert!(call(&adapter, "get_frame_info", &[1800], None).contains("(scene change)"));
        assert!(!call(&adapter, "get_frame_info", &[100], None).contains("(scene change)"));
    }

    #[test]
    fn determinism_same_input_same_observation() {
        let adapter = SyntheticToolAdapter::new(Arc::new(spec()));
        let a = call(&adapter, "video_caption", &[100, 101], None);
        let b = call(&adapter, "video_caption", &[100, 101], None);
        assert_eq!(a, b);
    }

    #[test]
    fn spec_validation_catches_bad_annotations() {
        let mut bad = spec();
        bad.frames.insert(9999, FrameAnnotation::default());
        assert!(matches!(
            bad.validate(),
            Err(VideoSpecError::FrameOutOfRange(9999, 5400))
        ));

        let mut bad_window = spec();
        bad_window.frames.get_mut(&200).unwrap().answer_window = Some([100, 9000]);
        assert!(matches!(
            bad_window.validate(),
            Err(VideoSpecError::WindowOutOfRange(..))
        ));
    }

    #[test]
    fn spec_roundtrips_through_json() {
        let original = spec();
        let encoded = serde_json::to_string(&original).unwrap();
        let decoded: SyntheticVideoSpec = serde_json::from_str(&encoded).unwrap();
        assert_eq!(original, decoded);
    }
}
