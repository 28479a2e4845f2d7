//! Run configuration: a JSON file plus command-line overrides.
//!
//! Relative paths inside the file resolve against the file's own
//! directory, so configs can ship next to their fixtures. The digest of
//! the effective configuration (after overrides) is embedded in traces
//! and reports so replays can detect drift.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use avua_core::gateway::{
    CompletionBackend, HashingEmbedder, RecordingBackend, RemoteBackend, ReplayBackend, ScriptMode,
    ScriptedBackend,
};
use avua_core::harness::{RemoteToolboxProvider, SyntheticToolboxProvider, ToolboxProvider};
use avua_core::memory::MemoryStore;
use avua_core::planner::{AblationConfig, Budgets, RunOptions};
use avua_core::prompts::PromptCatalog;

use crate::AppError;

fn default_true() -> bool {
    true
}

fn default_ablation() -> String {
    "ours".to_string()
}

fn default_stride() -> u32 {
    1
}

fn default_threshold() -> f64 {
    0.6
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GatewayConfig {
    /// One of "scripted", "remote", "replay".
    pub kind: String,
    #[serde(default)]
    pub script: Option<String>,
    #[serde(default)]
    pub url: Option<String>,
    #[serde(default)]
    pub session: Option<String>,
    /// Record live responses to this session file (remote kind only).
    #[serde(default)]
    pub record_to: Option<String>,
    #[serde(default = "default_true")]
    pub strict: bool,
    #[serde(default)]
    pub fallback: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToolboxConfig {
    /// One of "synthetic", "remote".
    pub kind: String,
    #[serde(default)]
    pub videos_dir: Option<String>,
    #[serde(default)]
    pub url: Option<String>,
    #[serde(default = "default_stride")]
    pub window_stride: u32,
    #[serde(default = "default_threshold")]
    pub detection_threshold: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BudgetsConfig {
    pub max_steps: u32,
    pub max_trials: u32,
    pub sampler_cap: usize,
}

impl Default for BudgetsConfig {
    fn default() -> Self {
        let defaults = Budgets::default();
        BudgetsConfig {
            max_steps: defaults.max_steps,
            max_trials: defaults.max_trials,
            sampler_cap: defaults.sampler_cap,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub k: usize,
    pub min_similarity: f64,
    pub only_successful: bool,
    pub first_trial: bool,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            k: 3,
            min_similarity: 0.5,
            only_successful: false,
            first_trial: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub prompts_dir: Option<String>,
    pub gateway: GatewayConfig,
    pub toolbox: ToolboxConfig,
    #[serde(default = "default_ablation")]
    pub ablation: String,
    #[serde(default)]
    pub budgets: BudgetsConfig,
    #[serde(default)]
    pub memory_path: Option<String>,
    #[serde(default)]
    pub retrieval: RetrievalConfig,
    #[serde(default = "default_true")]
    pub inherit_frame_cache: bool,
    #[serde(default)]
    pub eval_confidence_gate: Option<u8>,
    /// Refuse remote backends so runs stay reproducible.
    #[serde(default)]
    pub require_determinism: bool,
}

/// Command-line overrides; flags win over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub ablation: Option<String>,
    pub max_steps: Option<u32>,
    pub max_trials: Option<u32>,
    pub memory_path: Option<String>,
    pub eval_confidence_gate: Option<u8>,
    pub only_successful: bool,
    pub prompts_dir: Option<String>,
}

/// A loaded config plus the directory its relative paths resolve in.
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, AppError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AppError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| AppError::Config(format!("malformed config {}: {e}", path.display())))?;

        if let Some(ablation) = &overrides.ablation {
            config.ablation = ablation.clone();
        }
        if let Some(max_steps) = overrides.max_steps {
            config.budgets.max_steps = max_steps;
        }
        if let Some(max_trials) = overrides.max_trials {
            config.budgets.max_trials = max_trials;
        }
        if let Some(memory_path) = &overrides.memory_path {
            config.memory_path = Some(memory_path.clone());
        }
        if let Some(gate) = overrides.eval_confidence_gate {
            config.eval_confidence_gate = Some(gate);
        }
        if overrides.only_successful {
            config.retrieval.only_successful = true;
        }
        if let Some(prompts_dir) = &overrides.prompts_dir {
            config.prompts_dir = Some(prompts_dir.clone());
        }

        let base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(LoadedConfig { config, base_dir })
    }

    /// Resolve a config-relative path.
    pub fn resolve(&self, value: &str) -> PathBuf {
        let path = Path::new(value);
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    /// Digest of the effective configuration. Output locations and job
    /// counts are not part of it: they do not change behavior.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(&self.config).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn ablation(&self) -> Result<AblationConfig, AppError> {
        AblationConfig::from_row_name(&self.config.ablation).ok_or_else(|| {
            AppError::Config(format!(
                "unknown ablation row {:?} (expected ours, w/o-memory, w/o-evaluator, w/o-sampler, w/o-refiner, react)",
                self.config.ablation
            ))
        })
    }

    pub fn budgets(&self) -> Budgets {
        Budgets {
            max_steps: self.config.budgets.max_steps,
            max_trials: self.config.budgets.max_trials,
            sampler_cap: self.config.budgets.sampler_cap,
        }
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            retrieval_first_trial: self.config.retrieval.first_trial,
            inherit_frame_cache: self.config.inherit_frame_cache,
            eval_confidence_gate: self.config.eval_confidence_gate,
            retrieval_k: self.config.retrieval.k,
        }
    }

    pub fn catalog(&self) -> Result<PromptCatalog, AppError> {
        match &self.config.prompts_dir {
            Some(dir) => PromptCatalog::from_dir(&self.resolve(dir))
                .map_err(|e| AppError::Config(e.to_string())),
            None => Ok(PromptCatalog::builtin()),
        }
    }

    pub fn backend(&self) -> Result<Arc<dyn CompletionBackend>, AppError> {
        let gateway = &self.config.gateway;
        if self.config.require_determinism && gateway.kind == "remote" {
            return Err(AppError::Config(
                "require_determinism is set but the gateway is remote".into(),
            ));
        }
        match gateway.kind.as_str() {
            "scripted" => {
                let script = gateway.script.as_ref().ok_or_else(|| {
                    AppError::Config("scripted gateway requires a script path".into())
                })?;
                let path = self.resolve(script);
                if !path.exists() {
                    return Err(AppError::Config(format!(
                        "script file not found: {}",
                        path.display()
                    )));
                }
                let mode = if gateway.strict {
                    ScriptMode::Strict
                } else {
                    ScriptMode::Lenient {
                        fallback: gateway
                            .fallback
                            .clone()
                            .unwrap_or_else(|| "Final Answer: (no scripted response)".into()),
                    }
                };
                let backend = ScriptedBackend::from_path(&path, mode)
                    .map_err(|e| AppError::Config(e.to_string()))?;
                Ok(Arc::new(backend))
            }
            "remote" => {
                let url = gateway
                    .url
                    .as_ref()
                    .ok_or_else(|| AppError::Config("remote gateway requires a url".into()))?;
                let live: Arc<dyn CompletionBackend> = Arc::new(RemoteBackend::new(url.clone()));
                match &gateway.record_to {
                    Some(session) => {
                        let backend = RecordingBackend::create(live, &self.resolve(session))
                            .map_err(|e| AppError::Config(e.to_string()))?;
                        Ok(Arc::new(backend))
                    }
                    None => Ok(live),
                }
            }
            "replay" => {
                let session = gateway.session.as_ref().ok_or_else(|| {
                    AppError::Config("replay gateway requires a session path".into())
                })?;
                let path = self.resolve(session);
                if !path.exists() {
                    return Err(AppError::Config(format!(
                        "replay session not found: {}",
                        path.display()
                    )));
                }
                let backend =
                    ReplayBackend::open(&path).map_err(|e| AppError::Config(e.to_string()))?;
                Ok(Arc::new(backend))
            }
            other => Err(AppError::Config(format!(
                "unknown gateway kind {other:?} (expected scripted, remote, replay)"
            ))),
        }
    }

    pub fn toolbox_provider(&self) -> Result<Box<dyn ToolboxProvider>, AppError> {
        let toolbox = &self.config.toolbox;
        if self.config.require_determinism && toolbox.kind == "remote" {
            return Err(AppError::Config(
                "require_determinism is set but the toolbox is remote".into(),
            ));
        }
        match toolbox.kind.as_str() {
            "synthetic" => {
                let dir = toolbox.videos_dir.as_ref().ok_or_else(|| {
                    AppError::Config("synthetic toolbox requires a videos_dir".into())
                })?;
                let dir = self.resolve(dir);
                if !dir.exists() {
                    return Err(AppError::Config(format!(
                        "videos_dir not found: {}",
                        dir.display()
                    )));
                }
                Ok(Box::new(
                    SyntheticToolboxProvider::new(dir)
                        .with_window_stride(toolbox.window_stride)
                        .with_detection_threshold(toolbox.detection_threshold),
                ))
            }
            "remote" => {
                let url = toolbox
                    .url
                    .as_ref()
                    .ok_or_else(|| AppError::Config("remote toolbox requires a url".into()))?;
                Ok(Box::new(
                    RemoteToolboxProvider::new(url.clone())
                        .with_window_stride(toolbox.window_stride),
                ))
            }
            other => Err(AppError::Config(format!(
                "unknown toolbox kind {other:?} (expected synthetic, remote)"
            ))),
        }
    }

    /// Open the configured long-term memory store, if any.
    pub fn memory(&self) -> Result<Option<MemoryStore>, AppError> {
        match &self.config.memory_path {
            Some(path) => Ok(Some(self.open_memory_at(&self.resolve(path), false)?)),
            None => Ok(None),
        }
    }

    /// Open a memory store at an explicit path, optionally truncating
    /// it first (bench rows start from an empty store by default).
    pub fn open_memory_at(&self, path: &Path, truncate: bool) -> Result<MemoryStore, AppError> {
        if truncate && path.exists() {
            std::fs::remove_file(path)
                .map_err(|e| AppError::Runtime(format!("cannot reset {}: {e}", path.display())))?;
        }
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| {
                AppError::Runtime(format!("cannot create {}: {e}", parent.display()))
            })?;
        }
        let store = MemoryStore::open(path, Arc::new(HashingEmbedder::default()))
            .map_err(|e| AppError::Runtime(e.to_string()))?
            .with_min_similarity(self.config.retrieval.min_similarity)
            .with_only_successful(self.config.retrieval.only_successful);
        Ok(store)
    }
}
