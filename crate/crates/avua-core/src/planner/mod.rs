//! The planner: a Thought/Action/Action Input/Observation loop run
//! under a policy, wrapped in the multi-trial episode flow.
//!
//! One trial renders the agent prompt (video details, tool list, policy,
//! trajectory so far), parses each completion into either a step header
//! or a final answer, optionally lets the sampler revise frame indices,
//! dispatches tools, and stops on a final answer or budget exhaustion.
//! An episode strings trials together: generate policy (with memory
//! retrieval), run the trial, evaluate, refine, and retry while the
//! evaluator says the answer is wrong and a refiner is available to
//! steer the next attempt. Finished episodes are stored to long-term
//! memory.

mod parse;

pub use parse::{parse_action_input, parse_step, ActionInputParse, ParsedStep, StepParseError};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{CompletionBackend, GatewayError, LlmSession, PromptBundle, Transcript};
use crate::memory::{DigestStep, MemoryError, MemoryRecord, MemoryStore, ShortTermCache};
use crate::policy::{
    generate_policy, trim_float, Policy, PolicyError, Question, QuestionError, VideoMeta,
    VideoMetaError,
};
use crate::prompts::PromptCatalog;
use crate::reflection::{evaluate, refine, Evaluation, Refinement};
use crate::sampler;
use crate::toolbox::{FrameLedger, Observation, ToolRegistry};
use crate::trace::{TraceKind, TraceRecord};

/// Parsed tool input: which frames, an optional query, and the model's
/// literal text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionInput {
    pub frame_indices: Vec<u32>,
    #[serde(default)]
    pub query: Option<String>,
    pub raw: String,
}

/// One dispatched step of a trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub index: u32,
    pub thought: String,
    pub action: String,
    pub action_input: ActionInput,
    pub observation: Observation,
}

/// Why a trial stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    FinalAnswer,
    StepBudget,
    ParseAbort,
    ToolFatal,
}

/// The ordered record of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub final_answer: Option<String>,
    pub terminated_by: Termination,
}

impl Trajectory {
    /// The running Thought/Action/Action Input/Observation text, as
    /// replayed into every subsequent agent prompt.
    pub fn rendered_text(&self) -> String {
        let mut out = String::new();
        for step in &self.steps {
            out.push_str(&format!(
                "Thought: {}\nAction: {}\nAction Input: {}\nObservation: {}\n",
                step.thought, step.action, step.action_input.raw, step.observation.text
            ));
        }
        out
    }

    /// Observations of the most recent `n` steps, for the sampler.
    pub fn recent_observations_text(&self, n: usize) -> String {
        let start = self.steps.len().saturating_sub(n);
        self.steps[start..]
            .iter()
            .map(|s| format!("Observation (step {}): {}", s.index, s.observation.text))
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Condensed step list persisted in memory records.
    pub fn digest_steps(&self) -> Vec<DigestStep> {
        self.steps
            .iter()
            .map(|s| DigestStep::new(&s.action, &s.action_input.raw, &s.observation.text))
            .collect()
    }
}

/// Which components of the full agent are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub use_memory: bool,
    pub use_evaluator: bool,
    pub use_sampler: bool,
    pub use_refiner: bool,
    pub react_only: bool,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self::full()
    }
}

impl AblationConfig {
    pub fn full() -> Self {
        AblationConfig {
            use_memory: true,
            use_evaluator: true,
            use_sampler: true,
            use_refiner: true,
            react_only: false,
        }
    }

    /// Bare planning loop with every intervention off.
    pub fn react_only() -> Self {
        AblationConfig {
            use_memory: false,
            use_evaluator: false,
            use_sampler: false,
            use_refiner: false,
            react_only: true,
        }
    }

    /// `react_only` forces the four component switches off.
    pub fn normalized(mut self) -> Self {
        if self.react_only {
            self.use_memory = false;
            self.use_evaluator = false;
            self.use_sampler = false;
            self.use_refiner = false;
        }
        self
    }

    pub fn without_memory() -> Self {
        AblationConfig {
            use_memory: false,
            ..Self::full()
        }
    }

    pub fn without_evaluator() -> Self {
        AblationConfig {
            use_evaluator: false,
            ..Self::full()
        }
    }

    pub fn without_sampler() -> Self {
        AblationConfig {
            use_sampler: false,
            ..Self::full()
        }
    }

    pub fn without_refiner() -> Self {
        AblationConfig {
            use_refiner: false,
            ..Self::full()
        }
    }

    /// The benchmark rows: the full agent, four single-component
    /// ablations, and the bare loop.
    pub fn matrix() -> [(&'static str, AblationConfig); 6] {
        [
            ("ours", Self::full()),
            ("w_o-memory", Self::without_memory()),
            ("w_o-evaluator", Self::without_evaluator()),
            ("w_o-sampler", Self::without_sampler()),
            ("w_o-refiner", Self::without_refiner()),
            ("react", Self::react_only()),
        ]
    }

    pub fn row_name(&self) -> &'static str {
        let normalized = self.normalized();
        for (name, cfg) in Self::matrix() {
            if cfg == normalized {
                return name;
            }
        }
        "custom"
    }

    pub fn from_row_name(name: &str) -> Option<Self> {
        let key = name.trim().to_lowercase().replace(['/', '_'], "-");
        match key.as_str() {
            "ours" | "full" => Some(Self::full()),
            "wo-memory" | "w-o-memory" | "no-memory" => Some(Self::without_memory()),
            "wo-evaluator" | "w-o-evaluator" | "no-evaluator" => Some(Self::without_evaluator()),
            "wo-sampler" | "w-o-sampler" | "no-sampler" => Some(Self::without_sampler()),
            "wo-refiner" | "w-o-refiner" | "no-refiner" => Some(Self::without_refiner()),
            "react" | "react-only" => Some(Self::react_only()),
            _ => None,
        }
    }
}

/// One trial's artifacts within an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub policy: Option<Policy>,
    pub trajectory: Trajectory,
    pub evaluation: Option<Evaluation>,
    pub refinement: Option<Refinement>,
}

/// Everything one episode produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub trials: Vec<TrialRecord>,
    pub answer: String,
    /// Total frame charges (cached re-reads are free).
    pub frames_accessed: u64,
    /// Distinct frame indices charged; what benchmarks report.
    pub distinct_frames_accessed: u64,
    pub ledger: FrameLedger,
    pub trace: Vec<TraceRecord>,
    pub transcript: Transcript,
    pub memory_stored: bool,
    #[serde(default)]
    pub transcript_ref: Option<String>,
}

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error("every trial aborted on unparseable output with no final answer")]
    Abort,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Question(#[from] QuestionError),
    #[error(transparent)]
    Meta(#[from] VideoMetaError),
}

/// Step and trial limits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budgets {
    pub max_steps: u32,
    pub max_trials: u32,
    pub sampler_cap: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            max_steps: 15,
            max_trials: 2,
            sampler_cap: sampler::DEFAULT_SUGGESTION_CAP,
        }
    }
}

/// Episode behavior knobs beyond the ablation switches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    /// Retrieve past experiences already on the first trial (not only
    /// on retrials).
    pub retrieval_first_trial: bool,
    /// Carry the frame-observation cache across trials of one episode.
    pub inherit_frame_cache: bool,
    /// When set, a trial only counts as passed if the evaluator says
    /// true with at least this confidence.
    pub eval_confidence_gate: Option<u8>,
    pub retrieval_k: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            retrieval_first_trial: true,
            inherit_frame_cache: true,
            eval_confidence_gate: None,
            retrieval_k: 3,
        }
    }
}

const STEP_FORMAT_REMINDER: &str = "Format reminder: reply with 'Thought:', 'Action:' and 'Action Input:' lines, or give the result under 'Final Answer:'.";

/// Runs episodes against a fixed backend, prompt catalog, and toolbox.
pub struct EpisodeRunner<'a> {
    pub backend: &'a dyn CompletionBackend,
    pub catalog: &'a PromptCatalog,
    pub registry: &'a ToolRegistry,
    pub memory: Option<&'a MemoryStore>,
    pub budgets: Budgets,
    pub options: RunOptions,
}

impl<'a> EpisodeRunner<'a> {
    fn agent_system_text(&self, meta: &VideoMeta) -> String {
        self.catalog
            .render(
                "agent",
                &[
                    ("duration_min", format!("{:.2}", meta.duration_minutes())),
                    ("duration_sec", trim_float(meta.duration_sec)),
                    ("frame_rate", trim_float(meta.frame_rate)),
                    ("total_frames", meta.total_frames.to_string()),
                    ("scene_list", meta.scene_list_text()),
                    ("tools", self.registry.tool_list_text()),
                    ("tool_names", self.registry.tool_names_text()),
                ],
            )
            .expect("agent template present")
    }

    fn agent_user_text(
        &self,
        question: &Question,
        policy: Option<&Policy>,
        trajectory: &Trajectory,
        reminder: Option<&str>,
    ) -> String {
        let mut out = question.rendered();
        match question.dataset_kind {
            crate::policy::DatasetKind::TemporalLocalization => {
                out.push_str(
                    "\nAnswer format: give the Final Answer as a frame window [start,end].",
                );
            }
            crate::policy::DatasetKind::OpenEnded => {
                out.push_str("\nAnswer format: give a concise free-text Final Answer.");
            }
            crate::policy::DatasetKind::Mcq => {}
        }
        if let Some(policy) = policy {
            out.push_str("\n\nPolicy:\n");
            out.push_str(&policy.raw_text);
        }
        if !trajectory.steps.is_empty() {
            out.push_str("\n\nProgress so far:\n");
            out.push_str(&trajectory.rendered_text());
        }
        if let Some(reminder) = reminder {
            out.push_str("\n\n");
            out.push_str(reminder);
        }
        out
    }

    /// Run one trial to a final answer, the step budget, or a parse
    /// abort. Infrastructure faults (unreachable backend, missing
    /// script fixture) are the only errors; model misbehavior is
    /// absorbed into the trajectory's termination marker.
    #[allow(clippy::too_many_arguments)]
    fn run_trial(
        &self,
        session: &mut LlmSession,
        question: &Question,
        meta: &VideoMeta,
        policy: Option<&Policy>,
        cfg: &AblationConfig,
        ledger: &mut FrameLedger,
        cache: &mut ShortTermCache,
        trace: &mut Vec<TraceRecord>,
        trial: u32,
    ) -> Result<Trajectory, EpisodeError> {
        let system = self.agent_system_text(meta);
        let mut trajectory = Trajectory {
            steps: Vec::new(),
            final_answer: None,
            terminated_by: Termination::StepBudget,
        };
        let mut reminder: Option<String> = None;
        let mut consecutive_failures = 0u32;

        while (trajectory.steps.len() as u32) < self.budgets.max_steps {
            let user = self.agent_user_text(question, policy, &trajectory, reminder.as_deref());
            let completion = session.complete("agent", &PromptBundle::new(system.clone(), user))?;

            let parsed = match parse_step(&completion) {
                Ok(parsed) => parsed,
                Err(_) => {
                    consecutive_failures += 1;
                    if consecutive_failures >= 2 {
                        trajectory.terminated_by = Termination::ParseAbort;
                        return Ok(trajectory);
                    }
                    reminder = Some(STEP_FORMAT_REMINDER.to_string());
                    continue;
                }
            };

            match parsed {
                ParsedStep::Final(answer) => {
                    trajectory.final_answer = Some(answer);
                    trajectory.terminated_by = Termination::FinalAnswer;
                    return Ok(trajectory);
                }
                ParsedStep::Header {
                    thought,
                    action,
                    raw_input,
                } => {
                    if !self.registry.contains(&action) {
                        consecutive_failures += 1;
                        if consecutive_failures >= 2 {
                            trajectory.terminated_by = Termination::ParseAbort;
                            return Ok(trajectory);
                        }
                        reminder = Some(format!(
                            "Format reminder: 'Action' must be one of [{}].",
                            self.registry.tool_names_text()
                        ));
                        continue;
                    }
                    consecutive_failures = 0;
                    reminder = None;

                    let ActionInputParse { mut input, clamped } =
                        parse_action_input(&raw_input, meta);

                    if cfg.use_sampler && !input.frame_indices.is_empty() {
                        let suggestion = sampler::suggest(
                            session,
                            self.catalog,
                            question,
                            policy,
                            &trajectory,
                            meta,
                            &input,
                            self.budgets.sampler_cap,
                        );
                        trace.push(TraceRecord {
                            kind: TraceKind::Sampler,
                            trial,
                            payload: serde_json::json!({
                                "proposed": input.frame_indices,
                                "suggested": suggestion.indices,
                                "mode": suggestion.mode,
                                "rationale": suggestion.rationale,
                            }),
                            frames_charged: Vec::new(),
                        });
                        input.frame_indices = suggestion.indices;
                    }

                    let mut observation =
                        match self.registry.invoke(&action, &input, meta, ledger, cache) {
                            Ok(observation) => observation,
                            Err(e) => Observation {
                                text: format!("[tool error] {e}"),
                                frames_charged: Vec::new(),
                                tool: action.clone(),
                                cache_hit: false,
                            },
                        };
                    if clamped {
                        observation.text = format!(
                            "[warning: out-of-range frame indices were clamped]\n{}",
                            observation.text
                        );
                    }

                    let step = Step {
                        index: trajectory.steps.len() as u32 + 1,
                        thought,
                        action,
                        action_input: input,
                        observation,
                    };
                    trace.push(TraceRecord {
                        kind: TraceKind::Step,
                        trial,
                        payload: serde_json::json!({
                            "index": step.index,
                            "thought": step.thought,
                            "action": step.action,
                            "action_input": step.action_input,
                            "observation": {
                                "text": step.observation.text,
                                "tool": step.observation.tool,
                                "cache_hit": step.observation.cache_hit,
                            },
                        }),
                        frames_charged: step.observation.frames_charged.clone(),
                    });
                    trajectory.steps.push(step);
                }
            }
        }
        Ok(trajectory)
    }

    /// Run a single trial in isolation: fresh ledger, fresh frame
    /// cache, fresh transcript, no evaluate/refine/memory wrapping.
    pub fn run_single_trial(
        &self,
        question: &Question,
        meta: &VideoMeta,
        policy: Option<&Policy>,
        cfg: &AblationConfig,
    ) -> Result<(Trajectory, FrameLedger, Transcript), EpisodeError> {
        question.validate()?;
        meta.validate()?;
        let cfg = cfg.normalized();
        let mut session = LlmSession::new(self.backend);
        let mut ledger = FrameLedger::default();
        let mut cache = ShortTermCache::new();
        let mut trace = Vec::new();
        let trajectory = self.run_trial(
            &mut session,
            question,
            meta,
            policy,
            &cfg,
            &mut ledger,
            &mut cache,
            &mut trace,
            1,
        )?;
        Ok((trajectory, ledger, session.transcript))
    }

    /// Run the full multi-trial episode for one question.
    pub fn run_episode(
        &self,
        question: &Question,
        meta: &VideoMeta,
        cfg: &AblationConfig,
        transcript_ref: Option<String>,
    ) -> Result<EpisodeResult, EpisodeError> {
        question.validate()?;
        meta.validate()?;
        let cfg = cfg.normalized();

        let mut session = LlmSession::new(self.backend);
        let mut ledger = FrameLedger::default();
        let mut cache = ShortTermCache::new();
        let mut trace: Vec<TraceRecord> = Vec::new();
        let mut trials: Vec<TrialRecord> = Vec::new();
        let mut prior_refinement: Option<Refinement> = None;

        // Without an evaluator there is no retry signal: one trial.
        let max_trials = if cfg.use_evaluator {
            self.budgets.max_trials.max(1)
        } else {
            1
        };

        for trial_no in 1..=max_trials {
            if trial_no > 1 && !self.options.inherit_frame_cache {
                cache.clear();
            }

            let policy = if cfg.react_only {
                None
            } else {
                let experiences: Vec<MemoryRecord> = if cfg.use_memory
                    && (trial_no > 1 || self.options.retrieval_first_trial)
                {
                    match self.memory {
                        Some(store) => {
                            let question_type = trials
                                .last()
                                .and_then(|t| t.policy.as_ref())
                                .map(|p| p.question_type.clone())
                                .unwrap_or_default();
                            store
                                .retrieve(&question_type, &question.text, self.options.retrieval_k)?
                                .into_iter()
                                .map(|(record, _)| record)
                                .collect()
                        }
                        None => Vec::new(),
                    }
                } else {
                    Vec::new()
                };
                Some(generate_policy(
                    &mut session,
                    self.catalog,
                    question,
                    meta,
                    &experiences,
                    prior_refinement.as_ref(),
                )?)
            };
            if let Some(policy) = &policy {
                trace.push(TraceRecord {
                    kind: TraceKind::Policy,
                    trial: trial_no,
                    payload: serde_json::to_value(policy).expect("policy serializes"),
                    frames_charged: Vec::new(),
                });
            }

            let trajectory = self.run_trial(
                &mut session,
                question,
                meta,
                policy.as_ref(),
                &cfg,
                &mut ledger,
                &mut cache,
                &mut trace,
                trial_no,
            )?;

            let evaluation = if cfg.use_evaluator {
                let evaluation = evaluate(
                    &mut session,
                    self.catalog,
                    question,
                    policy.as_ref(),
                    &trajectory,
                )?;
                trace.push(TraceRecord {
                    kind: TraceKind::Evaluation,
                    trial: trial_no,
                    payload: serde_json::to_value(&evaluation).expect("evaluation serializes"),
                    frames_charged: Vec::new(),
                });
                Some(evaluation)
            } else {
                None
            };

            // Produced for every trial: it steers the retry after a
            // failure and is stored alongside successes.
            let refinement = if cfg.use_refiner {
                let refinement = refine(
                    &mut session,
                    self.catalog,
                    question,
                    policy.as_ref(),
                    &trajectory,
                    evaluation.as_ref(),
                )?;
                trace.push(TraceRecord {
                    kind: TraceKind::Refinement,
                    trial: trial_no,
                    payload: serde_json::to_value(&refinement).expect("refinement serializes"),
                    frames_charged: Vec::new(),
                });
                Some(refinement)
            } else {
                None
            };

            let passed = match &evaluation {
                Some(evaluation) => match self.options.eval_confidence_gate {
                    Some(gate) => evaluation.verdict && evaluation.confidence >= gate,
                    None => evaluation.verdict,
                },
                None => true,
            };

            prior_refinement = refinement.clone();
            trials.push(TrialRecord {
                policy,
                trajectory,
                evaluation,
                refinement,
            });

            if passed || !cfg.use_refiner {
                break;
            }
        }

        let answer = trials
            .iter()
            .rev()
            .find_map(|t| t.trajectory.final_answer.clone())
            .unwrap_or_default();
        if answer.is_empty()
            && trials
                .iter()
                .all(|t| t.trajectory.terminated_by == Termination::ParseAbort)
        {
            return Err(EpisodeError::Abort);
        }

        let memory_stored = if cfg.use_memory {
            match self.memory {
                Some(store) => {
                    let last = trials.last().expect("at least one trial");
                    let question_type = last
                        .policy
                        .as_ref()
                        .map(|p| p.question_type.clone())
                        .filter(|t| !t.trim().is_empty())
                        .unwrap_or_else(|| "unclassified".to_string());
                    let record = MemoryRecord {
                        id: String::new(),
                        question_type: question_type.clone(),
                        question_text: question.text.clone(),
                        policy_raw: last
                            .policy
                            .as_ref()
                            .map(|p| p.raw_text.clone())
                            .unwrap_or_default(),
                        trajectory_digest: last.trajectory.digest_steps(),
                        refinement: last.refinement.clone(),
                        verdict: last.evaluation.as_ref().map(|e| e.verdict).unwrap_or(false),
                        confidence: last.evaluation.as_ref().map(|e| e.confidence).unwrap_or(0),
                        embedding: store.embed_key(&question_type, &question.text)?,
                        created_at: 0,
                    };
                    store.put(record)?;
                    true
                }
                None => false,
            }
        } else {
            false
        };

        let frames_accessed = ledger.total_charges;
        let distinct_frames_accessed = ledger.distinct_count();
        let report = crate::toolbox::ledger_report(&ledger, meta);
        trace.push(TraceRecord {
            kind: TraceKind::Final,
            trial: trials.len() as u32,
            payload: serde_json::json!({
                "answer": answer,
                "terminated_by": trials.last().expect("at least one trial").trajectory.terminated_by,
                "frames_accessed": frames_accessed,
                "distinct_frames_accessed": distinct_frames_accessed,
                "ratio": report.ratio,
                "total_frames": meta.total_frames,
                "per_tool": ledger.per_tool,
                "trials": trials.len(),
                "memory_stored": memory_stored,
                "transcript_ref": transcript_ref,
            }),
            frames_charged: Vec::new(),
        });

        Ok(EpisodeResult {
            trials,
            answer,
            frames_accessed,
            distinct_frames_accessed,
            ledger,
            trace,
            transcript: session.transcript,
            memory_stored,
            transcript_ref,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{HashingEmbedder, ScriptEntry, ScriptMode, ScriptedBackend};
    use crate::toolbox::{standard_registry, SyntheticToolAdapter, SyntheticVideoSpec};
    use std::collections::BTreeMap;
    use std::sync::Arc;

    fn video() -> SyntheticVideoSpec {
        SyntheticVideoSpec {
            meta: VideoMeta::new(180.0, 30.0).with_scene_changes(vec![0, 1800, 3600]),
            frames: BTreeMap::new(),
            audio_segments: Vec::new(),
        }
    }

    fn registry() -> ToolRegistry {
        standard_registry(Arc::new(SyntheticToolAdapter::new(Arc::new(video()))), 1).unwrap()
    }

    fn question() -> Question {
        Question::mcq(
            "What is the overarching behavior of C and the man?",
            vec!["a".into(), "b".into(), "c".into(), "d".into()],
        )
        .unwrap()
    }

    fn policy_entry() -> ScriptEntry {
        ScriptEntry::substring(
            "tactics and plans",
            "Question type: key action detection\nSampling: timestep 30",
        )
    }

    fn runner<'a>(
        backend: &'a ScriptedBackend,
        catalog: &'a PromptCatalog,
        registry: &'a ToolRegistry,
    ) -> EpisodeRunner<'a> {
        EpisodeRunner {
            backend,
            catalog,
            registry,
            memory: None,
            budgets: Budgets::default(),
            options: RunOptions::default(),
        }
    }

    #[test]
    fn scripted_two_step_trial_terminates_on_final_answer() {
        let backend = ScriptedBackend::from_entries(
            vec![
                policy_entry(),
                ScriptEntry::substring(
                    "specialized in video question-answering",
                    "Thought: start\nAction: get_frame_info\nAction Input: frame 0",
                )
                .once(),
                ScriptEntry::substring(
                    "specialized in video question-answering",
                    "Thought: end\nAction: get_frame_info\nAction Input: frame 5399",
                )
                .once(),
                ScriptEntry::substring(
                    "specialized in video question-answering",
                    "Final Answer: Option 0",
                ),
                ScriptEntry::substring("evaluates whether", "Evaluation: True, Confidence: 90"),
                ScriptEntry::substring("self refection", "Plan: keep it short"),
            ],
            ScriptMode::Strict,
        )
        .unwrap();
        let catalog = PromptCatalog::builtin();
        let registry = registry();
        let runner = runner(&backend, &catalog, &registry);
        let cfg = AblationConfig {
            use_memory: false,
            use_sampler: false,
            ..AblationConfig::full()
        };
        let result = runner
            .run_episode(&question(), &video().meta, &cfg, None)
            .unwrap();

        assert_eq!(result.trials.len(), 1);
        let trajectory = &result.trials[0].trajectory;
        assert_eq!(trajectory.steps.len(), 2);
        assert_eq!(trajectory.terminated_by, Termination::FinalAnswer);
        assert_eq!(result.answer, "Option 0");
        assert_eq!(result.frames_accessed, 2);
        assert_eq!(result.distinct_frames_accessed, 2);
        // Each step's prompt contains all previous observations.
        let last_agent_prompt = result
            .transcript
            .entries
            .iter()
            .rev()
            .find(|e| e.tag == "agent")
            .unwrap();
        assert!(last_agent_prompt.prompt.contains("Observation: Frame 0"));
    }

    #[test]
    fn single_trial_runs_standalone() {
        let backend = ScriptedBackend::from_entries(
            vec![
                ScriptEntry::substring(
                    "specialized in video question-answering",
                    "Thought: look\nAction: video_caption\nAction Input: frame 100",
                )
                .once(),
                ScriptEntry::substring(
                    "specialized in video question-answering",
                    "Final Answer: Option 3",
                ),
            ],
            ScriptMode::Strict,
        )
        .unwrap();
        let catalog = PromptCatalog::builtin();
        let registry = registry();
        let runner = runner(&backend, &catalog, &registry);
        let (trajectory, ledger, transcript) = runner
            .run_single_trial(
                &question(),
                &video().meta,
                None,
                &AblationConfig::react_only(),
            )
            .unwrap();
        assert_eq!(trajectory.terminated_by, Termination::FinalAnswer);
        assert_eq!(trajectory.final_answer.as_deref(), Some("Option 3"));
        assert_eq!(ledger.total_charges, 4);
        assert_eq!(transcript.count_tag("agent"), 2);
    }

    #[test]
    fn budget_one_yields_one_step_and_step_budget() {
        let backend = ScriptedBackend::from_entries(
            vec![
                policy_entry(),
                ScriptEntry::substring(
                    "specialized in video question-answering",
                    "Thought: look\nAction: get_frame_info\nAction Input: frame 10",
                ),
                ScriptEntry::substring("self refection", "Plan: answer sooner"),
            ],
            ScriptMode::Strict,
        )
        .unwrap();
        let catalog = PromptCatalog::builtin();
        let registry = registry();
        let mut runner = runner(&backend, &catalog, &registry);
        runner.budgets.max_steps = 1;
        let cfg = AblationConfig {
            use_memory: false,
            use_sampler: false,
            use_evaluator: false,
            ..AblationConfig::full()
        };
        let result = runner
            .run_episode(&question(), &video().meta, &cfg, None)
            .unwrap();
        let trajectory = &result.trials[0].trajectory;
        assert_eq!(trajectory.steps.len(), 1);
        assert_eq!(trajectory.terminated_by, Termination::StepBudget);
        assert!(trajectory.final_answer.is_none());
        assert_eq!(result.answer, "");
    }

    #[test]
    fn react_only_omits_policy_and_sampler() {
        let backend = ScriptedBackend::from_entries(
            vec![ScriptEntry::substring(
                "specialized in video question-answering",
                "Final Answer: Option 1",
            )],
            ScriptMode::Strict,
        )
        .unwrap();
        let catalog = PromptCatalog::builtin();
        let registry = registry();
        let runner = runner(&backend, &catalog, &registry);
        let result = runner
            .run_episode(
                &question(),
                &video().meta,
                &AblationConfig::react_only(),
                None,
            )
            .unwrap();
        assert_eq!(result.trials.len(), 1);
        assert!(result.trials[0].policy.is_none());
        assert_eq!(result.transcript.count_tag("policy"), 0);
        assert_eq!(result.transcript.count_tag("sampler"), 0);
        assert_eq!(result.transcript.count_tag("evaluator"), 0);
        assert_eq!(result.transcript.count_tag("refiner"), 0);
        assert!(!result.transcript.any_prompt_contains("Policy:"));
    }

    #[test]
    fn parse_failure_reprompts_once_then_aborts() {
        let backend = ScriptedBackend::from_entries(
            vec![
                policy_entry(),
                ScriptEntry::substring("specialized in video question-answering", "gibberish"),
            ],
            ScriptMode::Strict,
        )
        .unwrap();
        let catalog = PromptCatalog::builtin();
        let registry = registry();
        let runner = runner(&backend, &catalog, &registry);
        let cfg = AblationConfig {
            use_memory: false,
            use_sampler: false,
            use_evaluator: false,
            use_refiner: false,
            react_only: false,
        };
        let err = runner
            .run_episode(&question(), &video().meta, &cfg, None)
            .unwrap_err();
        assert!(matches!(err, EpisodeError::Abort));

        // The reminder went out exactly once before the abort.
        let agent_calls: Vec<_> = backend.use_counts();
        assert_eq!(agent_calls[1], 2);
    }

    #[test]
    fn recovered_parse_failure_continues_the_trial() {
        let backend = ScriptedBackend::from_entries(
            vec![
                policy_entry(),
                ScriptEntry::substring("specialized in video question-answering", "gibberish")
                    .once(),
                ScriptEntry::substring("Format reminder", "Final Answer: Option 2"),
            ],
            ScriptMode::Strict,
        )
        .unwrap();
        let catalog = PromptCatalog::builtin();
        let registry = registry();
        let runner = runner(&backend, &catalog, &registry);
        let cfg = AblationConfig {
            use_memory: false,
            use_sampler: false,
            use_evaluator: false,
            use_refiner: false,
            react_only: false,
        };
        let result = runner
            .run_episode(&question(), &video().meta, &cfg, None)
            .unwrap();
        assert_eq!(result.answer, "Option 2");
    }

    #[test]
    fn out_of_range_input_injects_warning_observation() {
        let backend = ScriptedBackend::from_entries(
            vec![
                policy_entry(),
                ScriptEntry::substring(
                    "specialized in video question-answering",
                    "Thought: peek past the end\nAction: get_frame_info\nAction Input: frame 99999",
                )
                .once(),
                ScriptEntry::substring(
                    "specialized in video question-answering",
                    "Final Answer: Option 0",
                ),
            ],
            ScriptMode::Strict,
        )
        .unwrap();
        let catalog = PromptCatalog::builtin();
        let registry = registry();
        let runner = runner(&backend, &catalog, &registry);
        let cfg = AblationConfig {
            use_memory: false,
            use_sampler: false,
            use_evaluator: false,
            use_refiner: false,
            react_only: false,
        };
        let result = runner
            .run_episode(&question(), &video().meta, &cfg, None)
            .unwrap();
        let step = &result.trials[0].trajectory.steps[0];
        assert!(step
            .observation
            .text
            .starts_with("[warning: out-of-range frame indices were clamped]"));
        assert_eq!(step.observation.frames_charged, vec![5399]);
        assert_eq!(result.answer, "Option 0");
    }

    #[test]
    fn unknown_tool_gets_tool_list_reminder() {
        let backend = ScriptedBackend::from_entries(
            vec![
                policy_entry(),
                ScriptEntry::substring(
                    "specialized in video question-answering",
                    "Thought: t\nAction: warp_drive\nAction Input: frame 0",
                )
                .once(),
                ScriptEntry::substring("must be one of", "Final Answer: Option 3"),
            ],
            ScriptMode::Strict,
        )
        .unwrap();
        let catalog = PromptCatalog::builtin();
        let registry = registry();
        let runner = runner(&backend, &catalog, &registry);
        let cfg = AblationConfig {
            use_memory: false,
            use_sampler: false,
            use_evaluator: false,
            use_refiner: false,
            react_only: false,
        };
        let result = runner
            .run_episode(&question(), &video().meta, &cfg, None)
            .unwrap();
        assert_eq!(result.answer, "Option 3");
        // No step was dispatched for the unknown tool.
        assert!(result.trials[0].trajectory.steps.is_empty());
    }

    #[test]
    fn evaluator_false_then_true_runs_two_trials() {
        let backend = ScriptedBackend::from_entries(
            vec![
                ScriptEntry::substring(
                    "tactics and plans",
                    "Question type: key action detection\nSampling: timestep 30",
                )
                .once(),
                ScriptEntry::substring(
                    "tactics and plans",
                    "Question type: key action detection\nSampling: timestep 30, then timestep 2 near the end\nAnalysis: focus on the last scene",
                ),
                ScriptEntry::substring(
                    "specialized in video question-answering",
                    "Final Answer: Option 0",
                )
                .once(),
                ScriptEntry::substring(
                    "specialized in video question-answering",
                    "Final Answer: Option 1",
                ),
                ScriptEntry::substring("evaluates whether", "Evaluation: False, Confidence: 85")
                    .once(),
                ScriptEntry::substring("evaluates whether", "Evaluation: True, Confidence: 90"),
                ScriptEntry::substring(
                    "self refection",
                    "Diagnosis: answered too early.\nRefined plan: inspect the final scene before answering.",
                ),
            ],
            ScriptMode::Strict,
        )
        .unwrap();
        let catalog = PromptCatalog::builtin();
        let registry = registry();
        let runner = runner(&backend, &catalog, &registry);
        let cfg = AblationConfig {
            use_memory: false,
            use_sampler: false,
            ..AblationConfig::full()
        };
        let result = runner
            .run_episode(&question(), &video().meta, &cfg, None)
            .unwrap();

        assert_eq!(result.trials.len(), 2);
        assert_eq!(result.answer, "Option 1");
        assert_eq!(
            result.trials[0].policy.as_ref().unwrap().provenance,
            crate::policy::Provenance::Generated
        );
        assert_eq!(
            result.trials[1].policy.as_ref().unwrap().provenance,
            crate::policy::Provenance::Refined
        );
        // The retrial policy is not a copy of trial 1's.
        assert_ne!(
            result.trials[0].policy.as_ref().unwrap().raw_text,
            result.trials[1].policy.as_ref().unwrap().raw_text
        );
        // Trial 2's policy prompt embedded trial 1's refined plan.
        assert!(result
            .transcript
            .any_prompt_contains("inspect the final scene before answering"));
        // A refinement exists for both trials.
        assert!(result.trials[0].refinement.is_some());
        assert!(result.trials[1].refinement.is_some());
    }

    #[test]
    fn evaluator_disabled_runs_exactly_one_trial() {
        let backend = ScriptedBackend::from_entries(
            vec![
                policy_entry(),
                ScriptEntry::substring(
                    "specialized in video question-answering",
                    "Final Answer: Option 0",
                ),
                ScriptEntry::substring("self refection", "Plan: nothing to fix"),
            ],
            ScriptMode::Strict,
        )
        .unwrap();
        let catalog = PromptCatalog::builtin();
        let registry = registry();
        let runner = runner(&backend, &catalog, &registry);
        let cfg = AblationConfig {
            use_memory: false,
            use_sampler: false,
            use_evaluator: false,
            ..AblationConfig::full()
        };
        let result = runner
            .run_episode(&question(), &video().meta, &cfg, None)
            .unwrap();
        assert_eq!(result.trials.len(), 1);
        assert_eq!(result.transcript.count_tag("evaluator"), 0);
        // Refiner still produced the final-trial refinement.
        assert_eq!(result.transcript.count_tag("refiner"), 1);
    }

    #[test]
    fn exhausted_trials_store_failed_verdict_with_refinement() {
        let embedder: Arc<dyn crate::gateway::Embedder> = Arc::new(HashingEmbedder::default());
        let store = MemoryStore::in_memory(embedder);
        let backend = ScriptedBackend::from_entries(
            vec![
                policy_entry(),
                ScriptEntry::substring(
                    "specialized in video question-answering",
                    "Final Answer: Option 2",
                ),
                ScriptEntry::substring("evaluates whether", "Evaluation: False, Confidence: 70"),
                ScriptEntry::substring(
                    "self refection",
                    "Diagnosis: wrong option.\nRefined plan: check the middle segment.",
                ),
            ],
            ScriptMode::Strict,
        )
        .unwrap();
        let catalog = PromptCatalog::builtin();
        let registry = registry();
        let mut runner = runner(&backend, &catalog, &registry);
        runner.memory = Some(&store);
        runner.budgets.max_trials = 1;
        let cfg = AblationConfig {
            use_sampler: false,
            ..AblationConfig::full()
        };
        let result = runner
            .run_episode(&question(), &video().meta, &cfg, None)
            .unwrap();
        assert_eq!(result.trials.len(), 1);
        assert_eq!(result.answer, "Option 2");
        assert!(result.memory_stored);
        let records = store.records();
        assert_eq!(records.len(), 1);
        assert!(!records[0].verdict);
        assert!(records[0]
            .refinement
            .as_ref()
            .unwrap()
            .refined_plan
            .contains("middle segment"));
    }

    #[test]
    fn determinism_identical_scripts_give_identical_serializations() {
        let run = || {
            let backend = ScriptedBackend::from_entries(
                vec![
                    policy_entry(),
                    ScriptEntry::substring(
                        "specialized in video question-answering",
                        "Thought: look\nAction: video_caption\nAction Input: frame 100",
                    )
                    .once(),
                    ScriptEntry::substring(
                        "specialized in video question-answering",
                        "Final Answer: Option 3",
                    ),
                    ScriptEntry::substring("frame sampling assistant", "Frames: 100, 200 (sparse)"),
                    ScriptEntry::substring("evaluates whether", "Evaluation: True, Confidence: 90"),
                    ScriptEntry::substring("self refection", "Plan: fine as is"),
                ],
                ScriptMode::Strict,
            )
            .unwrap();
            let catalog = PromptCatalog::builtin();
            let registry = registry();
            let runner = runner(&backend, &catalog, &registry);
            let cfg = AblationConfig {
                use_memory: false,
                ..AblationConfig::full()
            };
            let result = runner
                .run_episode(&question(), &video().meta, &cfg, None)
                .unwrap();
            serde_json::to_string(&result).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn sampler_revises_percentage_of_frames_charged() {
        let backend = ScriptedBackend::from_entries(
            vec![
                policy_entry(),
                ScriptEntry::substring(
                    "specialized in video question-answering",
                    "Thought: look\nAction: get_frame_info\nAction Input: frame 0",
                )
                .once(),
                ScriptEntry::substring(
                    "specialized in video question-answering",
                    "Final Answer: Option 3",
                ),
                ScriptEntry::substring(
                    "frame sampling assistant",
                    "Frames: 0, 2700, 5399 (sparse)",
                ),
            ],
            ScriptMode::Strict,
        )
        .unwrap();
        let catalog = PromptCatalog::builtin();
        let registry = registry();
        let runner = runner(&backend, &catalog, &registry);
        let cfg = AblationConfig {
            use_memory: false,
            use_evaluator: false,
            use_refiner: false,
            use_sampler: true,
            react_only: false,
        };
        let result = runner
            .run_episode(&question(), &video().meta, &cfg, None)
            .unwrap();
        // The sampler widened the single proposed frame to three.
        assert_eq!(result.distinct_frames_accessed, 3);
        assert_eq!(result.transcript.count_tag("sampler"), 1);
        let sampler_records: Vec<_> = result
            .trace
            .iter()
            .filter(|r| r.kind == TraceKind::Sampler)
            .collect();
        assert_eq!(sampler_records.len(), 1);
    }

    #[test]
    fn confidence_gate_turns_weak_passes_into_retries() {
        let backend = ScriptedBackend::from_entries(
            vec![
                policy_entry(),
                ScriptEntry::substring(
                    "specialized in video question-answering",
                    "Final Answer: Option 0",
                )
                .once(),
                ScriptEntry::substring(
                    "specialized in video question-answering",
                    "Final Answer: Option 1",
                ),
                // True but below the gate, then confidently true.
                ScriptEntry::substring("evaluates whether", "Evaluation: True, Confidence: 70")
                    .once(),
                ScriptEntry::substring("evaluates whether", "Evaluation: True, Confidence: 95"),
                ScriptEntry::substring("self refection", "Plan: look again"),
            ],
            ScriptMode::Strict,
        )
        .unwrap();
        let catalog = PromptCatalog::builtin();
        let registry = registry();
        let mut runner = runner(&backend, &catalog, &registry);
        runner.options.eval_confidence_gate = Some(80);
        let cfg = AblationConfig {
            use_memory: false,
            use_sampler: false,
            ..AblationConfig::full()
        };
        let result = runner
            .run_episode(&question(), &video().meta, &cfg, None)
            .unwrap();
        assert_eq!(result.trials.len(), 2);
        assert_eq!(result.answer, "Option 1");

        // Without the gate the weak pass ends the episode.
        let ungated_backend = ScriptedBackend::from_entries(
            vec![
                policy_entry(),
                ScriptEntry::substring(
                    "specialized in video question-answering",
                    "Final Answer: Option 0",
                ),
                ScriptEntry::substring("evaluates whether", "Evaluation: True, Confidence: 70"),
                ScriptEntry::substring("self refection", "Plan: fine"),
            ],
            ScriptMode::Strict,
        )
        .unwrap();
        let ungated = EpisodeRunner {
            backend: &ungated_backend,
            catalog: &catalog,
            registry: &registry,
            memory: None,
            budgets: Budgets::default(),
            options: RunOptions::default(),
        };
        let result = ungated
            .run_episode(&question(), &video().meta, &cfg, None)
            .unwrap();
        assert_eq!(result.trials.len(), 1);
    }

    #[test]
    fn ablation_row_names_roundtrip() {
        for (name, cfg) in AblationConfig::matrix() {
            assert_eq!(AblationConfig::from_row_name(name), Some(cfg));
            assert_eq!(cfg.row_name(), name);
        }
        assert_eq!(
            AblationConfig::from_row_name("w/o-sampler"),
            Some(AblationConfig::without_sampler())
        );
        assert!(AblationConfig::from_row_name("bogus").is_none());
        let normalized = AblationConfig {
            use_memory: true,
            use_evaluator: true,
            use_sampler: true,
            use_refiner: true,
            react_only: true,
        }
        .normalized();
        assert!(!normalized.use_memory && !normalized.use_evaluator);
    }
}
