//! `avua` — run the adaptive video-understanding agent from the shell:
//! single questions, benchmark suites with ablation rows, trace
//! replays, and memory inspection.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use avua_core::harness::{load_manifest, run_benchmark, BenchOptions, BenchSetup, BenchmarkItem};
use avua_core::planner::{AblationConfig, EpisodeRunner};
use avua_core::prompts::PromptCatalog;
use avua_core::trace::{final_summary, read_trace, replay_totals};

use config::{LoadedConfig, Overrides};

/// Errors split by exit code: configuration problems exit 2, runtime
/// failures exit 3.
#[derive(Debug)]
pub enum AppError {
    Config(String),
    Runtime(String),
}

impl std::fmt::Display for AppError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AppError::Config(msg) => write!(f, "config error: {msg}"),
            AppError::Runtime(msg) => write!(f, "error: {msg}"),
        }
    }
}

#[derive(Parser)]
#[command(name = "avua", version, about = "Adaptive video-understanding agent")]
struct Cli {
    /// Config file (JSON); defaults to $AVUA_CONFIG.
    #[arg(long, global = true, env = "AVUA_CONFIG")]
    config: Option<PathBuf>,

    /// Ablation row: ours, w/o-memory, w/o-evaluator, w/o-sampler,
    /// w/o-refiner, react.
    #[arg(long, global = true)]
    ablation: Option<String>,

    /// Step budget per trial.
    #[arg(long, global = true)]
    max_steps: Option<u32>,

    /// Trial budget per episode.
    #[arg(long, global = true)]
    max_trials: Option<u32>,

    /// Long-term memory store path.
    #[arg(long, global = true)]
    memory: Option<String>,

    /// Count a trial as passed only if the evaluator is at least this
    /// confident (default: the verdict alone gates retries).
    #[arg(long, global = true)]
    eval_confidence_gate: Option<u8>,

    /// Retrieve only experiences whose episode evaluated true.
    #[arg(long, global = true)]
    only_successful: bool,

    /// Prompt template directory overriding the built-in catalog.
    #[arg(long, global = true)]
    prompts_dir: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one question end to end and print the answer.
    Ask(AskArgs),
    /// Run a benchmark manifest and write a report.
    Bench(BenchArgs),
    /// Check a recorded trace for internal consistency.
    Replay(ReplayArgs),
    /// Inspect or query the long-term memory store.
    Memory(MemoryArgs),
    /// List or show prompt templates.
    Prompts(PromptsArgs),
}

#[derive(Args)]
struct AskArgs {
    /// Item file: a single benchmark-item JSON object.
    #[arg(long)]
    item: PathBuf,
    /// Output directory for the trace and transcript.
    #[arg(long, default_value = "avua-run")]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Manifest: a JSON list of benchmark items.
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory for reports and traces.
    #[arg(long)]
    out: PathBuf,
    /// Run the whole ablation matrix (six rows) instead of one row.
    #[arg(long)]
    matrix: bool,
    /// Concurrent episodes (default 1 for deterministic log order).
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct ReplayArgs {
    /// Trace file produced by `ask` or `bench`.
    #[arg(long)]
    trace: PathBuf,
}

#[derive(Args)]
struct MemoryArgs {
    #[command(subcommand)]
    command: MemoryCommand,
}

#[derive(Subcommand)]
enum MemoryCommand {
    /// Dump stored records.
    Inspect {
        #[arg(long, default_value_t = 20)]
        limit: usize,
    },
    /// Run a similarity retrieval against the store.
    Query {
        text: String,
        #[arg(long, default_value_t = 3)]
        k: usize,
        /// Question type used in the retrieval key.
        #[arg(long, default_value = "")]
        question_type: String,
    },
}

#[derive(Args)]
struct PromptsArgs {
    #[command(subcommand)]
    command: PromptsCommand,
}

#[derive(Subcommand)]
enum PromptsCommand {
    /// List template names.
    List,
    /// Print one template verbatim.
    Show { name: String },
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err @ AppError::Config(_)) => {
            eprintln!("{err}");
            ExitCode::from(2)
        }
        Err(err @ AppError::Runtime(_)) => {
            eprintln!("{err}");
            ExitCode::from(3)
        }
    }
}

fn overrides_from(cli: &Cli) -> Overrides {
    Overrides {
        ablation: cli.ablation.clone(),
        max_steps: cli.max_steps,
        max_trials: cli.max_trials,
        memory_path: cli.memory.clone(),
        eval_confidence_gate: cli.eval_confidence_gate,
        only_successful: cli.only_successful,
        prompts_dir: cli.prompts_dir.clone(),
    }
}

fn require_config(cli: &Cli) -> Result<LoadedConfig, AppError> {
    let path = cli.config.as_ref().ok_or_else(|| {
        AppError::Config("no config given (use --config or set AVUA_CONFIG)".into())
    })?;
    LoadedConfig::load(path, &overrides_from(cli))
}

fn run(cli: Cli) -> Result<(), AppError> {
    match &cli.command {
        Command::Ask(args) => cmd_ask(&cli, args),
        Command::Bench(args) => cmd_bench(&cli, args),
        Command::Replay(args) => cmd_replay(args),
        Command::Memory(args) => cmd_memory(&cli, args),
        Command::Prompts(args) => cmd_prompts(&cli, args),
    }
}

fn load_item(path: &Path) -> Result<BenchmarkItem, AppError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| AppError::Config(format!("cannot read item {}: {e}", path.display())))?;
    let item: BenchmarkItem = serde_json::from_str(&text)
        .map_err(|e| AppError::Config(format!("malformed item {}: {e}", path.display())))?;
    item.validate(false)
        .map_err(|e| AppError::Config(e.to_string()))?;
    Ok(item)
}

fn cmd_ask(cli: &Cli, args: &AskArgs) -> Result<(), AppError> {
    let loaded = require_config(cli)?;
    let item = load_item(&args.item)?;
    let backend = loaded.backend()?;
    let catalog = loaded.catalog()?;
    let provider = loaded.toolbox_provider()?;
    let memory = loaded.memory()?;
    let ablation = loaded.ablation()?;

    let registry = provider
        .registry_for(&item.video_ref, &item.meta)
        .map_err(|e| AppError::Config(e.to_string()))?;
    std::fs::create_dir_all(&args.out)
        .map_err(|e| AppError::Runtime(format!("cannot create {}: {e}", args.out.display())))?;

    let runner = EpisodeRunner {
        backend: backend.as_ref(),
        catalog: &catalog,
        registry: &registry,
        memory: memory.as_ref(),
        budgets: loaded.budgets(),
        options: loaded.run_options(),
    };
    let result = runner
        .run_episode(
            &item.question,
            &item.meta,
            &ablation,
            Some("transcript.jsonl".to_string()),
        )
        .map_err(|e| AppError::Runtime(e.to_string()))?;

    let mut trace = result.trace.clone();
    if let Some(last) = trace.last_mut() {
        if let Some(obj) = last.payload.as_object_mut() {
            obj.insert(
                "config_digest".to_string(),
                serde_json::Value::String(loaded.digest()),
            );
        }
    }
    let trace_path = args.out.join("trace.jsonl");
    avua_core::trace::write_trace(&trace_path, &trace)
        .map_err(|e| AppError::Runtime(e.to_string()))?;
    result
        .transcript
        .write_jsonl(&args.out.join("transcript.jsonl"))
        .map_err(|e| AppError::Runtime(e.to_string()))?;

    let ratio = if item.meta.total_frames == 0 {
        0.0
    } else {
        result.distinct_frames_accessed as f64 / item.meta.total_frames as f64
    };
    println!("answer: {}", result.answer);
    println!(
        "frames accessed: {} distinct ({} charges), ratio {:.6}",
        result.distinct_frames_accessed, result.frames_accessed, ratio
    );
    println!("trials: {}", result.trials.len());
    println!("trace: {}", trace_path.display());
    Ok(())
}

fn cmd_bench(cli: &Cli, args: &BenchArgs) -> Result<(), AppError> {
    let loaded = require_config(cli)?;
    let items = load_manifest(&args.manifest).map_err(|e| AppError::Config(e.to_string()))?;
    if items.is_empty() {
        return Err(AppError::Config(format!(
            "manifest {} lists no items",
            args.manifest.display()
        )));
    }
    let catalog = loaded.catalog()?;
    let provider = loaded.toolbox_provider()?;

    let rows: Vec<(String, AblationConfig)> = if args.matrix {
        AblationConfig::matrix()
            .into_iter()
            .map(|(name, cfg)| (name.to_string(), cfg))
            .collect()
    } else {
        let ablation = loaded.ablation()?;
        vec![(loaded.config.ablation.clone(), ablation)]
    };

    for (row_name, ablation) in rows {
        let row_dir = if args.matrix {
            args.out.join(row_name.replace('/', "_"))
        } else {
            args.out.clone()
        };
        std::fs::create_dir_all(&row_dir)
            .map_err(|e| AppError::Runtime(format!("cannot create {}: {e}", row_dir.display())))?;

        // Each row starts from a fresh backend (script use-counts
        // reset) and, unless the config pins a store for a single-row
        // run, a fresh per-row memory store. Both keep repeated
        // invocations byte-identical.
        let backend = loaded.backend()?;
        let memory = if ablation.normalized().use_memory {
            if !args.matrix && loaded.config.memory_path.is_some() {
                loaded.memory()?
            } else {
                Some(loaded.open_memory_at(&row_dir.join("memory.jsonl"), true)?)
            }
        } else {
            None
        };

        let setup = BenchSetup {
            backend: backend.as_ref(),
            catalog: &catalog,
            toolbox: provider.as_ref(),
            memory: memory.as_ref(),
            budgets: loaded.budgets(),
            options: loaded.run_options(),
        };
        let options = BenchOptions {
            ablation,
            row_name: row_name.clone(),
            config_digest: loaded.digest(),
            jobs: args.jobs,
            out_dir: Some(row_dir.clone()),
            ..BenchOptions::default()
        };
        let report = run_benchmark(&items, &setup, &options)
            .map_err(|e| AppError::Runtime(e.to_string()))?;
        println!(
            "{row_name}: accuracy {:.4}, avg frames {:.2}, report {}",
            report.accuracy,
            report.avg_frames,
            row_dir.join("report.json").display()
        );
    }
    Ok(())
}

fn cmd_replay(args: &ReplayArgs) -> Result<(), AppError> {
    let records = read_trace(&args.trace).map_err(|e| AppError::Runtime(e.to_string()))?;
    let summary = final_summary(&records)
        .ok_or_else(|| AppError::Runtime("trace has no final record".into()))?
        .clone();
    let totals = replay_totals(&records);

    let stored_total = summary
        .get("frames_accessed")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| AppError::Runtime("trace final record lacks frames_accessed".into()))?;
    let stored_distinct = summary
        .get("distinct_frames_accessed")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| {
            AppError::Runtime("trace final record lacks distinct_frames_accessed".into())
        })?;

    if totals.total_charges != stored_total {
        return Err(AppError::Runtime(format!(
            "trace corrupt: recomputed {} frame charges but the trace stores {stored_total}",
            totals.total_charges
        )));
    }
    if totals.distinct_frames.len() as u64 != stored_distinct {
        return Err(AppError::Runtime(format!(
            "trace corrupt: recomputed {} distinct frames but the trace stores {stored_distinct}",
            totals.distinct_frames.len()
        )));
    }
    if let (Some(total_frames), Some(stored_ratio)) = (
        summary
            .get("total_frames")
            .and_then(serde_json::Value::as_u64),
        summary.get("ratio").and_then(serde_json::Value::as_f64),
    ) {
        let recomputed = if total_frames == 0 {
            0.0
        } else {
            stored_distinct as f64 / total_frames as f64
        };
        if (recomputed - stored_ratio).abs() > 1e-9 {
            return Err(AppError::Runtime(format!(
                "trace corrupt: recomputed ratio {recomputed} but the trace stores {stored_ratio}"
            )));
        }
    }

    println!(
        "trace ok: {} records, answer {:?}, {} distinct frames ({} charges), {} trials",
        records.len(),
        summary
            .get("answer")
            .and_then(serde_json::Value::as_str)
            .unwrap_or(""),
        stored_distinct,
        stored_total,
        summary
            .get("trials")
            .and_then(serde_json::Value::as_u64)
            .unwrap_or(0),
    );
    if let Some(digest) = summary
        .get("config_digest")
        .and_then(serde_json::Value::as_str)
    {
        println!("config digest: {digest}");
    }
    Ok(())
}

fn cmd_memory(cli: &Cli, args: &MemoryArgs) -> Result<(), AppError> {
    let loaded = require_config(cli)?;
    let store = loaded.memory()?.ok_or_else(|| {
        AppError::Config("no memory_path configured (set it in the config or pass --memory)".into())
    })?;
    match &args.command {
        MemoryCommand::Inspect { limit } => {
            let records = store.records();
            println!("{} records", records.len());
            for record in records.iter().rev().take(*limit) {
                let head: String = record.question_text.chars().take(60).collect();
                println!(
                    "{}  [{}] verdict={} confidence={}  {}",
                    record.id, record.question_type, record.verdict, record.confidence, head
                );
            }
        }
        MemoryCommand::Query {
            text,
            k,
            question_type,
        } => {
            let hits = store
                .retrieve(question_type, text, *k)
                .map_err(|e| AppError::Runtime(e.to_string()))?;
            if hits.is_empty() {
                println!("no records above the similarity floor");
            }
            for (record, similarity) in hits {
                let head: String = record.question_text.chars().take(60).collect();
                println!(
                    "{similarity:.4}  {}  [{}]  {}",
                    record.id, record.question_type, head
                );
            }
        }
    }
    Ok(())
}

fn cmd_prompts(cli: &Cli, args: &PromptsArgs) -> Result<(), AppError> {
    // Prompts work without a config: fall back to the built-in catalog.
    let catalog = match &cli.config {
        Some(path) => LoadedConfig::load(path, &overrides_from(cli))?.catalog()?,
        None => match &cli.prompts_dir {
            Some(dir) => PromptCatalog::from_dir(Path::new(dir))
                .map_err(|e| AppError::Config(e.to_string()))?,
            None => PromptCatalog::builtin(),
        },
    };
    match &args.command {
        PromptsCommand::List => {
            for name in catalog.names() {
                println!("{name}");
            }
        }
        PromptsCommand::Show { name } => {
            let text = catalog
                .get(name)
                .map_err(|e| AppError::Config(e.to_string()))?;
            print!("{text}");
        }
    }
    Ok(())
}
