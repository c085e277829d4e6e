//! Command-line surface: plan search, dataset execution, and cache
//! inspection, with deterministic artifacts under a fixed seed.
//!
//! Exit codes: 2 configuration error, 3 provider error, 4 plan/schema
//! mismatch, 5 unreadable cache.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::batching::BatchStrategy;
use crate::cache::CacheStore;
use crate::config::{parse_config, parse_optimizer_section, parse_output_value, TaskSpec};
use crate::error::Error;
use crate::optimizer::{
    generic_optimize, specialized_optimize, OptimizeMode, OptimizeOutcome, OptimizerSettings, Plan,
};
use crate::provider::{Embedder, HashEmbedder, LanguageModel, SimulatedLlm};
use crate::runtime::{
    compile_pipeline, execute_dataset, BatchingConfig, CascadeEvaluator, RecordOutcome,
    ReoptPolicy, RunSummary, DEFAULT_REOPT_THRESHOLD,
};
use crate::value::{Record, Value};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_PROVIDER: i32 = 3;
pub const EXIT_PLAN: i32 = 4;
pub const EXIT_CACHE: i32 = 5;

/// A failure with its process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "cascadec",
    version,
    about = "Compile declarative data-curation tasks into cost-minimal executor cascades"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Search for a plan, then verify it compiles into a pipeline.
    Compile(OptimizeArgs),
    /// Search for a plan; write the plan file and a frontier report.
    Optimize(OptimizeArgs),
    /// Execute a dataset under a previously produced plan.
    Run(RunArgs),
    /// Report cache statistics.
    Stats(StatsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Generic,
    Specialized,
}

#[derive(Args)]
pub struct OptimizeArgs {
    /// Task configuration document.
    #[arg(long)]
    pub config: PathBuf,
    /// Labeled validation dataset; defaults to the config's examples.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Where to write the plan file.
    #[arg(long)]
    pub out: PathBuf,
    /// Where to write the frontier report; defaults to `<out>.report.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Provider profile: `simulated`, `simulated:<script>`, or `http`.
    #[arg(long, default_value = "simulated")]
    pub provider: String,
    /// Effectiveness gap override.
    #[arg(long)]
    pub gap: Option<f64>,
    /// Search mode override.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Persistent cache file; in-memory when omitted.
    #[arg(long)]
    pub cache: Option<PathBuf>,
}

#[derive(Args)]
pub struct RunArgs {
    /// Plan file produced by `optimize` or `compile`.
    #[arg(long)]
    pub plan: PathBuf,
    /// Input dataset (line-delimited JSON records or headed CSV).
    #[arg(long)]
    pub data: PathBuf,
    /// Where to write per-record results; the summary lands in
    /// `<out>.summary.json`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "simulated")]
    pub provider: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Batch size for the LLM stage; unbatched when omitted.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Batching strategy: rnd, div, prx, far, or cls.
    #[arg(long, default_value = "rnd")]
    pub batch_strategy: String,
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// New cached exchanges needed before re-optimizing.
    #[arg(long, default_value_t = DEFAULT_REOPT_THRESHOLD)]
    pub reopt_threshold: usize,
}

#[derive(Args)]
pub struct StatsArgs {
    /// Cache file to inspect.
    #[arg(long)]
    pub cache: PathBuf,
}

/// The self-contained plan artifact: everything `run` needs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanFile {
    pub task: TaskSpec,
    pub settings: OptimizerSettings,
    pub plan: Plan,
    pub explored: usize,
}

#[derive(Debug, Serialize)]
struct FrontierEntry<'a> {
    stages: &'a [crate::exec::ModuleConfig],
    effectiveness: f64,
    cost: f64,
}

#[derive(Debug, Serialize)]
struct FrontierReport<'a> {
    gap: f64,
    explored: usize,
    max_effectiveness: f64,
    chosen_effectiveness: f64,
    chosen_cost: f64,
    plans: Vec<FrontierEntry<'a>>,
}

#[derive(Debug, Serialize)]
struct CacheReport {
    exchange_count: usize,
    module_io_count: usize,
    replay_hits: u64,
}

pub fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Compile(args) => cmd_optimize(&args, true),
        Command::Optimize(args) => cmd_optimize(&args, false),
        Command::Run(args) => cmd_run(&args),
        Command::Stats(args) => cmd_stats(&args),
    }
}

fn read_file(path: &Path, code: i32) -> CliResult<String> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::new(code, format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, content: &str) -> CliResult<()> {
    std::fs::write(path, content)
        .map_err(|e| CliError::new(1, format!("cannot write {}: {e}", path.display())))
}

fn build_provider(profile: &str) -> CliResult<Arc<dyn LanguageModel>> {
    if profile == "simulated" {
        return Ok(Arc::new(SimulatedLlm::new(Vec::new(), "")));
    }
    if let Some(script) = profile.strip_prefix("simulated:") {
        let llm = SimulatedLlm::from_script_file(Path::new(script))
            .map_err(|e| CliError::new(EXIT_PROVIDER, format!("bad provider script: {e}")))?;
        return Ok(Arc::new(llm));
    }
    if profile == "http" {
        #[cfg(feature = "http")]
        {
            let http = crate::provider::http::HttpProfile::from_env()
                .map_err(|e| CliError::new(EXIT_PROVIDER, format!("http profile: {e}")))?;
            return Ok(Arc::new(crate::provider::http::HttpLlm::new(http)));
        }
        #[cfg(not(feature = "http"))]
        return Err(CliError::new(
            EXIT_PROVIDER,
            "http provider requires building with the `http` feature",
        ));
    }
    Err(CliError::new(
        EXIT_PROVIDER,
        format!("unknown provider profile {profile:?}"),
    ))
}

fn open_store(path: Option<&Path>, dim: usize) -> CliResult<Arc<CacheStore>> {
    match path {
        None => Ok(Arc::new(CacheStore::in_memory(dim))),
        Some(path) => {
            let store = CacheStore::open(path, dim).map_err(|e| match e {
                Error::CorruptCache { line, reason } => CliError::new(
                    EXIT_CACHE,
                    format!("corrupt cache {} at line {line}: {reason}", path.display()),
                ),
                other => CliError::new(EXIT_CACHE, format!("cannot open cache: {other}")),
            })?;
            Ok(Arc::new(store))
        }
    }
}

/// Read a dataset: line-delimited JSON objects, or CSV with a header
/// row, chosen by the first non-whitespace byte.
fn load_records(path: &Path) -> CliResult<Vec<Record>> {
    let text = read_file(path, EXIT_CONFIG)?;
    let first = text.trim_start().chars().next();
    if first == Some('{') {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: Record = serde_json::from_str(line).map_err(|e| {
                CliError::new(
                    EXIT_CONFIG,
                    format!("{} line {}: {e}", path.display(), i + 1),
                )
            })?;
            records.push(record);
        }
        Ok(records)
    } else {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| CliError::new(EXIT_CONFIG, format!("{}: {e}", path.display())))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut records = Vec::new();
        for row in reader.records() {
            let row =
                row.map_err(|e| CliError::new(EXIT_CONFIG, format!("{}: {e}", path.display())))?;
            let mut record = Record::new();
            for (name, cell) in headers.iter().zip(row.iter()) {
                record = record.with(name, cell);
            }
            records.push(record);
        }
        Ok(records)
    }
}

/// Split loaded records into (inputs, label) pairs using the spec's
/// output field; records without a parsable label are rejected.
fn labeled_pairs(spec: &TaskSpec, records: Vec<Record>) -> CliResult<Vec<(Record, Value)>> {
    let mut pairs = Vec::new();
    for (i, record) in records.into_iter().enumerate() {
        let label = record
            .get(&spec.output.name)
            .ok_or_else(|| {
                CliError::new(
                    EXIT_CONFIG,
                    format!("validation record {} lacks output field {:?}", i + 1, spec.output.name),
                )
            })?
            .clone();
        let label = parse_output_value(&label.as_text(), &spec.output.kind)
            .map_err(|e| CliError::new(EXIT_CONFIG, format!("validation record {}: {e}", i + 1)))?;
        let mut inputs = Record::new();
        for field in &spec.inputs {
            if let Some(value) = record.get(&field.name) {
                inputs = inputs.with(&field.name, value.clone());
            }
        }
        pairs.push((inputs, label));
    }
    Ok(pairs)
}

fn settings_from(
    spec_document: &str,
    gap: Option<f64>,
    mode: Option<ModeArg>,
) -> CliResult<OptimizerSettings> {
    let mut settings = OptimizerSettings::default();
    if let Some(section) = parse_optimizer_section(spec_document)
        .map_err(|e| CliError::new(EXIT_CONFIG, e.to_string()))?
    {
        if let Some(g) = section.get("gap").and_then(|v| v.as_f64()) {
            settings.gap = g;
        }
        if let Some(b) = section.get("beam").and_then(|v| v.as_u64()) {
            settings.beam = Some(b as usize);
        }
        if let Some(m) = section.get("mode").and_then(|v| v.as_str()) {
            settings.mode = match m {
                "generic" => OptimizeMode::Generic,
                "specialized" => OptimizeMode::Specialized,
                other => {
                    return Err(CliError::new(
                        EXIT_CONFIG,
                        format!("unknown optimizer mode {other:?}"),
                    ))
                }
            };
        }
    }
    if let Some(g) = gap {
        settings.gap = g;
    }
    if let Some(m) = mode {
        settings.mode = match m {
            ModeArg::Generic => OptimizeMode::Generic,
            ModeArg::Specialized => OptimizeMode::Specialized,
        };
    }
    if !(0.0..=1.0).contains(&settings.gap) {
        return Err(CliError::new(EXIT_CONFIG, "gap must be within [0, 1]"));
    }
    Ok(settings)
}

fn provider_err(e: Error) -> CliError {
    CliError::new(EXIT_PROVIDER, format!("provider failure: {e}"))
}

pub fn cmd_optimize(args: &OptimizeArgs, verify_compile: bool) -> CliResult<()> {
    let document = read_file(&args.config, EXIT_CONFIG)?;
    let spec =
        parse_config(&document).map_err(|e| CliError::new(EXIT_CONFIG, e.to_string()))?;
    let settings = settings_from(&document, args.gap, args.mode)?;
    let llm = build_provider(&args.provider)?;
    let embedder: Arc<dyn Embedder> = Arc::new(HashEmbedder::default());
    let store = open_store(args.cache.as_deref(), embedder.dim())?;

    let validation = match &args.data {
        Some(path) => labeled_pairs(&spec, load_records(path)?)?,
        None => spec.labeled_examples(),
    };
    if validation.is_empty() {
        return Err(CliError::new(
            EXIT_CONFIG,
            "no labeled validation data: provide --data or labeled examples",
        ));
    }

    let evaluator = CascadeEvaluator::new(
        spec.clone(),
        validation,
        llm.clone(),
        embedder.clone(),
        store.clone(),
        args.seed,
    );
    let outcome: OptimizeOutcome = match settings.mode {
        OptimizeMode::Generic => generic_optimize(&settings, &evaluator),
        OptimizeMode::Specialized => specialized_optimize(&settings, &evaluator, None),
    }
    .map_err(provider_err)?;

    if verify_compile {
        compile_pipeline(
            &outcome.chosen,
            &spec,
            llm,
            embedder,
            store,
            ReoptPolicy::default(),
            args.seed,
        )
        .map_err(|e| CliError::new(EXIT_PLAN, format!("plan does not compile: {e}")))?;
    }

    let plan_file = PlanFile {
        task: spec,
        settings: settings.clone(),
        plan: outcome.chosen.clone(),
        explored: outcome.explored,
    };
    let rendered =
        serde_json::to_string_pretty(&plan_file).expect("plan file serializes") + "\n";
    write_file(&args.out, &rendered)?;

    let report_path = args
        .report
        .clone()
        .unwrap_or_else(|| report_path_for(&args.out));
    let report = FrontierReport {
        gap: settings.gap,
        explored: outcome.explored,
        max_effectiveness: outcome.max_plan.metrics.effectiveness,
        chosen_effectiveness: outcome.chosen.metrics.effectiveness,
        chosen_cost: outcome.chosen.metrics.cost,
        plans: outcome
            .frontier
            .plans()
            .iter()
            .map(|p| FrontierEntry {
                stages: &p.stages,
                effectiveness: p.metrics.effectiveness,
                cost: p.metrics.cost,
            })
            .collect(),
    };
    let rendered = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    write_file(&report_path, &rendered)?;
    println!(
        "plan: {} stages, effectiveness {:.4}, cost {:.4}, explored {}",
        outcome.chosen.stages.len(),
        outcome.chosen.metrics.effectiveness,
        outcome.chosen.metrics.cost,
        outcome.explored
    );
    Ok(())
}

fn report_path_for(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_os_string();
    name.push(".report.json");
    PathBuf::from(name)
}

pub fn cmd_run(args: &RunArgs) -> CliResult<()> {
    let plan_file: PlanFile = serde_json::from_str(&read_file(&args.plan, EXIT_PLAN)?)
        .map_err(|e| CliError::new(EXIT_PLAN, format!("bad plan file: {e}")))?;
    let spec = plan_file.task;
    let records = load_records(&args.data)?;
    for (i, record) in records.iter().enumerate() {
        for field in &spec.inputs {
            if record.get(&field.name).is_none() {
                return Err(CliError::new(
                    EXIT_PLAN,
                    format!(
                        "record {} lacks declared input column {:?}",
                        i + 1,
                        field.name
                    ),
                ));
            }
        }
    }

    let llm = build_provider(&args.provider)?;
    let embedder: Arc<dyn Embedder> = Arc::new(HashEmbedder::default());
    let store = open_store(args.cache.as_deref(), embedder.dim())?;
    let reopt = ReoptPolicy {
        enabled: false,
        new_exchange_threshold: args.reopt_threshold.max(1),
    };
    let pipeline = compile_pipeline(
        &plan_file.plan,
        &spec,
        llm,
        embedder,
        store,
        reopt,
        args.seed,
    )
    .map_err(|e| match e {
        Error::UntrainableModel => {
            CliError::new(EXIT_PLAN, "plan needs a trained model but the cache is empty")
        }
        other => provider_err(other),
    })?;

    let batching = match args.batch_size {
        None => None,
        Some(size) => {
            let strategy: BatchStrategy = args
                .batch_strategy
                .parse()
                .map_err(|e: Error| CliError::new(EXIT_CONFIG, e.to_string()))?;
            Some(BatchingConfig {
                strategy,
                batch_size: size.max(1),
            })
        }
    };
    let (outcomes, summary) =
        execute_dataset(&pipeline, &records, batching).map_err(provider_err)?;

    let results = render_results(&spec, &records, &outcomes);
    write_file(&args.out, &results)?;
    let summary_text =
        serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    write_file(&summary_path_for(&args.out), &summary_text)?;
    println!("{summary_text}");
    Ok(())
}

fn summary_path_for(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_os_string();
    name.push(".summary.json");
    PathBuf::from(name)
}

fn render_results(spec: &TaskSpec, records: &[Record], outcomes: &[RecordOutcome]) -> String {
    let mut lines = String::new();
    for (record, outcome) in records.iter().zip(outcomes) {
        let mut row = serde_json::Map::new();
        for field in &spec.inputs {
            if let Some(value) = record.get(&field.name) {
                row.insert(
                    field.name.clone(),
                    serde_json::to_value(value).expect("value serializes"),
                );
            }
        }
        row.insert(
            spec.output.name.clone(),
            match outcome.value() {
                Some(value) => serde_json::to_value(value).expect("value serializes"),
                None => serde_json::Value::Null,
            },
        );
        lines.push_str(&serde_json::Value::Object(row).to_string());
        lines.push('\n');
    }
    lines
}

pub fn cmd_stats(args: &StatsArgs) -> CliResult<()> {
    if !args.cache.exists() {
        return Err(CliError::new(
            EXIT_CACHE,
            format!("cache {} does not exist", args.cache.display()),
        ));
    }
    let store = open_store(Some(&args.cache), HashEmbedder::default().dim())?;
    let report = CacheReport {
        exchange_count: store.exchange_count(),
        module_io_count: store.module_io_count(),
        replay_hits: store.replay_hits(),
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("report serializes")
    );
    Ok(())
}

/// Re-exported for integration tests that need to assert on summaries.
pub fn summary_file_for(out: &Path) -> PathBuf {
    summary_path_for(out)
}

/// See [`RunSummary`]; re-exported so test binaries can parse summaries.
pub fn parse_summary(text: &str) -> Result<RunSummary, serde_json::Error> {
    serde_json::from_str(text)
}
