//! Plan execution: compile a plan into a running cascade, route records
//! through its stages with fallback, keep live per-stage statistics,
//! and re-optimize once enough new exchanges have accumulated. Also
//! houses the cache-replaying plan evaluator the optimizer searches
//! against.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::batching::{form_batches, parse_batched_response, render_batched_prompt, BatchStrategy};
use crate::cache::{CacheStore, ModuleIOKey};
use crate::codegen::{codegen_execute, evolve_ensemble, EnsembleState, EvolutionConfig};
use crate::config::{parse_output_value, ExampleRecord, TaskSpec};
use crate::error::{Error, Result};
use crate::exec::{
    cache_reuse_execute, llm_execute, modelgen_execute, modelgen_train, DistilledModel,
    ModuleConfig, ModuleKind, ModuleVerdict, SampleMode,
};
use crate::metrics;
use crate::optimizer::{
    plan_cost, reoptimize, OptimizeOutcome, OptimizerSettings, Plan, PlanEvaluator, PlanMetrics,
    StageMetrics, NON_LLM_STAGE_COST,
};
use crate::provider::{token_estimate, Embedder, LanguageModel, LlmExchange};
use crate::value::{Record, Value};

/// Few-shot budget for LLM prompts; capped at the configured examples.
pub const DEFAULT_NUM_SHOTS: usize = 4;

/// New cached exchanges required before a re-optimization fires.
pub const DEFAULT_REOPT_THRESHOLD: usize = 256;

/// When and how often the pipeline re-optimizes itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReoptPolicy {
    pub enabled: bool,
    pub new_exchange_threshold: usize,
}

impl Default for ReoptPolicy {
    fn default() -> Self {
        ReoptPolicy {
            enabled: false,
            new_exchange_threshold: DEFAULT_REOPT_THRESHOLD,
        }
    }
}

/// Live counters for one stage. `fallback_rate` and `cost_rate` are the
/// running estimates of the stage's fallback probability and per-record
/// provider cost.
#[derive(Debug, Default)]
pub struct ModuleStats {
    answered: AtomicU64,
    fallbacks: AtomicU64,
    provider_calls: AtomicU64,
}

impl ModuleStats {
    pub fn answered(&self) -> u64 {
        self.answered.load(Ordering::Relaxed)
    }

    pub fn fallbacks(&self) -> u64 {
        self.fallbacks.load(Ordering::Relaxed)
    }

    pub fn provider_calls(&self) -> u64 {
        self.provider_calls.load(Ordering::Relaxed)
    }

    fn seen(&self) -> u64 {
        self.answered() + self.fallbacks()
    }

    pub fn fallback_rate(&self) -> f64 {
        match self.seen() {
            0 => 0.0,
            n => self.fallbacks() as f64 / n as f64,
        }
    }

    pub fn cost_rate(&self) -> f64 {
        match self.seen() {
            0 => 0.0,
            n => self.provider_calls() as f64 / n as f64,
        }
    }

    pub fn snapshot(&self) -> ModuleStatsSnapshot {
        ModuleStatsSnapshot {
            answered: self.answered(),
            fallbacks: self.fallbacks(),
            provider_calls: self.provider_calls(),
            fallback_rate: self.fallback_rate(),
            cost_rate: self.cost_rate(),
        }
    }
}

/// A serializable point-in-time copy of [`ModuleStats`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleStatsSnapshot {
    pub answered: u64,
    pub fallbacks: u64,
    pub provider_calls: u64,
    pub fallback_rate: f64,
    pub cost_rate: f64,
}

enum StageExecutor {
    CacheReuse { distance_threshold: f64 },
    CodeGen { state: EnsembleState },
    ModelGen { model: DistilledModel, confidence_threshold: f64 },
    Llm { sample_mode: SampleMode },
}

/// A plan bound to its providers and ready to execute.
pub struct CompiledPipeline {
    pub plan: Plan,
    pub spec: TaskSpec,
    pub reopt: ReoptPolicy,
    pub stats: Vec<ModuleStats>,
    executors: Vec<StageExecutor>,
    llm: Arc<dyn LanguageModel>,
    embedder: Arc<dyn Embedder>,
    store: Arc<CacheStore>,
    seed: u64,
    /// Exchange count when this pipeline was (re)compiled; growth beyond
    /// the policy threshold triggers re-optimization.
    baseline_exchanges: u64,
}

/// What the cascade produced for one record. A plan whose stages all
/// fall back abstains; abstention is a value, not an error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RecordOutcome {
    Answered {
        value: Value,
        confidence: f64,
        /// Index of the answering stage.
        stage: usize,
    },
    Abstained,
}

impl RecordOutcome {
    pub fn value(&self) -> Option<&Value> {
        match self {
            RecordOutcome::Answered { value, .. } => Some(value),
            RecordOutcome::Abstained => None,
        }
    }
}

/// Rebuild a record from its canonical `name=value` line serialization.
pub fn record_from_canonical(text: &str) -> Record {
    let mut record = Record::new();
    for line in text.lines() {
        if let Some((name, value)) = line.split_once('=') {
            record = record.with(name, value);
        }
    }
    record
}

/// Train a distilled model on the pseudo-labels sitting in the cache:
/// every stored exchange whose response parses as the declared output
/// kind becomes one training pair.
pub fn train_from_cache(
    spec: &TaskSpec,
    store: &CacheStore,
    embedder: &dyn Embedder,
) -> Result<DistilledModel> {
    let mut examples = Vec::new();
    for cached in store.all_exchanges() {
        if let Ok(label) = parse_output_value(&cached.exchange.response, &spec.output.kind) {
            examples.push((record_from_canonical(&cached.record_text), label));
        }
    }
    if examples.is_empty() {
        return Err(Error::UntrainableModel);
    }
    modelgen_train(&examples, spec.task_kind(), embedder)
}

/// Build one executor per active stage of the plan, training the
/// distilled model and evolving the code ensemble where those stages
/// are present.
pub fn compile_pipeline(
    plan: &Plan,
    spec: &TaskSpec,
    llm: Arc<dyn LanguageModel>,
    embedder: Arc<dyn Embedder>,
    store: Arc<CacheStore>,
    reopt: ReoptPolicy,
    seed: u64,
) -> Result<CompiledPipeline> {
    let mut executors = Vec::new();
    let mut stages = Vec::new();
    for cfg in &plan.stages {
        if !cfg.activate() {
            continue;
        }
        let executor = match cfg {
            ModuleConfig::CacheReuse {
                distance_threshold, ..
            } => StageExecutor::CacheReuse {
                distance_threshold: *distance_threshold,
            },
            ModuleConfig::CodeGen {
                num_branches,
                num_preserved,
                num_iterations,
                ..
            } => {
                let validation = spec.labeled_examples();
                let state = evolve_ensemble(
                    spec,
                    llm.as_ref(),
                    &validation,
                    EvolutionConfig::new(*num_branches, *num_preserved, *num_iterations),
                )?;
                StageExecutor::CodeGen { state }
            }
            ModuleConfig::ModelGen {
                confidence_threshold,
                ..
            } => StageExecutor::ModelGen {
                model: train_from_cache(spec, &store, embedder.as_ref())?,
                confidence_threshold: *confidence_threshold,
            },
            ModuleConfig::Llm {
                examples_sample_mode,
                ..
            } => StageExecutor::Llm {
                sample_mode: *examples_sample_mode,
            },
        };
        executors.push(executor);
        stages.push(cfg.clone());
    }
    let stats = (0..executors.len()).map(|_| ModuleStats::default()).collect();
    let baseline_exchanges = store.exchange_count() as u64;
    Ok(CompiledPipeline {
        plan: Plan {
            stages,
            metrics: plan.metrics.clone(),
        },
        spec: spec.clone(),
        reopt,
        stats,
        executors,
        llm,
        embedder,
        store,
        seed,
        baseline_exchanges,
    })
}

impl CompiledPipeline {
    pub fn stage_count(&self) -> usize {
        self.executors.len()
    }

    pub fn store(&self) -> &CacheStore {
        &self.store
    }

    /// Index of the LLM stage, if the plan has one.
    fn llm_stage(&self) -> Option<usize> {
        self.executors
            .iter()
            .position(|e| matches!(e, StageExecutor::Llm { .. }))
    }

    fn run_stage(
        &self,
        index: usize,
        record: &Record,
        llm: &dyn LanguageModel,
    ) -> Result<ModuleVerdict> {
        let verdict = match &self.executors[index] {
            StageExecutor::CacheReuse { distance_threshold } => cache_reuse_execute(
                record,
                &self.spec,
                *distance_threshold,
                &self.store,
                self.embedder.as_ref(),
            )?,
            StageExecutor::CodeGen { state } => {
                codegen_execute(record, state, self.spec.task_kind())
            }
            StageExecutor::ModelGen {
                model,
                confidence_threshold,
            } => modelgen_execute(record, model, *confidence_threshold, self.embedder.as_ref()),
            StageExecutor::Llm { sample_mode } => {
                let before = llm.calls();
                let verdict = llm_execute(
                    record,
                    &self.spec,
                    *sample_mode,
                    DEFAULT_NUM_SHOTS,
                    self.seed,
                    llm,
                    Some(&self.store),
                    self.embedder.as_ref(),
                )?;
                self.stats[index]
                    .provider_calls
                    .fetch_add(llm.calls() - before, Ordering::Relaxed);
                verdict
            }
        };
        match &verdict {
            ModuleVerdict::Answered { .. } => {
                self.stats[index].answered.fetch_add(1, Ordering::Relaxed);
            }
            ModuleVerdict::Fallback => {
                self.stats[index].fallbacks.fetch_add(1, Ordering::Relaxed);
            }
        }
        Ok(verdict)
    }
}

/// Run one record through the cascade: stages execute in order until one
/// answers; the trace holds every verdict issued.
pub fn execute_record(
    pipeline: &CompiledPipeline,
    record: &Record,
) -> Result<(RecordOutcome, Vec<ModuleVerdict>)> {
    execute_record_with(pipeline, record, pipeline.llm.as_ref())
}

fn execute_record_with(
    pipeline: &CompiledPipeline,
    record: &Record,
    llm: &dyn LanguageModel,
) -> Result<(RecordOutcome, Vec<ModuleVerdict>)> {
    let mut trace = Vec::new();
    for i in 0..pipeline.executors.len() {
        let verdict = pipeline.run_stage(i, record, llm)?;
        trace.push(verdict.clone());
        if let ModuleVerdict::Answered { value, confidence } = verdict {
            return Ok((
                RecordOutcome::Answered {
                    value,
                    confidence,
                    stage: i,
                },
                trace,
            ));
        }
    }
    Ok((RecordOutcome::Abstained, trace))
}

/// Batching applied at the LLM stage of a dataset run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchingConfig {
    pub strategy: BatchStrategy,
    pub batch_size: usize,
}

/// Aggregate results of a dataset run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub n: usize,
    pub answered: usize,
    pub abstained: usize,
    /// Fraction of records that reached the LLM stage.
    pub llm_ratio: f64,
    pub provider_calls: u64,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub per_stage: Vec<ModuleStatsSnapshot>,
}

/// Counts prompt/response tokens flowing through the provider.
struct TokenMeter<'a> {
    inner: &'a dyn LanguageModel,
    tokens_in: AtomicU64,
    tokens_out: AtomicU64,
}

impl<'a> TokenMeter<'a> {
    fn new(inner: &'a dyn LanguageModel) -> Self {
        Self {
            inner,
            tokens_in: AtomicU64::new(0),
            tokens_out: AtomicU64::new(0),
        }
    }
}

impl LanguageModel for TokenMeter<'_> {
    fn complete(&self, prompt: &str) -> Result<LlmExchange> {
        let exchange = self.inner.complete(prompt)?;
        self.tokens_in
            .fetch_add(token_estimate(prompt) as u64, Ordering::Relaxed);
        self.tokens_out
            .fetch_add(token_estimate(&exchange.response) as u64, Ordering::Relaxed);
        Ok(exchange)
    }

    fn calls(&self) -> u64 {
        self.inner.calls()
    }
}

/// Run a whole dataset. With a batching config and an LLM stage in the
/// plan, records that fall through every earlier stage are answered in
/// batched prompts of at most `batch_size` instances; records whose
/// batched answer fails to parse are retried individually.
pub fn execute_dataset(
    pipeline: &CompiledPipeline,
    records: &[Record],
    batching: Option<BatchingConfig>,
) -> Result<(Vec<RecordOutcome>, RunSummary)> {
    let meter = TokenMeter::new(pipeline.llm.as_ref());
    let calls_before = pipeline.llm.calls();
    let n = records.len();
    let mut outcomes = vec![RecordOutcome::Abstained; n];
    let mut reached_llm = 0usize;

    match (batching, pipeline.llm_stage()) {
        (Some(cfg), Some(li)) => {
            let mut pending: Vec<usize> = Vec::new();
            for (ri, record) in records.iter().enumerate() {
                let mut answered = false;
                for i in 0..li {
                    let verdict = pipeline.run_stage(i, record, &meter)?;
                    if let ModuleVerdict::Answered { value, confidence } = verdict {
                        outcomes[ri] = RecordOutcome::Answered {
                            value,
                            confidence,
                            stage: i,
                        };
                        answered = true;
                        break;
                    }
                }
                if !answered {
                    pending.push(ri);
                }
            }
            reached_llm = pending.len();
            if !pending.is_empty() {
                run_llm_batched(pipeline, records, &pending, li, cfg, &meter, &mut outcomes)?;
            }
            // Post-LLM stages never run in batched mode: the LLM stage is
            // terminal in every plan the optimizer emits.
        }
        _ => {
            let li = pipeline.llm_stage();
            for (ri, record) in records.iter().enumerate() {
                let (outcome, trace) = execute_record_with(pipeline, record, &meter)?;
                if let Some(li) = li {
                    if trace.len() > li {
                        reached_llm += 1;
                    }
                }
                outcomes[ri] = outcome;
            }
        }
    }

    let answered = outcomes
        .iter()
        .filter(|o| matches!(o, RecordOutcome::Answered { .. }))
        .count();
    let summary = RunSummary {
        n,
        answered,
        abstained: n - answered,
        llm_ratio: if n == 0 {
            0.0
        } else {
            reached_llm as f64 / n as f64
        },
        provider_calls: pipeline.llm.calls() - calls_before,
        tokens_in: meter.tokens_in.load(Ordering::Relaxed),
        tokens_out: meter.tokens_out.load(Ordering::Relaxed),
        per_stage: pipeline.stats.iter().map(ModuleStats::snapshot).collect(),
    };
    Ok((outcomes, summary))
}

fn run_llm_batched(
    pipeline: &CompiledPipeline,
    records: &[Record],
    pending: &[usize],
    li: usize,
    cfg: BatchingConfig,
    meter: &TokenMeter<'_>,
    outcomes: &mut [RecordOutcome],
) -> Result<()> {
    let spec = &pipeline.spec;
    let sub: Vec<Record> = pending.iter().map(|&ri| records[ri].clone()).collect();
    let embeddings: Vec<_> = sub
        .iter()
        .map(|r| pipeline.embedder.embed(&r.canonical()))
        .collect();
    let batches = form_batches(&sub, &embeddings, cfg.strategy, cfg.batch_size, pipeline.seed);
    let shots: Vec<ExampleRecord> = spec
        .examples
        .iter()
        .take(DEFAULT_NUM_SHOTS)
        .cloned()
        .collect();
    for batch in &batches {
        let prompt = render_batched_prompt(spec, &shots, batch, &sub);
        let before = meter.calls();
        let exchange = meter.complete(&prompt)?;
        pipeline.stats[li]
            .provider_calls
            .fetch_add(meter.calls() - before, Ordering::Relaxed);
        for (local, parsed) in parse_batched_response(&exchange.response, batch, spec) {
            let ri = pending[local];
            match parsed {
                Ok(value) => {
                    let canonical = sub[local].canonical();
                    pipeline.store.put_exchange(
                        &canonical,
                        pipeline.embedder.embed(&canonical),
                        LlmExchange {
                            prompt: prompt.clone(),
                            response: value.as_text(),
                            token_count_in: token_estimate(&prompt),
                            token_count_out: token_estimate(&value.as_text()),
                        },
                    )?;
                    pipeline.stats[li].answered.fetch_add(1, Ordering::Relaxed);
                    outcomes[ri] = RecordOutcome::Answered {
                        value,
                        confidence: 1.0,
                        stage: li,
                    };
                }
                Err(_) => {
                    // Individual retry for the failed instance.
                    let verdict = pipeline.run_stage(li, &records[ri], meter)?;
                    if let ModuleVerdict::Answered { value, confidence } = verdict {
                        outcomes[ri] = RecordOutcome::Answered {
                            value,
                            confidence,
                            stage: li,
                        };
                    }
                }
            }
        }
    }
    Ok(())
}

/// Re-optimize when the cache has grown by at least the policy threshold
/// since this pipeline was compiled. Returns the replacement pipeline
/// and search outcome, or `None` when the policy does not fire. Swapping
/// in the replacement is the caller's record-boundary decision.
pub fn maybe_reoptimize(
    pipeline: &CompiledPipeline,
    prior: &OptimizeOutcome,
    settings: &OptimizerSettings,
    evaluator: &dyn PlanEvaluator,
) -> Result<Option<(CompiledPipeline, OptimizeOutcome)>> {
    if !pipeline.reopt.enabled {
        return Ok(None);
    }
    let threshold = pipeline.reopt.new_exchange_threshold.max(1) as u64;
    let grown = (pipeline.store.exchange_count() as u64).saturating_sub(pipeline.baseline_exchanges);
    if grown < threshold {
        return Ok(None);
    }
    let outcome = reoptimize(prior, settings, evaluator)?;
    let replacement = compile_pipeline(
        &outcome.chosen,
        &pipeline.spec,
        pipeline.llm.clone(),
        pipeline.embedder.clone(),
        pipeline.store.clone(),
        pipeline.reopt,
        pipeline.seed,
    )?;
    Ok(Some((replacement, outcome)))
}

/// Evaluates candidate plans by running them over a labeled validation
/// set, replaying recorded module verdicts from the cache so repeated
/// evaluations of the same stage configuration cost no provider calls.
pub struct CascadeEvaluator {
    spec: TaskSpec,
    validation: Vec<(Record, Value)>,
    llm: Arc<dyn LanguageModel>,
    embedder: Arc<dyn Embedder>,
    store: Arc<CacheStore>,
    seed: u64,
    /// Evolved ensembles, one per CodeGen parameterization.
    ensembles: Mutex<BTreeMap<u64, Arc<EnsembleState>>>,
}

impl CascadeEvaluator {
    pub fn new(
        spec: TaskSpec,
        validation: Vec<(Record, Value)>,
        llm: Arc<dyn LanguageModel>,
        embedder: Arc<dyn Embedder>,
        store: Arc<CacheStore>,
        seed: u64,
    ) -> Self {
        Self {
            spec,
            validation,
            llm,
            embedder,
            store,
            seed,
            ensembles: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn validation_size(&self) -> usize {
        self.validation.len()
    }

    pub fn store(&self) -> &CacheStore {
        &self.store
    }

    fn ensemble_for(&self, cfg: &ModuleConfig) -> Result<Arc<EnsembleState>> {
        let digest = cfg.params_digest();
        let mut cache = self.ensembles.lock().expect("ensemble cache lock");
        if let Some(state) = cache.get(&digest) {
            return Ok(state.clone());
        }
        let ModuleConfig::CodeGen {
            num_branches,
            num_preserved,
            num_iterations,
            ..
        } = cfg
        else {
            unreachable!("ensemble_for takes a CodeGen config");
        };
        let state = Arc::new(evolve_ensemble(
            &self.spec,
            self.llm.as_ref(),
            &self.validation,
            EvolutionConfig::new(*num_branches, *num_preserved, *num_iterations),
        )?);
        cache.insert(digest, state.clone());
        Ok(state)
    }

    fn stage_verdict(
        &self,
        cfg: &ModuleConfig,
        record: &Record,
        model: Option<&DistilledModel>,
    ) -> Result<ModuleVerdict> {
        let key = ModuleIOKey {
            module_id: cfg.kind().id().to_string(),
            params_digest: cfg.params_digest(),
            input_digest: record.digest(),
        };
        if let Some(verdict) = self.store.replay_module_io(&key) {
            return Ok(verdict);
        }
        let verdict = match cfg {
            ModuleConfig::CacheReuse {
                distance_threshold, ..
            } => cache_reuse_execute(
                record,
                &self.spec,
                *distance_threshold,
                &self.store,
                self.embedder.as_ref(),
            )?,
            ModuleConfig::CodeGen { .. } => {
                let state = self.ensemble_for(cfg)?;
                codegen_execute(record, &state, self.spec.task_kind())
            }
            ModuleConfig::ModelGen {
                confidence_threshold,
                ..
            } => match model {
                Some(model) => {
                    modelgen_execute(record, model, *confidence_threshold, self.embedder.as_ref())
                }
                // Nothing to train on yet: the stage answers nothing.
                None => ModuleVerdict::Fallback,
            },
            ModuleConfig::Llm {
                examples_sample_mode,
                ..
            } => llm_execute(
                record,
                &self.spec,
                *examples_sample_mode,
                DEFAULT_NUM_SHOTS,
                self.seed,
                self.llm.as_ref(),
                Some(&self.store),
                self.embedder.as_ref(),
            )?,
        };
        self.store.record_module_io(key, verdict.clone())?;
        Ok(verdict)
    }
}

impl PlanEvaluator for CascadeEvaluator {
    fn evaluate(&self, stages: &[ModuleConfig]) -> Result<PlanMetrics> {
        if self.validation.is_empty() {
            return Err(Error::EmptyValidation);
        }
        let active: Vec<&ModuleConfig> = stages.iter().filter(|c| c.activate()).collect();
        let model = if active.iter().any(|c| c.kind() == ModuleKind::ModelGen) {
            train_from_cache(&self.spec, &self.store, self.embedder.as_ref()).ok()
        } else {
            None
        };
        let mut reached = vec![0u64; active.len()];
        let mut fell = vec![0u64; active.len()];
        let mut pairs = Vec::with_capacity(self.validation.len());
        for (record, label) in &self.validation {
            let mut answer = None;
            for (i, cfg) in active.iter().enumerate() {
                reached[i] += 1;
                match self.stage_verdict(cfg, record, model.as_ref())? {
                    ModuleVerdict::Answered { value, .. } => {
                        answer = Some(value);
                        break;
                    }
                    ModuleVerdict::Fallback => fell[i] += 1,
                }
            }
            pairs.push((answer, label.clone()));
        }
        let stage_metrics: Vec<StageMetrics> = active
            .iter()
            .zip(reached.iter().zip(&fell))
            .map(|(cfg, (&r, &f))| StageMetrics {
                cost: if cfg.kind() == ModuleKind::Llm {
                    1.0
                } else {
                    NON_LLM_STAGE_COST
                },
                fallback: if r == 0 { 0.0 } else { f as f64 / r as f64 },
            })
            .collect();
        Ok(PlanMetrics {
            effectiveness: metrics::score(&self.spec, &pairs),
            cost: plan_cost(&stage_metrics),
            stages: stage_metrics,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::{HashEmbedder, SimulatedLlm};

    fn spec() -> TaskSpec {
        crate::config::parse_config(
            &serde_json::json!({
                "task": {"name": "annotate", "description": "Classify the text."},
                "inputs": [{"name": "text", "kind": "text", "description": "d"}],
                "output": {"name": "label", "kind": {"categorical": ["0", "1"]}, "description": "d"},
                "examples": [
                    {"inputs": {"text": "good example"}, "output": "1"},
                    {"inputs": {"text": "bad example"}, "output": "0"}
                ]
            })
            .to_string(),
        )
        .unwrap()
    }

    fn llm_cfg() -> ModuleConfig {
        ModuleConfig::Llm {
            activate: true,
            examples_sample_mode: SampleMode::Fixed,
        }
    }

    fn cache_cfg(threshold: f64) -> ModuleConfig {
        ModuleConfig::CacheReuse {
            activate: true,
            distance_threshold: threshold,
        }
    }

    fn plan(stages: Vec<ModuleConfig>) -> Plan {
        Plan {
            stages,
            metrics: PlanMetrics {
                effectiveness: 0.0,
                cost: 0.0,
                stages: Vec::new(),
            },
        }
    }

    fn pipeline(
        stages: Vec<ModuleConfig>,
        llm: Arc<dyn LanguageModel>,
        store: Arc<CacheStore>,
    ) -> CompiledPipeline {
        let embedder = Arc::new(HashEmbedder::default());
        compile_pipeline(
            &plan(stages),
            &spec(),
            llm,
            embedder,
            store,
            ReoptPolicy::default(),
            7,
        )
        .unwrap()
    }

    #[test]
    fn two_stage_plan_compiles_and_short_circuits() {
        let embedder = HashEmbedder::default();
        let llm = Arc::new(SimulatedLlm::new(vec![], "1"));
        let store = Arc::new(CacheStore::in_memory(embedder.dim()));
        let p = pipeline(vec![cache_cfg(0.3), llm_cfg()], llm.clone(), store.clone());
        assert_eq!(p.stage_count(), 2);

        let record = Record::new().with("text", "novel input");
        let (outcome, trace) = execute_record(&p, &record).unwrap();
        // Cold cache: falls through to the LLM.
        assert_eq!(trace.len(), 2);
        assert_eq!(
            outcome,
            RecordOutcome::Answered {
                value: Value::Text("1".into()),
                confidence: 1.0,
                stage: 1
            }
        );
        assert_eq!(llm.calls(), 1);

        // The exchange is now cached: an exact repeat answers at stage 0.
        let (outcome, trace) = execute_record(&p, &record).unwrap();
        assert_eq!(trace.len(), 1);
        assert!(matches!(outcome, RecordOutcome::Answered { stage: 0, .. }));
        assert_eq!(llm.calls(), 1);
    }

    #[test]
    fn modelgen_on_empty_cache_is_untrainable() {
        let embedder = Arc::new(HashEmbedder::default());
        let llm: Arc<dyn LanguageModel> = Arc::new(SimulatedLlm::new(vec![], "1"));
        let store = Arc::new(CacheStore::in_memory(embedder.dim()));
        let result = compile_pipeline(
            &plan(vec![
                ModuleConfig::ModelGen {
                    activate: true,
                    confidence_threshold: 0.5,
                },
                llm_cfg(),
            ]),
            &spec(),
            llm,
            embedder,
            store,
            ReoptPolicy::default(),
            7,
        );
        assert!(matches!(result, Err(Error::UntrainableModel)));
    }

    #[test]
    fn llm_free_plan_abstains() {
        let embedder = HashEmbedder::default();
        let llm = Arc::new(SimulatedLlm::new(vec![], "1"));
        let store = Arc::new(CacheStore::in_memory(embedder.dim()));
        let p = pipeline(vec![cache_cfg(0.1)], llm.clone(), store);
        let (outcome, trace) = execute_record(&p, &Record::new().with("text", "x")).unwrap();
        assert_eq!(outcome, RecordOutcome::Abstained);
        assert_eq!(trace, vec![ModuleVerdict::Fallback]);
        assert_eq!(llm.calls(), 0);
    }

    #[test]
    fn dataset_summary_accounts_for_calls_and_ratio() {
        let embedder = HashEmbedder::default();
        let llm = Arc::new(SimulatedLlm::new(vec![], "0"));
        let store = Arc::new(CacheStore::in_memory(embedder.dim()));
        let p = pipeline(vec![llm_cfg()], llm, store);
        let records: Vec<Record> = (0..10)
            .map(|i| Record::new().with("text", format!("record {i}")))
            .collect();
        let (outcomes, summary) = execute_dataset(&p, &records, None).unwrap();
        assert_eq!(outcomes.len(), 10);
        assert_eq!(summary.answered, 10);
        assert_eq!(summary.llm_ratio, 1.0);
        assert_eq!(summary.provider_calls, 10);
        assert_eq!(summary.per_stage[0].provider_calls, 10);
        assert!(summary.tokens_in > 0);
    }

    fn batched_default_response(size: usize) -> String {
        (1..=size)
            .map(|i| format!("Output #{i}: 0"))
            .collect::<Vec<_>>()
            .join("\n")
    }

    #[test]
    fn batched_run_makes_ceil_n_over_b_calls() {
        let embedder = HashEmbedder::default();
        let llm = Arc::new(SimulatedLlm::new(vec![], &batched_default_response(32)));
        let store = Arc::new(CacheStore::in_memory(embedder.dim()));
        let p = pipeline(vec![llm_cfg()], llm.clone(), store);
        let records: Vec<Record> = (0..64)
            .map(|i| Record::new().with("text", format!("record {i}")))
            .collect();
        let (outcomes, summary) = execute_dataset(
            &p,
            &records,
            Some(BatchingConfig {
                strategy: BatchStrategy::Rnd,
                batch_size: 32,
            }),
        )
        .unwrap();
        assert_eq!(summary.provider_calls, 2);
        assert_eq!(llm.calls(), 2);
        assert_eq!(summary.answered, 64);
        assert!(outcomes
            .iter()
            .all(|o| matches!(o, RecordOutcome::Answered { stage: 0, .. })));
    }

    #[test]
    fn empty_dataset_is_a_no_op() {
        let embedder = HashEmbedder::default();
        let llm = Arc::new(SimulatedLlm::new(vec![], "0"));
        let store = Arc::new(CacheStore::in_memory(embedder.dim()));
        let p = pipeline(vec![llm_cfg()], llm, store);
        let (outcomes, summary) = execute_dataset(&p, &[], None).unwrap();
        assert!(outcomes.is_empty());
        assert_eq!(summary.provider_calls, 0);
        assert_eq!(summary.llm_ratio, 0.0);
    }

    /// Validation pairs whose texts do not appear in the spec's few-shot
    /// examples, so substring-keyed scripted responses stay unambiguous.
    fn validation() -> Vec<(Record, Value)> {
        vec![
            (Record::new().with("text", "alpha item"), Value::Text("1".into())),
            (Record::new().with("text", "beta item"), Value::Text("0".into())),
        ]
    }

    #[test]
    fn evaluator_replays_repeat_evaluations_for_free() {
        let embedder: Arc<dyn Embedder> = Arc::new(HashEmbedder::default());
        let llm = Arc::new(SimulatedLlm::new(vec![("alpha", "1")], "0"));
        let store = Arc::new(CacheStore::in_memory(embedder.dim()));
        let evaluator = CascadeEvaluator::new(
            spec(),
            validation(),
            llm.clone(),
            embedder,
            store,
            7,
        );
        let stages = vec![llm_cfg()];
        let first = evaluator.evaluate(&stages).unwrap();
        let after_first = llm.calls();
        assert_eq!(after_first, 2);
        assert_eq!(first.effectiveness, 1.0);
        let second = evaluator.evaluate(&stages).unwrap();
        assert_eq!(llm.calls(), after_first, "replay must avoid the provider");
        assert_eq!(first, second);
    }

    #[test]
    fn evaluator_measures_fallback_rates_per_stage() {
        let embedder: Arc<dyn Embedder> = Arc::new(HashEmbedder::default());
        let llm = Arc::new(SimulatedLlm::new(vec![("alpha", "1")], "0"));
        let store = Arc::new(CacheStore::in_memory(embedder.dim()));
        let evaluator = CascadeEvaluator::new(spec(), validation(), llm, embedder, store, 7);
        // Cold cache plus a tight threshold: the cache-reuse stage falls
        // back on everything, including the second record after the
        // first record's exchange lands in the cache.
        let metrics = evaluator
            .evaluate(&[cache_cfg(0.05), llm_cfg()])
            .unwrap();
        assert_eq!(metrics.stages[0].fallback, 1.0);
        assert_eq!(metrics.stages[0].cost, NON_LLM_STAGE_COST);
        assert_eq!(metrics.stages[1].cost, 1.0);
        assert!((metrics.cost - (NON_LLM_STAGE_COST + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn reopt_fires_only_at_threshold() {
        let embedder: Arc<dyn Embedder> = Arc::new(HashEmbedder::default());
        let llm: Arc<dyn LanguageModel> = Arc::new(SimulatedLlm::new(vec![("alpha", "1")], "0"));
        let store = Arc::new(CacheStore::in_memory(embedder.dim()));
        let evaluator = CascadeEvaluator::new(
            spec(),
            validation(),
            llm.clone(),
            embedder.clone(),
            store.clone(),
            7,
        );
        let settings = OptimizerSettings {
            grids: crate::optimizer::Grids {
                code_gen: Vec::new(),
                model_gen: Vec::new(),
                ..Default::default()
            },
            ..Default::default()
        };
        let prior =
            crate::optimizer::specialized_optimize(&settings, &evaluator, None).unwrap();
        let reopt = ReoptPolicy {
            enabled: true,
            new_exchange_threshold: 3,
        };
        // A fixed LLM-bearing plan so novel records grow the cache; the
        // optimizer may well have chosen a cache-only plan here.
        let p = compile_pipeline(
            &plan(vec![llm_cfg()]),
            &spec(),
            llm.clone(),
            embedder.clone(),
            store.clone(),
            reopt,
            7,
        )
        .unwrap();
        // Below threshold: two new exchanges.
        for i in 0..2 {
            let _ = execute_record(&p, &Record::new().with("text", format!("novel {i}"))).unwrap();
        }
        assert!(maybe_reoptimize(&p, &prior, &settings, &evaluator)
            .unwrap()
            .is_none());
        // One more crosses the threshold.
        let _ = execute_record(&p, &Record::new().with("text", "novel 2")).unwrap();
        let fired = maybe_reoptimize(&p, &prior, &settings, &evaluator).unwrap();
        let (replacement, _) = fired.expect("re-optimization fires at the threshold");
        // The replacement pipeline's baseline resets the counter.
        assert!(maybe_reoptimize(&replacement, &prior, &settings, &evaluator)
            .unwrap()
            .is_none());
    }

    #[test]
    fn canonical_round_trip() {
        let record = Record::new().with("a", "x=y").with("b", "2");
        let parsed = record_from_canonical(&record.canonical());
        assert_eq!(parsed.get("a"), Some(&Value::Text("x=y".into())));
        assert_eq!(record.canonical(), parsed.canonical());
    }
}
