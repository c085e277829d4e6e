//! Code-snippet generation, evolution, filtering, and ensembling.
//!
//! Snippets are abstain-capable programs in the rule mini-language (see
//! [`rules`]). Evolution branches each snippet on its validation errors
//! — one branch per single error plus one for the full error set — then
//! filters the population down to the most accurate survivors and
//! ensembles the top `m`.

pub mod rules;

pub use rules::{RuleProgram, RunOutcome, DEFAULT_STEP_BUDGET};

use std::collections::BTreeSet;

use crate::config::{render_task_profile, TaskKind, TaskSpec};
use crate::error::{Error, Result};
use crate::exec::ModuleVerdict;
use crate::prompts::{render_advice_prompt, render_code_prompt, render_fix_advice_prompt, render_fix_prompt};
use crate::provider::LanguageModel;
use crate::value::{fnv1a, Record, Value};

/// Abstain-rate ceiling above which a snippet is considered too costly
/// to keep: it would push nearly every record to the LLM anyway.
pub const COSTLY_ABSTAIN_LIMIT: f64 = 0.95;

/// Prompt rephrasings used to diversify initial snippet generation.
const REPHRASINGS: &[&str] = &[
    "",
    "Prefer simple, high-precision rules.",
    "Prefer broad-coverage rules.",
    "Focus on distinctive keywords in the inputs.",
];

/// One evolved code snippet.
#[derive(Debug, Clone)]
pub struct Snippet {
    pub id: String,
    pub source: String,
    /// `None` when the provider's code did not parse; such snippets are
    /// quarantined and always abstain.
    program: Option<RuleProgram>,
    pub lineage: Option<Lineage>,
}

/// Where a child snippet came from.
#[derive(Debug, Clone)]
pub struct Lineage {
    pub parent: String,
    pub advice: String,
    pub error_digest: u64,
}

impl Snippet {
    pub fn from_source(id: impl Into<String>, source: impl Into<String>) -> Snippet {
        let source = source.into();
        Snippet {
            id: id.into(),
            program: RuleProgram::parse(&source),
            source,
            lineage: None,
        }
    }

    pub fn run(&self, record: &Record, step_budget: usize) -> RunOutcome {
        match &self.program {
            Some(program) => program.run(record, step_budget),
            None => RunOutcome::Abstain,
        }
    }
}

/// Validation results for one snippet.
#[derive(Debug, Clone, PartialEq)]
pub struct SnippetScorecard {
    /// Validation indices the snippet answered correctly.
    pub correct_set: BTreeSet<usize>,
    pub answered: usize,
    pub abstain_count: usize,
    pub timeout_count: usize,
    /// Correct / answered; zero when the snippet answers nothing.
    pub accuracy: f64,
}

/// One validation error: the snippet answered and was wrong.
#[derive(Debug, Clone)]
pub struct ErrorCase {
    pub record: Record,
    pub expected: Value,
    pub produced: Option<Value>,
}

/// Evolution hyperparameters.
#[derive(Debug, Clone)]
pub struct EvolutionConfig {
    /// m: initial snippet count and final ensemble size.
    pub ensemble_size: usize,
    /// M: population cap after filtering.
    pub preserved: usize,
    /// T: iteration budget.
    pub iterations: usize,
    /// Advice requests per error subset when branching.
    pub advices_per_subset: usize,
    pub step_budget: usize,
}

impl EvolutionConfig {
    pub fn new(ensemble_size: usize, preserved: usize, iterations: usize) -> Self {
        Self {
            ensemble_size,
            preserved,
            iterations,
            advices_per_subset: 1,
            step_budget: DEFAULT_STEP_BUDGET,
        }
    }
}

/// Population state after evolution; the population is sorted by
/// descending accuracy, so the ensemble is its first `ensemble_size`
/// entries.
#[derive(Debug)]
pub struct EnsembleState {
    pub generation: usize,
    pub population: Vec<(Snippet, SnippetScorecard)>,
    pub config: EvolutionConfig,
}

impl EnsembleState {
    pub fn ensemble(&self) -> &[(Snippet, SnippetScorecard)] {
        &self.population[..self.config.ensemble_size.min(self.population.len())]
    }

    pub fn best_accuracy(&self) -> f64 {
        self.population.first().map(|(_, c)| c.accuracy).unwrap_or(0.0)
    }
}

fn answers_match(produced: &Value, expected: &Value) -> bool {
    produced.as_text().trim() == expected.as_text().trim()
}

/// Strip a surrounding markdown code fence, if any, from a provider's
/// code response.
fn extract_code(response: &str) -> String {
    let trimmed = response.trim();
    let Some(rest) = trimmed.strip_prefix("```") else {
        return trimmed.to_string();
    };
    let body = rest.split_once('\n').map(|(_, b)| b).unwrap_or("");
    body.trim_end()
        .strip_suffix("```")
        .unwrap_or(body)
        .trim()
        .to_string()
}

/// Generate `m` initial snippets, one per distinct (tool hint,
/// rephrasing) combination. Two provider calls per snippet: advice,
/// then code.
pub fn generate_initial_snippets(
    spec: &TaskSpec,
    provider: &dyn LanguageModel,
    m: usize,
) -> Result<Vec<Snippet>> {
    let mut snippets = Vec::with_capacity(m);
    for i in 0..m {
        let tool_hint = if spec.tools.is_empty() {
            "(no tools)".to_string()
        } else {
            format!("- {}", spec.tools[i % spec.tools.len()])
        };
        let rephrase = REPHRASINGS[(i / spec.tools.len().max(1)) % REPHRASINGS.len()];
        let mut profile = render_task_profile(spec, &[]);
        if !rephrase.is_empty() {
            profile.push_str(rephrase);
            profile.push('\n');
        }
        let advice = provider
            .complete(&render_advice_prompt(&profile, &tool_hint))?
            .response;
        let code = extract_code(
            &provider
                .complete(&render_code_prompt(&spec.task_api(), &profile, &tool_hint, &advice))?
                .response,
        );
        snippets.push(Snippet {
            id: format!("s{i}"),
            program: RuleProgram::parse(&code),
            source: code,
            lineage: None,
        });
    }
    Ok(snippets)
}

/// Score a snippet on the validation set. Abstentions are not errors.
pub fn verify_snippet(
    snippet: &Snippet,
    validation: &[(Record, Value)],
    step_budget: usize,
) -> SnippetScorecard {
    let mut correct_set = BTreeSet::new();
    let mut answered = 0usize;
    let mut abstain_count = 0usize;
    let mut timeout_count = 0usize;
    for (i, (record, expected)) in validation.iter().enumerate() {
        match snippet.run(record, step_budget) {
            RunOutcome::Answered(value) => {
                answered += 1;
                if answers_match(&value, expected) {
                    correct_set.insert(i);
                }
            }
            RunOutcome::Abstain => abstain_count += 1,
            RunOutcome::Timeout => timeout_count += 1,
        }
    }
    let accuracy = if answered > 0 {
        correct_set.len() as f64 / answered as f64
    } else {
        0.0
    };
    SnippetScorecard {
        correct_set,
        answered,
        abstain_count,
        timeout_count,
        accuracy,
    }
}

/// Wrong answers only, in validation order.
pub fn collect_errors(
    snippet: &Snippet,
    validation: &[(Record, Value)],
    step_budget: usize,
) -> Vec<ErrorCase> {
    validation
        .iter()
        .filter_map(|(record, expected)| match snippet.run(record, step_budget) {
            RunOutcome::Answered(value) if !answers_match(&value, expected) => Some(ErrorCase {
                record: record.clone(),
                expected: expected.clone(),
                produced: Some(value),
            }),
            _ => None,
        })
        .collect()
}

fn render_error_info(spec: &TaskSpec, errors: &[ErrorCase]) -> String {
    let mut out = String::new();
    for (i, e) in errors.iter().enumerate() {
        out.push_str(&format!("Error case #{i}:\nInputs:\n"));
        out.push_str(&crate::config::render_instance(spec, &e.record));
        out.push_str(&format!("Expected output: {}\n", e.expected.as_text()));
        match &e.produced {
            Some(v) => out.push_str(&format!("Produced output: {}\n", v.as_text())),
            None => out.push_str("Produced output: (none)\n"),
        }
    }
    out
}

fn errors_digest(errors: &[ErrorCase]) -> u64 {
    let mut text = String::new();
    for e in errors {
        text.push_str(&e.record.canonical());
        text.push_str(&e.expected.as_text());
        text.push('\n');
    }
    fnv1a(text.as_bytes())
}

/// Branch a snippet on its errors: one branch per single error plus one
/// for the full error set, times `advices_per_subset` advice requests.
/// Provider failures yield fewer children rather than an error.
pub fn branch_snippet(
    snippet: &Snippet,
    errors: &[ErrorCase],
    spec: &TaskSpec,
    provider: &dyn LanguageModel,
    advices_per_subset: usize,
    next_id: &mut usize,
) -> Vec<Snippet> {
    if errors.is_empty() {
        return Vec::new();
    }
    let profile = render_task_profile(spec, &[]);
    let api = spec.task_api();
    let mut subsets: Vec<Vec<&ErrorCase>> = errors.iter().map(|e| vec![e]).collect();
    subsets.push(errors.iter().collect());
    let mut children = Vec::new();
    for subset in subsets {
        let subset_owned: Vec<ErrorCase> = subset.into_iter().cloned().collect();
        let error_info = render_error_info(spec, &subset_owned);
        for variant in 0..advices_per_subset {
            let mut info = error_info.clone();
            if variant > 0 {
                info.push_str(&format!("Please give a different kind of advice (variant {variant}).\n"));
            }
            let advice = match provider.complete(&render_fix_advice_prompt(
                &api,
                &profile,
                &snippet.source,
                &info,
            )) {
                Ok(ex) => ex.response,
                Err(_) => continue,
            };
            let fixed = match provider.complete(&render_fix_prompt(
                &api,
                &profile,
                &snippet.source,
                &info,
                &advice,
            )) {
                Ok(ex) => extract_code(&ex.response),
                Err(_) => continue,
            };
            let id = format!("s{next_id}");
            *next_id += 1;
            children.push(Snippet {
                id,
                program: RuleProgram::parse(&fixed),
                source: fixed,
                lineage: Some(Lineage {
                    parent: snippet.id.clone(),
                    advice,
                    error_digest: errors_digest(&subset_owned),
                }),
            });
        }
    }
    children
}

/// Drop costly and dominated snippets, then keep the top-`preserved` by
/// accuracy. Ties break toward fewer abstentions, then the earlier
/// snippet. Returns the survivors sorted by descending accuracy.
pub fn filter_snippets(
    population: Vec<Snippet>,
    validation: &[(Record, Value)],
    preserved: usize,
    step_budget: usize,
) -> Vec<(Snippet, SnippetScorecard)> {
    let n = validation.len().max(1);
    let scored: Vec<(Snippet, SnippetScorecard)> = population
        .into_iter()
        .map(|s| {
            let card = verify_snippet(&s, validation, step_budget);
            (s, card)
        })
        .collect();
    // Costly: times out anywhere, or abstains on almost everything.
    let viable: Vec<(usize, &(Snippet, SnippetScorecard))> = scored
        .iter()
        .enumerate()
        .filter(|(_, (_, c))| {
            c.timeout_count == 0 && (c.abstain_count as f64 / n as f64) <= COSTLY_ABSTAIN_LIMIT
        })
        .collect();
    // Dominated: another viable snippet is correct on a strict superset.
    let mut kept: Vec<(usize, &(Snippet, SnippetScorecard))> = viable
        .iter()
        .filter(|(_, (_, c))| {
            !viable.iter().any(|(_, (_, other))| {
                other.correct_set.len() > c.correct_set.len()
                    && c.correct_set.is_subset(&other.correct_set)
            })
        })
        .cloned()
        .collect();
    kept.sort_by(|(ia, (_, a)), (ib, (_, b))| {
        b.accuracy
            .partial_cmp(&a.accuracy)
            .unwrap()
            .then(a.abstain_count.cmp(&b.abstain_count))
            .then(ia.cmp(ib))
    });
    kept.into_iter()
        .take(preserved)
        .map(|(_, pair)| pair.clone())
        .collect()
}

/// Run the full generate → (branch → filter)^T evolution, early-stopping
/// when a generation leaves the population unchanged.
pub fn evolve_ensemble(
    spec: &TaskSpec,
    provider: &dyn LanguageModel,
    validation: &[(Record, Value)],
    config: EvolutionConfig,
) -> Result<EnsembleState> {
    if validation.is_empty() {
        return Err(Error::EmptyValidation);
    }
    let initial = generate_initial_snippets(spec, provider, config.ensemble_size)?;
    let mut next_id = initial.len();
    let mut population = filter_snippets(initial, validation, config.preserved, config.step_budget);
    let mut generation = 0usize;
    for t in 1..=config.iterations {
        let mut children = Vec::new();
        for (snippet, _) in &population {
            let errors = collect_errors(snippet, validation, config.step_budget);
            children.extend(branch_snippet(
                snippet,
                &errors,
                spec,
                provider,
                config.advices_per_subset,
                &mut next_id,
            ));
        }
        if children.is_empty() {
            break;
        }
        let mut candidates: Vec<Snippet> =
            population.iter().map(|(s, _)| s.clone()).collect();
        candidates.extend(children);
        let next = filter_snippets(candidates, validation, config.preserved, config.step_budget);
        let unchanged = next.len() == population.len()
            && next
                .iter()
                .zip(&population)
                .all(|((a, _), (b, _))| a.id == b.id);
        population = next;
        generation = t;
        if unchanged {
            break;
        }
    }
    Ok(EnsembleState {
        generation,
        population,
        config,
    })
}

/// How votes are weighted in parallel ensembling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoteWeighting {
    Majority,
    AccuracyWeighted,
}

/// Vote among non-abstaining members; ties and unanimous abstention
/// fall back. Confidence is the winning share of the answered weight.
pub fn parallel_ensemble_execute(
    record: &Record,
    members: &[(Snippet, SnippetScorecard)],
    weighting: VoteWeighting,
    step_budget: usize,
) -> ModuleVerdict {
    let mut tallies: Vec<(String, f64)> = Vec::new();
    let mut total = 0.0;
    for (snippet, card) in members {
        if let RunOutcome::Answered(value) = snippet.run(record, step_budget) {
            let weight = match weighting {
                VoteWeighting::Majority => 1.0,
                VoteWeighting::AccuracyWeighted => card.accuracy,
            };
            if weight <= 0.0 {
                continue;
            }
            total += weight;
            let key = value.as_text();
            match tallies.iter_mut().find(|(k, _)| *k == key) {
                Some((_, w)) => *w += weight,
                None => tallies.push((key, weight)),
            }
        }
    }
    if tallies.is_empty() {
        return ModuleVerdict::Fallback;
    }
    tallies.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    if tallies.len() > 1 && (tallies[0].1 - tallies[1].1).abs() < 1e-12 {
        return ModuleVerdict::Fallback;
    }
    ModuleVerdict::Answered {
        value: Value::Text(tallies[0].0.clone()),
        confidence: tallies[0].1 / total,
    }
}

/// First non-abstaining member answers, with its validation accuracy as
/// confidence. Also reports how many members were executed.
pub fn sequential_ensemble_trace(
    record: &Record,
    members: &[(Snippet, SnippetScorecard)],
    step_budget: usize,
) -> (ModuleVerdict, usize) {
    for (i, (snippet, card)) in members.iter().enumerate() {
        if let RunOutcome::Answered(value) = snippet.run(record, step_budget) {
            return (
                ModuleVerdict::Answered {
                    value,
                    confidence: card.accuracy,
                },
                i + 1,
            );
        }
    }
    (ModuleVerdict::Fallback, members.len())
}

/// See [`sequential_ensemble_trace`].
pub fn sequential_ensemble_execute(
    record: &Record,
    members: &[(Snippet, SnippetScorecard)],
    step_budget: usize,
) -> ModuleVerdict {
    sequential_ensemble_trace(record, members, step_budget).0
}

/// Execute an evolved ensemble for one record. Classification tasks
/// vote in parallel; free-text tasks try members sequentially.
pub fn codegen_execute(
    record: &Record,
    state: &EnsembleState,
    task_kind: TaskKind,
) -> ModuleVerdict {
    let members = state.ensemble();
    match task_kind {
        TaskKind::Classification => parallel_ensemble_execute(
            record,
            members,
            VoteWeighting::Majority,
            state.config.step_budget,
        ),
        _ => sequential_ensemble_execute(record, members, state.config.step_budget),
    }
}
