//! The terminal LLM module: one prompt, one provider call, one answer.

use crate::cache::CacheStore;
use crate::config::{parse_output_value, TaskSpec};
use crate::error::Result;
use crate::exec::{sample_few_shot_examples, ModuleVerdict, SampleMode};
use crate::prompts::render_llm_query;
use crate::provider::{Embedder, LanguageModel};
use crate::value::Record;

/// Query the language model for one record.
///
/// The exchange is written into `store` so later cache-reuse stages can
/// answer repeats without a provider call. A response that does not
/// parse as the declared output kind yields a fallback rather than an
/// error, leaving the record unanswered.
#[allow(clippy::too_many_arguments)]
pub fn llm_execute(
    record: &Record,
    spec: &TaskSpec,
    sample_mode: SampleMode,
    num_shots: usize,
    seed: u64,
    llm: &dyn LanguageModel,
    store: Option<&CacheStore>,
    embedder: &dyn Embedder,
) -> Result<ModuleVerdict> {
    let shots = if num_shots == 0 {
        Vec::new()
    } else {
        sample_few_shot_examples(
            spec,
            record,
            sample_mode,
            num_shots.min(spec.examples.len()),
            seed,
            embedder,
        )?
    };
    let prompt = render_llm_query(spec, &shots, record);
    let exchange = llm.complete(&prompt)?;
    let response = exchange.response.clone();
    if let Some(store) = store {
        let canonical = record.canonical();
        store.put_exchange(&canonical, embedder.embed(&canonical), exchange)?;
    }
    match parse_output_value(&response, &spec.output.kind) {
        Ok(value) => Ok(ModuleVerdict::Answered {
            value,
            confidence: 1.0,
        }),
        Err(_) => Ok(ModuleVerdict::Fallback),
    }
}
