//! Answering from previously cached exchanges by vector similarity.

use crate::cache::CacheStore;
use crate::config::{parse_output_value, TaskSpec};
use crate::error::Result;
use crate::exec::ModuleVerdict;
use crate::provider::Embedder;
use crate::value::Record;

/// Answer from the nearest cached exchange when its distance is within
/// the threshold; otherwise fall back. Never touches a provider.
///
/// Confidence is `1 - distance / threshold`, clamped to [0, 1], so an
/// exact repeat scores 1 and a borderline hit scores 0.
pub fn cache_reuse_execute(
    record: &Record,
    spec: &TaskSpec,
    distance_threshold: f64,
    store: &CacheStore,
    embedder: &dyn Embedder,
) -> Result<ModuleVerdict> {
    let query = embedder.embed(&record.canonical());
    let nearest = store.nearest(&query, 1)?;
    let Some((hit, distance)) = nearest.into_iter().next() else {
        return Ok(ModuleVerdict::Fallback);
    };
    if distance > distance_threshold {
        return Ok(ModuleVerdict::Fallback);
    }
    let Ok(value) = parse_output_value(&hit.exchange.response, &spec.output.kind) else {
        return Ok(ModuleVerdict::Fallback);
    };
    let confidence = if distance_threshold > 0.0 {
        (1.0 - distance / distance_threshold).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(ModuleVerdict::Answered { value, confidence })
}
