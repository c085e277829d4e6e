//! Few-shot example selection for LLM prompts.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{ExampleRecord, TaskSpec};
use crate::error::{Error, Result};
use crate::exec::SampleMode;
use crate::provider::Embedder;
use crate::value::Record;

/// Choose `k` examples for the prompt.
///
/// `fixed` takes the first k in spec order, `random` draws a seeded
/// sample, `nearest` takes the k examples closest to the record by
/// cosine distance.
pub fn sample_few_shot_examples(
    spec: &TaskSpec,
    record: &Record,
    mode: SampleMode,
    k: usize,
    seed: u64,
    embedder: &dyn Embedder,
) -> Result<Vec<ExampleRecord>> {
    let available = spec.examples.len();
    if k > available {
        return Err(Error::NotEnoughExamples {
            want: k,
            have: available,
        });
    }
    match mode {
        SampleMode::Fixed => Ok(spec.examples[..k].to_vec()),
        SampleMode::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut indices: Vec<usize> = (0..available).collect();
            indices.shuffle(&mut rng);
            indices.truncate(k);
            indices.sort_unstable();
            Ok(indices.into_iter().map(|i| spec.examples[i].clone()).collect())
        }
        SampleMode::Nearest => {
            let query = embedder.embed(&record.canonical());
            let mut scored: Vec<(usize, f64)> = spec
                .examples
                .iter()
                .enumerate()
                .map(|(i, e)| {
                    let d = query.cosine_distance(&embedder.embed(&e.inputs.canonical()));
                    (i, d)
                })
                .collect();
            scored.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
            Ok(scored
                .into_iter()
                .take(k)
                .map(|(i, _)| spec.examples[i].clone())
                .collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::HashEmbedder;
    use crate::value::Value;

    fn spec_with_examples(n: usize) -> TaskSpec {
        let examples: Vec<serde_json::Value> = (0..n)
            .map(|i| {
                serde_json::json!({
                    "inputs": {"text": format!("example text {i}")},
                    "output": "1"
                })
            })
            .collect();
        crate::config::parse_config(
            &serde_json::json!({
                "task": {"name": "t", "description": "d"},
                "inputs": [{"name": "text", "kind": "text", "description": "d"}],
                "output": {"name": "o", "kind": {"categorical": ["0", "1"]}, "description": "d"},
                "examples": examples
            })
            .to_string(),
        )
        .unwrap()
    }

    #[test]
    fn fixed_takes_prefix() {
        let spec = spec_with_examples(5);
        let embedder = HashEmbedder::default();
        let record = Record::new().with("text", "q");
        let shots =
            sample_few_shot_examples(&spec, &record, SampleMode::Fixed, 3, 0, &embedder).unwrap();
        assert_eq!(shots, spec.examples[..3].to_vec());
    }

    #[test]
    fn nearest_puts_exact_match_first() {
        let spec = spec_with_examples(5);
        let embedder = HashEmbedder::default();
        let record = Record::new().with("text", "example text 3");
        let shots =
            sample_few_shot_examples(&spec, &record, SampleMode::Nearest, 2, 0, &embedder).unwrap();
        assert_eq!(
            shots[0].inputs.get("text"),
            Some(&Value::Text("example text 3".into()))
        );
    }

    #[test]
    fn random_is_seed_deterministic() {
        let spec = spec_with_examples(8);
        let embedder = HashEmbedder::default();
        let record = Record::new().with("text", "q");
        let a = sample_few_shot_examples(&spec, &record, SampleMode::Random, 4, 7, &embedder)
            .unwrap();
        let b = sample_few_shot_examples(&spec, &record, SampleMode::Random, 4, 7, &embedder)
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_examples_rejected() {
        let spec = spec_with_examples(2);
        let embedder = HashEmbedder::default();
        let record = Record::new().with("text", "q");
        assert!(matches!(
            sample_few_shot_examples(&spec, &record, SampleMode::Fixed, 3, 0, &embedder),
            Err(Error::NotEnoughExamples { .. })
        ));
    }
}
