//! Deterministic workload generators: labeled classification datasets,
//! near-duplicate record streams for cache experiments, and scripted
//! provider builders that answer those workloads correctly.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{ExampleRecord, FieldSpec, MetricKind, TaskSpec, ValueKind};
use crate::provider::SimulatedLlm;
use crate::value::{Record, Value};

const POSITIVE_PHRASES: [&str; 6] = [
    "an absolute delight from start to finish",
    "works great and arrived early",
    "exceeded every expectation I had",
    "superb quality for the price",
    "I would happily buy this again",
    "the best purchase I made this year",
];

const NEGATIVE_PHRASES: [&str; 6] = [
    "broke after two days of light use",
    "a complete waste of money",
    "arrived damaged and support ignored me",
    "far worse than the pictures suggest",
    "I regret ordering this at all",
    "the worst purchase I made this year",
];

const FILLERS: [&str; 5] = [
    "honestly,",
    "to be fair,",
    "after a week,",
    "in short,",
    "all things considered,",
];

/// A binary review-sentiment task. Labels are `negative` then
/// `positive`, so `positive` is the F1 positive class.
pub fn sentiment_spec(example_count: usize, seed: u64) -> TaskSpec {
    let examples = sentiment_dataset(example_count, seed)
        .into_iter()
        .map(|(inputs, label)| ExampleRecord {
            inputs,
            output: Some(label),
        })
        .collect();
    TaskSpec {
        name: "review-sentiment".to_string(),
        description: "Decide whether a product review is positive or negative.".to_string(),
        inputs: vec![FieldSpec {
            name: "review".to_string(),
            kind: ValueKind::Text,
            description: "the review text".to_string(),
        }],
        output: FieldSpec {
            name: "sentiment".to_string(),
            kind: ValueKind::Categorical(vec!["negative".to_string(), "positive".to_string()]),
            description: "the overall sentiment".to_string(),
        },
        hint: None,
        examples,
        metric: MetricKind::Accuracy,
        tools: Vec::new(),
    }
}

/// `n` labeled review records, half positive, interleaved
/// deterministically.
pub fn sentiment_dataset(n: usize, seed: u64) -> Vec<(Record, Value)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let positive = i % 2 == 0;
            let phrases: &[&str] = if positive {
                &POSITIVE_PHRASES
            } else {
                &NEGATIVE_PHRASES
            };
            let phrase = phrases[rng.gen_range(0..phrases.len())];
            let filler = FILLERS[rng.gen_range(0..FILLERS.len())];
            let text = format!("{filler} {phrase} (order {i})");
            let label = if positive { "positive" } else { "negative" };
            (Record::new().with("review", text), Value::from(label))
        })
        .collect()
}

/// Anchor a pattern to the query-instance section of a prompt, past any
/// few-shot examples that would otherwise also match it.
pub fn instance_anchored(pattern: &str) -> String {
    format!("(?s)Now consider the following instance.*{pattern}")
}

/// A language model that labels sentiment reviews correctly by keying on
/// the phrase pool within the prompt's query instance.
pub fn sentiment_oracle() -> SimulatedLlm {
    let anchored: Vec<(String, &str)> = POSITIVE_PHRASES
        .iter()
        .map(|p| (instance_anchored(&regex::escape(p)), "positive"))
        .chain(
            NEGATIVE_PHRASES
                .iter()
                .map(|p| (instance_anchored(&regex::escape(p)), "negative")),
        )
        .collect();
    let rules: Vec<(&str, &str)> = anchored
        .iter()
        .map(|(p, r)| (p.as_str(), *r))
        .collect();
    SimulatedLlm::new(rules, "negative")
}

/// A stream of `n` single-field records in which roughly
/// `duplicate_fraction` of the records are near-duplicates of a small
/// set of base sentences (long shared prefix, tiny unique suffix), and
/// the rest are unique.
pub fn near_duplicate_records(n: usize, duplicate_fraction: f64, seed: u64) -> Vec<Record> {
    assert!((0.0..=1.0).contains(&duplicate_fraction));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let duplicates = ((n as f64) * duplicate_fraction).round() as usize;
    let cluster_count = (duplicates / 8).max(1);
    let mut records = Vec::with_capacity(n);
    for c in 0..cluster_count {
        let base = base_sentence(c as u64, seed);
        let members = duplicates / cluster_count
            + usize::from(c < duplicates % cluster_count);
        for m in 0..members {
            // Same long body, one trailing token differs.
            records.push(Record::new().with("text", format!("{base} tag{m}")));
        }
    }
    for _ in 0..n.saturating_sub(duplicates) {
        // Random character content so unique records land far apart in
        // the n-gram embedding space.
        let words: Vec<String> = (0..8)
            .map(|_| {
                (0..rng.gen_range(4..9))
                    .map(|_| (b'a' + rng.gen_range(0..26u8)) as char)
                    .collect()
            })
            .collect();
        records.push(Record::new().with("text", words.join(" ")));
    }
    records.shuffle(&mut rng);
    records.truncate(n);
    records
}

fn base_sentence(index: u64, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9e3779b97f4a7c15));
    let subjects = ["the shipment", "the invoice", "the customer file", "the catalog entry"];
    let verbs = ["was reconciled against", "was compared with", "was merged into", "was matched to"];
    let objects = ["the quarterly ledger", "the master index", "the archive snapshot", "the audit trail"];
    format!(
        "cluster {index}: {} {} {} during routine processing",
        subjects[rng.gen_range(0..subjects.len())],
        verbs[rng.gen_range(0..verbs.len())],
        objects[rng.gen_range(0..objects.len())],
    )
}
