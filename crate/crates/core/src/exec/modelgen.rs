//! The distilled-model module: small desk-scale learners trained on
//! pseudo-labeled exchanges.
//!
//! Classification uses per-class embedding centroids, seq2seq uses
//! nearest-neighbor label retrieval, regression uses distance-weighted
//! averaging of neighbor labels. All three are deterministic given the
//! training set order and admit a neural backend behind the same
//! interface.

use serde::{Deserialize, Serialize};

use crate::config::TaskKind;
use crate::error::{Error, Result};
use crate::exec::{classification_confidence, ModuleVerdict};
use crate::provider::{Embedder, Embedding};
use crate::value::{Record, Value};

const REGRESSION_NEIGHBORS: usize = 5;
/// Softmax temperature turning centroid similarities into a distribution.
const CENTROID_TEMPERATURE: f64 = 0.1;

#[derive(Debug, Clone, Serialize, Deserialize)]
enum ModelState {
    Centroids(Vec<(String, Embedding)>),
    Neighbors(Vec<(Embedding, String)>),
    NumericNeighbors(Vec<(Embedding, f64)>),
}

/// A trained distilled model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistilledModel {
    pub kind: TaskKind,
    state: ModelState,
    pub training_size: usize,
}

/// Train a distilled model from (record, pseudo-label) pairs.
///
/// Exact duplicate pairs are dropped first, so a duplicated training set
/// yields the same model as its deduplicated form.
pub fn modelgen_train(
    examples: &[(Record, Value)],
    kind: TaskKind,
    embedder: &dyn Embedder,
) -> Result<DistilledModel> {
    if examples.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let mut seen = std::collections::HashSet::new();
    let mut unique: Vec<(&Record, String)> = Vec::new();
    for (record, label) in examples {
        let key = (record.canonical(), label.as_text());
        if seen.insert(key.clone()) {
            unique.push((record, key.1));
        }
    }
    let embedded: Vec<(Embedding, String)> = unique
        .iter()
        .map(|(r, label)| (embedder.embed(&r.canonical()), label.clone()))
        .collect();

    let state = match kind {
        TaskKind::Classification => {
            let mut by_class: Vec<(String, Vec<&Embedding>)> = Vec::new();
            for (embedding, label) in &embedded {
                match by_class.iter_mut().find(|(l, _)| l == label) {
                    Some((_, members)) => members.push(embedding),
                    None => by_class.push((label.clone(), vec![embedding])),
                }
            }
            let centroids = by_class
                .into_iter()
                .map(|(label, members)| (label, centroid(&members)))
                .collect();
            ModelState::Centroids(centroids)
        }
        TaskKind::Seq2Seq => ModelState::Neighbors(embedded),
        TaskKind::Regression => {
            let mut numeric = Vec::new();
            for (embedding, label) in embedded {
                let value = label.trim().parse::<f64>().map_err(|_| Error::KindMismatch(
                    format!("regression label {label:?} is not numeric"),
                ))?;
                numeric.push((embedding, value));
            }
            ModelState::NumericNeighbors(numeric)
        }
    };
    Ok(DistilledModel {
        kind,
        state,
        training_size: examples.len(),
    })
}

fn centroid(members: &[&Embedding]) -> Embedding {
    let dim = members[0].dim();
    let mut sum = vec![0.0f32; dim];
    for m in members {
        for (s, v) in sum.iter_mut().zip(&m.values) {
            *s += v;
        }
    }
    let norm: f32 = sum.iter().map(|v| v * v).sum::<f32>().sqrt();
    if norm > 0.0 {
        for v in sum.iter_mut() {
            *v /= norm;
        }
    }
    Embedding { values: sum }
}

impl DistilledModel {
    /// Predict a value and a confidence for one record.
    pub fn predict(&self, record: &Record, embedder: &dyn Embedder) -> (Value, f64) {
        let query = embedder.embed(&record.canonical());
        match &self.state {
            ModelState::Centroids(centroids) => {
                if centroids.len() == 1 {
                    return (Value::Text(centroids[0].0.clone()), 1.0);
                }
                let sims: Vec<f64> = centroids
                    .iter()
                    .map(|(_, c)| 1.0 - query.cosine_distance(c))
                    .collect();
                let dist = softmax(&sims, CENTROID_TEMPERATURE);
                let best = dist
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(i, _)| i)
                    .unwrap();
                let confidence =
                    classification_confidence(&dist).expect("softmax output is a distribution");
                (Value::Text(centroids[best].0.clone()), confidence)
            }
            ModelState::Neighbors(neighbors) => {
                let (label, distance) = neighbors
                    .iter()
                    .map(|(e, l)| (l, query.cosine_distance(e)))
                    .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                    .map(|(l, d)| (l.clone(), d))
                    .expect("training set non-empty");
                (Value::Text(label), (1.0 - distance / 2.0).clamp(0.0, 1.0))
            }
            ModelState::NumericNeighbors(neighbors) => {
                let mut scored: Vec<(f64, f64)> = neighbors
                    .iter()
                    .map(|(e, v)| (query.cosine_distance(e), *v))
                    .collect();
                scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                scored.truncate(REGRESSION_NEIGHBORS);
                let mut weight_sum = 0.0;
                let mut value_sum = 0.0;
                let mut dist_sum = 0.0;
                for (d, v) in &scored {
                    let w = 1.0 / (d + 1e-6);
                    weight_sum += w;
                    value_sum += w * v;
                    dist_sum += d;
                }
                let mean_dist = dist_sum / scored.len() as f64;
                (
                    Value::Number(value_sum / weight_sum),
                    (1.0 - mean_dist / 2.0).clamp(0.0, 1.0),
                )
            }
        }
    }

    /// Class labels known to a classification model.
    pub fn class_count(&self) -> usize {
        match &self.state {
            ModelState::Centroids(c) => c.len(),
            _ => 0,
        }
    }
}

fn softmax(scores: &[f64], temperature: f64) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::MIN, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| ((s - max) / temperature).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Answer iff the model's confidence reaches the threshold.
pub fn modelgen_execute(
    record: &Record,
    model: &DistilledModel,
    confidence_threshold: f64,
    embedder: &dyn Embedder,
) -> ModuleVerdict {
    let (value, confidence) = model.predict(record, embedder);
    if confidence >= confidence_threshold {
        ModuleVerdict::Answered { value, confidence }
    } else {
        ModuleVerdict::Fallback
    }
}
