//! Query batching: merge many instances into one prompt sharing a
//! single task profile, and parse the numbered responses back out.
//!
//! Five composition strategies are supported. All of them partition the
//! input into exactly ⌈n/B⌉ batches; they differ only in which records
//! share a prompt.

use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{parse_output_value, render_instance, ExampleRecord, TaskSpec};
use crate::error::{Error, Result};
use crate::prompts::render_batched_query;
use crate::provider::Embedding;
use crate::value::{Record, Value};

/// How records are grouped into batches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchStrategy {
    /// Seeded shuffle, then chunk.
    Rnd,
    /// B-way balanced clustering; each batch takes one member per cluster.
    Div,
    /// ⌈n/B⌉-way balanced clustering; each cluster is a batch.
    Prx,
    /// Greedy farthest-point accretion from a seeded start.
    Far,
    /// Greedy nearest-point accretion from a seeded start.
    Cls,
}

impl FromStr for BatchStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rnd" => Ok(BatchStrategy::Rnd),
            "div" => Ok(BatchStrategy::Div),
            // SIM appears as an alias for proximal batching.
            "prx" | "sim" => Ok(BatchStrategy::Prx),
            "far" => Ok(BatchStrategy::Far),
            "cls" => Ok(BatchStrategy::Cls),
            other => Err(Error::InvalidConfig(format!("unknown batch strategy {other:?}"))),
        }
    }
}

/// One batch: original record indices, in prompt order.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub members: Vec<usize>,
}

/// Partition `records` into ⌈n/B⌉ batches of size ≤ B.
pub fn form_batches(
    records: &[Record],
    embeddings: &[Embedding],
    strategy: BatchStrategy,
    batch_size: usize,
    seed: u64,
) -> Vec<Batch> {
    assert!(batch_size >= 1);
    let n = records.len();
    if n == 0 {
        return Vec::new();
    }
    let num_batches = n.div_ceil(batch_size);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match strategy {
        BatchStrategy::Rnd => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            order
                .chunks(batch_size)
                .map(|chunk| Batch {
                    members: chunk.to_vec(),
                })
                .collect()
        }
        BatchStrategy::Div => {
            let clusters = balanced_clusters(embeddings, batch_size.min(n), &mut rng);
            // Batch j holds the j-th member of every cluster.
            let rounds = clusters.iter().map(Vec::len).max().unwrap_or(0);
            let mut batches: Vec<Batch> = (0..rounds).map(|_| Batch { members: Vec::new() }).collect();
            for cluster in &clusters {
                for (j, &idx) in cluster.iter().enumerate() {
                    batches[j].members.push(idx);
                }
            }
            batches.retain(|b| !b.members.is_empty());
            batches
        }
        BatchStrategy::Prx => balanced_clusters(embeddings, num_batches, &mut rng)
            .into_iter()
            .map(|members| Batch { members })
            .collect(),
        BatchStrategy::Far | BatchStrategy::Cls => {
            let farthest = strategy == BatchStrategy::Far;
            let mut remaining: Vec<usize> = (0..n).collect();
            let mut batches = Vec::new();
            while !remaining.is_empty() {
                let start_pos = rng.gen_range(0..remaining.len());
                let mut members = vec![remaining.swap_remove(start_pos)];
                while members.len() < batch_size && !remaining.is_empty() {
                    let (pos, _) = remaining
                        .iter()
                        .enumerate()
                        .map(|(pos, &idx)| {
                            let nearest = members
                                .iter()
                                .map(|&m| embeddings[idx].cosine_distance(&embeddings[m]))
                                .fold(f64::INFINITY, f64::min);
                            (pos, nearest)
                        })
                        .reduce(|best, cand| {
                            let better = if farthest {
                                cand.1 > best.1
                            } else {
                                cand.1 < best.1
                            };
                            if better { cand } else { best }
                        })
                        .unwrap();
                    members.push(remaining.swap_remove(pos));
                }
                batches.push(Batch { members });
            }
            batches
        }
    }
}

/// Balanced k-means: greedy size-capped assignment, 20 iterations.
/// Cluster sizes differ by at most one.
fn balanced_clusters(
    embeddings: &[Embedding],
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<usize>> {
    let n = embeddings.len();
    let k = k.min(n).max(1);
    let base = n / k;
    let extras = n % k;
    let cap = |cluster: usize| base + usize::from(cluster < extras);

    let mut centroid_seed: Vec<usize> = (0..n).collect();
    centroid_seed.shuffle(rng);
    let mut centroids: Vec<Vec<f64>> = centroid_seed[..k]
        .iter()
        .map(|&i| embeddings[i].values.iter().map(|v| f64::from(*v)).collect())
        .collect();

    let mut assignment = vec![0usize; n];
    for _ in 0..20 {
        // Greedy assignment: closest (point, cluster) pairs first,
        // respecting size caps.
        let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * k);
        for i in 0..n {
            for (c, centroid) in centroids.iter().enumerate() {
                let d = centroid_distance(&embeddings[i], centroid);
                pairs.push((d, i, c));
            }
        }
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut sizes = vec![0usize; k];
        let mut placed = vec![false; n];
        let mut next = assignment.clone();
        for (_, i, c) in pairs {
            if placed[i] || sizes[c] >= cap(c) {
                continue;
            }
            placed[i] = true;
            sizes[c] = sizes[c] + 1;
            next[i] = c;
        }
        let converged = next == assignment;
        assignment = next;
        // Centroid update: mean of members.
        for (c, centroid) in centroids.iter_mut().enumerate() {
            let members: Vec<usize> = (0..n).filter(|&i| assignment[i] == c).collect();
            if members.is_empty() {
                continue;
            }
            for (d, slot) in centroid.iter_mut().enumerate() {
                *slot = members
                    .iter()
                    .map(|&i| f64::from(embeddings[i].values[d]))
                    .sum::<f64>()
                    / members.len() as f64;
            }
        }
        if converged {
            break;
        }
    }
    let mut clusters = vec![Vec::new(); k];
    for (i, &c) in assignment.iter().enumerate() {
        clusters[c].push(i);
    }
    clusters.retain(|c| !c.is_empty());
    clusters
}

fn centroid_distance(e: &Embedding, centroid: &[f64]) -> f64 {
    // Squared euclidean; monotone with cosine distance on unit vectors.
    e.values
        .iter()
        .zip(centroid)
        .map(|(a, b)| {
            let d = f64::from(*a) - b;
            d * d
        })
        .sum()
}

/// Render one batched prompt: the task profile once, then the batch's
/// instances numbered from 1.
pub fn render_batched_prompt(
    spec: &TaskSpec,
    shots: &[ExampleRecord],
    batch: &Batch,
    records: &[Record],
) -> String {
    let mut instances = String::new();
    for (i, &idx) in batch.members.iter().enumerate() {
        instances.push_str(&format!("Instance #{}:\n", i + 1));
        instances.push_str(&render_instance(spec, &records[idx]));
    }
    render_batched_query(spec, shots, &instances)
}

/// Parse a batched response back into per-record values, keyed by the
/// 1-based instance number. Missing or malformed lines produce
/// per-index failures, never a batch-wide one.
pub fn parse_batched_response(
    text: &str,
    batch: &Batch,
    spec: &TaskSpec,
) -> Vec<(usize, Result<Value>)> {
    let re = regex::Regex::new(r"(?m)^Output #(\d+):\s*(.*)$").unwrap();
    let mut found: Vec<(usize, String)> = Vec::new();
    for caps in re.captures_iter(text) {
        if let Ok(number) = caps[1].parse::<usize>() {
            found.push((number, caps[2].trim().to_string()));
        }
    }
    batch
        .members
        .iter()
        .enumerate()
        .map(|(i, &idx)| {
            let number = i + 1;
            let value = match found.iter().find(|(n, _)| *n == number) {
                Some((_, raw)) => parse_output_value(raw, &spec.output.kind),
                None => Err(Error::ParseFailure {
                    response: format!("no line for Output #{number}"),
                    kind: "batched response".into(),
                }),
            };
            (idx, value)
        })
        .collect()
}
