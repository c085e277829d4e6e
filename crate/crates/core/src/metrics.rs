//! Task scoring: accuracy and F1 against labeled validation data.

use crate::config::{MetricKind, TaskSpec, ValueKind};
use crate::value::Value;

fn matches(predicted: &Value, expected: &Value) -> bool {
    predicted.as_text().trim() == expected.as_text().trim()
}

/// Fraction of records answered correctly; unanswered records count as
/// wrong.
pub fn accuracy(pairs: &[(Option<Value>, Value)]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let correct = pairs
        .iter()
        .filter(|(p, e)| p.as_ref().is_some_and(|p| matches(p, e)))
        .count();
    correct as f64 / pairs.len() as f64
}

/// F1 of the positive class; unanswered records are negatives.
pub fn f1(pairs: &[(Option<Value>, Value)], positive: &str) -> f64 {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (predicted, expected) in pairs {
        let actual_pos = expected.as_text().trim() == positive;
        let predicted_pos = predicted
            .as_ref()
            .is_some_and(|p| p.as_text().trim() == positive);
        match (predicted_pos, actual_pos) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    if tp == 0 {
        return 0.0;
    }
    let precision = tp as f64 / (tp + fp) as f64;
    let recall = tp as f64 / (tp + fn_) as f64;
    2.0 * precision * recall / (precision + recall)
}

/// The positive class for F1 scoring: the second declared label of a
/// binary categorical output (matching the convention that "1" follows
/// "0" in match/no-match tasks).
pub fn positive_label(spec: &TaskSpec) -> Option<&str> {
    match &spec.output.kind {
        ValueKind::Categorical(labels) if labels.len() == 2 => Some(labels[1].as_str()),
        _ => None,
    }
}

/// Score per the task's declared metric.
pub fn score(spec: &TaskSpec, pairs: &[(Option<Value>, Value)]) -> f64 {
    match spec.metric {
        MetricKind::Accuracy => accuracy(pairs),
        MetricKind::F1 => match positive_label(spec) {
            Some(positive) => f1(pairs, positive),
            None => accuracy(pairs),
        },
    }
}
