//! Confidence formulas for the distilled-model module.

use crate::error::{Error, Result};

/// Confidence of a K-way classification prediction:
/// `(K * max_i p_i - 1) / (K - 1)`, in [0, 1].
pub fn classification_confidence(dist: &[f64]) -> Result<f64> {
    let k = dist.len();
    if k < 2 {
        return Err(Error::BadDistribution(format!(
            "need at least 2 classes, got {k}"
        )));
    }
    if dist.iter().any(|p| *p < 0.0) {
        return Err(Error::BadDistribution("negative probability".into()));
    }
    let sum: f64 = dist.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::BadDistribution(format!("sum {sum} != 1")));
    }
    let max = dist.iter().cloned().fold(f64::MIN, f64::max);
    Ok((k as f64 * max - 1.0) / (k as f64 - 1.0))
}

/// Inverse perplexity of a generated sequence: the geometric mean of
/// the per-token probabilities, in (0, 1].
pub fn seq2seq_confidence(token_probs: &[f64]) -> Result<f64> {
    if token_probs.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mut log_sum = 0.0;
    for &p in token_probs {
        if p <= 0.0 || p > 1.0 {
            return Err(Error::NonPositiveProb(p));
        }
        log_sum += p.ln();
    }
    Ok((log_sum / token_probs.len() as f64).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn certain_prediction() {
        assert!((classification_confidence(&[1.0, 0.0]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_prediction() {
        assert!(classification_confidence(&[0.5, 0.5]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn four_way_hand_value() {
        // (4 * 0.4 - 1) / 3 = 0.2
        let c = classification_confidence(&[0.4, 0.3, 0.2, 0.1]).unwrap();
        assert!((c - 0.2).abs() < 1e-12);
    }

    #[test]
    fn bad_distributions_rejected() {
        assert!(classification_confidence(&[1.0]).is_err());
        assert!(classification_confidence(&[0.7, 0.7]).is_err());
        assert!(classification_confidence(&[-0.1, 1.1]).is_err());
    }

    #[test]
    fn perfect_sequence() {
        assert!((seq2seq_confidence(&[1.0, 1.0, 1.0]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn half_probability_tokens() {
        // exp(-mean log 0.5) = 2, inverse = 0.5.
        assert!((seq2seq_confidence(&[0.5, 0.5]).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn geometric_mean_identity() {
        // sqrt(1.0 * 0.25) = 0.5.
        assert!((seq2seq_confidence(&[1.0, 0.25]).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn degenerate_sequences_rejected() {
        assert!(matches!(seq2seq_confidence(&[]), Err(Error::EmptySequence)));
        assert!(matches!(
            seq2seq_confidence(&[0.5, 0.0]),
            Err(Error::NonPositiveProb(_))
        ));
    }
}
