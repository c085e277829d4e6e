//! Executor modules behind one verdict contract.
//!
//! Every executor either answers with a confidence or falls back, and
//! the cascade routes records onward on fallback.

mod cache_reuse;
mod confidence;
mod few_shot;
mod llm;
mod modelgen;
mod tool_loop;

pub use cache_reuse::cache_reuse_execute;
pub use confidence::{classification_confidence, seq2seq_confidence};
pub use few_shot::sample_few_shot_examples;
pub use llm::llm_execute;
pub use modelgen::{modelgen_execute, modelgen_train, DistilledModel};
pub use tool_loop::{tool_loop_execute, ToolLoopStep, ToolRegistry, SUBMIT_ACTION};

use serde::{Deserialize, Serialize};

use crate::value::{fnv1a, Value};

/// The routing contract of the cascade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ModuleVerdict {
    Answered { value: Value, confidence: f64 },
    Fallback,
}

impl ModuleVerdict {
    pub fn answered(value: impl Into<Value>, confidence: f64) -> Self {
        ModuleVerdict::Answered {
            value: value.into(),
            confidence,
        }
    }

    pub fn is_answered(&self) -> bool {
        matches!(self, ModuleVerdict::Answered { .. })
    }
}

/// The four module kinds a plan can activate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModuleKind {
    CacheReuse,
    CodeGen,
    ModelGen,
    Llm,
}

impl ModuleKind {
    pub fn id(&self) -> &'static str {
        match self {
            ModuleKind::CacheReuse => "cache_reuse",
            ModuleKind::CodeGen => "code_gen",
            ModuleKind::ModelGen => "model_gen",
            ModuleKind::Llm => "llm",
        }
    }
}

/// How few-shot examples are chosen for LLM prompts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMode {
    Fixed,
    Random,
    Nearest,
}

/// Per-module hyperparameters; one variant per module kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "module", rename_all = "snake_case")]
pub enum ModuleConfig {
    CacheReuse {
        activate: bool,
        distance_threshold: f64,
    },
    CodeGen {
        activate: bool,
        /// m: ensemble size and initial snippet count.
        num_branches: usize,
        /// M >= m: population cap after filtering.
        num_preserved: usize,
        /// T: evolution iteration budget.
        num_iterations: usize,
    },
    ModelGen {
        activate: bool,
        confidence_threshold: f64,
    },
    Llm {
        activate: bool,
        examples_sample_mode: SampleMode,
    },
}

impl ModuleConfig {
    pub fn kind(&self) -> ModuleKind {
        match self {
            ModuleConfig::CacheReuse { .. } => ModuleKind::CacheReuse,
            ModuleConfig::CodeGen { .. } => ModuleKind::CodeGen,
            ModuleConfig::ModelGen { .. } => ModuleKind::ModelGen,
            ModuleConfig::Llm { .. } => ModuleKind::Llm,
        }
    }

    pub fn activate(&self) -> bool {
        match self {
            ModuleConfig::CacheReuse { activate, .. }
            | ModuleConfig::CodeGen { activate, .. }
            | ModuleConfig::ModelGen { activate, .. }
            | ModuleConfig::Llm { activate, .. } => *activate,
        }
    }

    /// Stable digest of the hyperparameter values.
    pub fn params_digest(&self) -> u64 {
        let canonical = serde_json::to_string(self).expect("config serializes");
        fnv1a(canonical.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_distinguishes_configs() {
        let a = ModuleConfig::CacheReuse {
            activate: true,
            distance_threshold: 0.4,
        };
        let b = ModuleConfig::CacheReuse {
            activate: true,
            distance_threshold: 0.6,
        };
        assert_ne!(a.params_digest(), b.params_digest());
        assert_eq!(a.params_digest(), a.clone().params_digest());
    }

    #[test]
    fn verdict_shape() {
        let v = ModuleVerdict::answered("1", 0.8);
        assert!(v.is_answered());
        assert!(!ModuleVerdict::Fallback.is_answered());
    }
}
