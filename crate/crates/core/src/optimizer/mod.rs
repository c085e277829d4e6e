//! Plan search: cost model, priority ordering, skyline pruning, and the
//! generic and specialized optimizers.
//!
//! Cost is measured in expected LLM provider calls per record; non-LLM
//! stages are charged a small epsilon so priority division is
//! well-defined.

mod search;

pub use search::{
    generic_optimize, reoptimize, specialized_optimize, ternary_search_threshold, OptimizeOutcome,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{ModuleConfig, ModuleKind, SampleMode};

/// Cost charged to stages that never touch the provider.
pub const NON_LLM_STAGE_COST: f64 = 1e-3;

/// Effectiveness values within one key of this granularity compete for
/// the same frontier slot.
const EFFECTIVENESS_KEY_SCALE: f64 = 1e4;

/// Observed per-stage behavior: provider calls per record reaching the
/// stage, and the fraction of those records it passes onward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageMetrics {
    pub cost: f64,
    pub fallback: f64,
}

/// A plan's evaluation summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanMetrics {
    pub effectiveness: f64,
    pub cost: f64,
    pub stages: Vec<StageMetrics>,
}

/// An ordered selection of configured modules plus its metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub stages: Vec<ModuleConfig>,
    pub metrics: PlanMetrics,
}

impl Plan {
    pub fn kinds(&self) -> Vec<ModuleKind> {
        self.stages.iter().map(ModuleConfig::kind).collect()
    }

    pub fn has_kind(&self, kind: ModuleKind) -> bool {
        self.stages.iter().any(|s| s.kind() == kind)
    }
}

/// Expected cost of a stage sequence:
/// `C(P) = Σᵢ (Πⱼ<ᵢ pⱼ) · Cᵢ`.
pub fn plan_cost(stages: &[StageMetrics]) -> f64 {
    let mut reach = 1.0;
    let mut total = 0.0;
    for stage in stages {
        total += reach * stage.cost;
        reach *= stage.fallback;
    }
    total
}

/// Stage priority `(1 − p) / C`; higher runs earlier.
pub fn module_priority(cost: f64, fallback: f64) -> Result<f64> {
    if cost <= 0.0 {
        return Err(Error::ZeroCost);
    }
    Ok((1.0 - fallback) / cost)
}

/// Sort stages by descending priority. Ties break toward the cheaper
/// stage, then stable input order. The resulting order minimizes
/// [`plan_cost`] over all permutations.
pub fn order_by_priority<T>(stages: Vec<(T, StageMetrics)>) -> Result<Vec<(T, StageMetrics)>> {
    let mut indexed: Vec<(usize, (T, StageMetrics))> = stages.into_iter().enumerate().collect();
    for (_, (_, m)) in &indexed {
        module_priority(m.cost, m.fallback)?;
    }
    indexed.sort_by(|(ia, (_, a)), (ib, (_, b))| {
        let pa = (1.0 - a.fallback) / a.cost;
        let pb = (1.0 - b.fallback) / b.cost;
        pb.partial_cmp(&pa)
            .unwrap()
            .then(a.cost.partial_cmp(&b.cost).unwrap())
            .then(ia.cmp(ib))
    });
    Ok(indexed.into_iter().map(|(_, pair)| pair).collect())
}

/// Strict Pareto dominance: cheaper and more effective.
pub fn dominates(a: &PlanMetrics, b: &PlanMetrics) -> bool {
    a.cost < b.cost && a.effectiveness > b.effectiveness
}

fn effectiveness_key(a: f64) -> i64 {
    (a * EFFECTIVENESS_KEY_SCALE).round() as i64
}

/// The non-dominated plans found so far, at most one (the cheapest) per
/// effectiveness key.
#[derive(Debug, Clone, Default)]
pub struct SkylineFrontier {
    plans: Vec<Plan>,
}

impl SkylineFrontier {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert `plan` unless it is dominated; evict everything it
    /// dominates and any same-key entry it undercuts. Returns whether
    /// the plan entered the frontier.
    pub fn insert(&mut self, plan: Plan) -> bool {
        if self
            .plans
            .iter()
            .any(|p| dominates(&p.metrics, &plan.metrics))
        {
            return false;
        }
        let key = effectiveness_key(plan.metrics.effectiveness);
        if let Some(existing) = self
            .plans
            .iter()
            .find(|p| effectiveness_key(p.metrics.effectiveness) == key)
        {
            if existing.metrics.cost <= plan.metrics.cost {
                return false;
            }
        }
        self.plans.retain(|p| {
            !dominates(&plan.metrics, &p.metrics)
                && effectiveness_key(p.metrics.effectiveness) != key
        });
        self.plans.push(plan);
        true
    }

    pub fn plans(&self) -> &[Plan] {
        &self.plans
    }

    pub fn is_empty(&self) -> bool {
        self.plans.is_empty()
    }

    pub fn max_effectiveness_plan(&self) -> Option<&Plan> {
        self.plans
            .iter()
            .max_by(|a, b| {
                a.metrics
                    .effectiveness
                    .partial_cmp(&b.metrics.effectiveness)
                    .unwrap()
                    .then(b.metrics.cost.partial_cmp(&a.metrics.cost).unwrap())
            })
    }
}

/// Minimum-cost plan whose effectiveness is within `gap` of the
/// frontier's best. Ties break toward higher effectiveness, then the
/// earlier entry.
pub fn select_final_plan(frontier: &SkylineFrontier, gap: f64) -> Option<Plan> {
    let best = frontier.max_effectiveness_plan()?.metrics.effectiveness;
    frontier
        .plans()
        .iter()
        .filter(|p| best - p.metrics.effectiveness <= gap + 1e-12)
        .min_by(|a, b| {
            a.metrics
                .cost
                .partial_cmp(&b.metrics.cost)
                .unwrap()
                .then(
                    b.metrics
                        .effectiveness
                        .partial_cmp(&a.metrics.effectiveness)
                        .unwrap(),
                )
        })
        .cloned()
}

/// Whether the optimizer enumerates orders (generic) or derives them
/// from priorities (specialized).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizeMode {
    Generic,
    Specialized,
}

/// Search-space description: per-module candidate configurations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Grids {
    pub cache_reuse: Vec<ModuleConfig>,
    pub code_gen: Vec<ModuleConfig>,
    pub model_gen: Vec<ModuleConfig>,
    pub llm: Vec<ModuleConfig>,
}

impl Grids {
    pub fn for_kind(&self, kind: ModuleKind) -> &[ModuleConfig] {
        match kind {
            ModuleKind::CacheReuse => &self.cache_reuse,
            ModuleKind::CodeGen => &self.code_gen,
            ModuleKind::ModelGen => &self.model_gen,
            ModuleKind::Llm => &self.llm,
        }
    }

    pub fn for_kind_mut(&mut self, kind: ModuleKind) -> &mut Vec<ModuleConfig> {
        match kind {
            ModuleKind::CacheReuse => &mut self.cache_reuse,
            ModuleKind::CodeGen => &mut self.code_gen,
            ModuleKind::ModelGen => &mut self.model_gen,
            ModuleKind::Llm => &mut self.llm,
        }
    }
}

impl Default for Grids {
    fn default() -> Self {
        Grids {
            cache_reuse: [0.4, 0.6, 0.8, 1.0]
                .iter()
                .map(|&t| ModuleConfig::CacheReuse {
                    activate: true,
                    distance_threshold: t,
                })
                .collect(),
            code_gen: [1usize, 4]
                .iter()
                .map(|&m| ModuleConfig::CodeGen {
                    activate: true,
                    num_branches: m,
                    num_preserved: 4,
                    num_iterations: 2,
                })
                .collect(),
            model_gen: [0.5, 0.7, 0.9]
                .iter()
                .map(|&t| ModuleConfig::ModelGen {
                    activate: true,
                    confidence_threshold: t,
                })
                .collect(),
            llm: vec![
                ModuleConfig::Llm {
                    activate: true,
                    examples_sample_mode: SampleMode::Fixed,
                },
                ModuleConfig::Llm {
                    activate: true,
                    examples_sample_mode: SampleMode::Nearest,
                },
            ],
        }
    }
}

/// Optimizer knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerSettings {
    /// Tolerated effectiveness gap G below the best-found plan.
    pub gap: f64,
    /// Beam width for the specialized search; `None` = unlimited.
    pub beam: Option<usize>,
    pub grids: Grids,
    pub mode: OptimizeMode,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            gap: 0.05,
            beam: Some(8),
            grids: Grids::default(),
            mode: OptimizeMode::Specialized,
        }
    }
}

/// The search's window onto plan quality. Implementations must be
/// deterministic: identical stage sequences yield identical metrics.
pub trait PlanEvaluator {
    fn evaluate(&self, stages: &[ModuleConfig]) -> Result<PlanMetrics>;
}
