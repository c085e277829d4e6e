//! Synthetic optimizer instances with analytically known metrics.
//!
//! Each (module kind, grid config) pair carries a fallback probability
//! and a per-record cost; every stage shares the instance's answer
//! accuracy, so plan effectiveness `a · (1 − Πᵢ pᵢ)` depends only on
//! which configs are chosen, never on their order. That makes skyline
//! pruning lossless, which the instance generator additionally verifies
//! by construction (effectiveness values of distinct config sets are
//! kept well separated).

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::exec::{ModuleConfig, ModuleKind, SampleMode};
use crate::optimizer::{
    plan_cost, Grids, Plan, PlanEvaluator, PlanMetrics, StageMetrics, NON_LLM_STAGE_COST,
};

/// Behavior of one configured stage.
#[derive(Debug, Clone, Copy)]
pub struct StageParams {
    pub fallback: f64,
    pub cost: f64,
}

/// A fully specified synthetic optimization problem.
#[derive(Debug, Clone)]
pub struct SyntheticInstance {
    pub accuracy: f64,
    pub grids: Grids,
    params: BTreeMap<u64, StageParams>,
}

impl SyntheticInstance {
    pub fn stage_params(&self, cfg: &ModuleConfig) -> StageParams {
        self.params[&cfg.params_digest()]
    }

    pub fn metrics_for(&self, stages: &[ModuleConfig]) -> PlanMetrics {
        let stage_metrics: Vec<StageMetrics> = stages
            .iter()
            .map(|cfg| {
                let p = self.stage_params(cfg);
                StageMetrics {
                    cost: p.cost,
                    fallback: p.fallback,
                }
            })
            .collect();
        let survive: f64 = stage_metrics.iter().map(|m| m.fallback).product();
        PlanMetrics {
            effectiveness: self.accuracy * (1.0 - survive),
            cost: plan_cost(&stage_metrics),
            stages: stage_metrics,
        }
    }

    /// All non-empty plans: every subset of module kinds, every
    /// permutation, every grid combination.
    pub fn all_plans(&self) -> Vec<Plan> {
        let kinds: Vec<ModuleKind> = [
            ModuleKind::CacheReuse,
            ModuleKind::CodeGen,
            ModuleKind::ModelGen,
            ModuleKind::Llm,
        ]
        .into_iter()
        .filter(|k| !self.grids.for_kind(*k).is_empty())
        .collect();
        let mut plans = Vec::new();
        for mask in 1u32..(1 << kinds.len()) {
            let subset: Vec<ModuleKind> = kinds
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, k)| *k)
                .collect();
            for order in permutations(&subset) {
                for combo in grid_combinations(&order, &self.grids) {
                    let metrics = self.metrics_for(&combo);
                    plans.push(Plan {
                        stages: combo,
                        metrics,
                    });
                }
            }
        }
        plans
    }

    /// Brute-force optimum: the maximal effectiveness over all plans,
    /// and the cheapest plan within `gap` of it (ties toward higher
    /// effectiveness).
    pub fn exhaustive_optimum(&self, gap: f64) -> (f64, Plan) {
        let plans = self.all_plans();
        let best = plans
            .iter()
            .map(|p| p.metrics.effectiveness)
            .fold(0.0f64, f64::max);
        let chosen = plans
            .into_iter()
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
            .expect("instance has at least one plan");
        (best, chosen)
    }
}

fn permutations(kinds: &[ModuleKind]) -> Vec<Vec<ModuleKind>> {
    if kinds.len() <= 1 {
        return vec![kinds.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..kinds.len() {
        let mut rest = kinds.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

fn grid_combinations(order: &[ModuleKind], grids: &Grids) -> Vec<Vec<ModuleConfig>> {
    let mut combos: Vec<Vec<ModuleConfig>> = vec![Vec::new()];
    for kind in order {
        let mut next = Vec::new();
        for combo in &combos {
            for cfg in grids.for_kind(*kind) {
                let mut extended = combo.clone();
                extended.push(cfg.clone());
                next.push(extended);
            }
        }
        combos = next;
    }
    combos
}

/// Analytic evaluator over a synthetic instance, counting invocations.
pub struct SyntheticEvaluator<'a> {
    instance: &'a SyntheticInstance,
    evaluations: std::cell::Cell<usize>,
}

impl<'a> SyntheticEvaluator<'a> {
    pub fn new(instance: &'a SyntheticInstance) -> Self {
        Self {
            instance,
            evaluations: std::cell::Cell::new(0),
        }
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations.get()
    }
}

impl PlanEvaluator for SyntheticEvaluator<'_> {
    fn evaluate(&self, stages: &[ModuleConfig]) -> Result<PlanMetrics> {
        self.evaluations.set(self.evaluations.get() + 1);
        Ok(self.instance.metrics_for(stages))
    }
}

fn cache_reuse_cfg(threshold: f64) -> ModuleConfig {
    ModuleConfig::CacheReuse {
        activate: true,
        distance_threshold: threshold,
    }
}

fn model_gen_cfg(threshold: f64) -> ModuleConfig {
    ModuleConfig::ModelGen {
        activate: true,
        confidence_threshold: threshold,
    }
}

fn code_gen_cfg(m: usize) -> ModuleConfig {
    ModuleConfig::CodeGen {
        activate: true,
        num_branches: m,
        num_preserved: 4,
        num_iterations: 2,
    }
}

fn llm_cfg(mode: SampleMode) -> ModuleConfig {
    ModuleConfig::Llm {
        activate: true,
        examples_sample_mode: mode,
    }
}

/// The reference instance for search-reduction measurements: all four
/// modules with full grids.
pub fn standard_instance(seed: u64) -> SyntheticInstance {
    let grids = Grids {
        cache_reuse: [0.4, 0.6, 0.8, 1.0].map(cache_reuse_cfg).to_vec(),
        code_gen: [1, 4].map(code_gen_cfg).to_vec(),
        model_gen: [0.5, 0.7, 0.9].map(model_gen_cfg).to_vec(),
        llm: vec![llm_cfg(SampleMode::Fixed), llm_cfg(SampleMode::Nearest)],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // The standard instance is used for search-size comparisons, where
    // effectiveness separation is not required.
    instance_over_rng(grids, &mut rng, true, false).expect("unchecked instance always builds")
}

/// Draw a random instance with 2–4 modules and grid sizes ≤ 4, keeping
/// only instances whose distinct plan-effectiveness values are well
/// separated (so frontier pruning can never conflate two plans) and
/// whose dominance relation persists under extension (so frontier
/// pruning can never hide the optimum).
pub fn random_instance(seed: u64) -> SyntheticInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _attempt in 0..500 {
        let module_count = rng.gen_range(2..=4usize);
        let mut kinds = vec![
            ModuleKind::Llm,
            ModuleKind::CacheReuse,
            ModuleKind::ModelGen,
            ModuleKind::CodeGen,
        ];
        kinds.truncate(module_count);
        let mut grids = Grids {
            cache_reuse: Vec::new(),
            code_gen: Vec::new(),
            model_gen: Vec::new(),
            llm: Vec::new(),
        };
        // Keep the number of distinct config sets modest so the
        // separation requirement below is satisfiable.
        let mut config_sets = 1usize;
        for kind in &kinds {
            let mut size = rng.gen_range(1..=4usize);
            while config_sets * (size + 1) > 40 && size > 1 {
                size -= 1;
            }
            config_sets *= size + 1;
            let grid = grids.for_kind_mut(*kind);
            for i in 0..size {
                let cfg = match kind {
                    ModuleKind::CacheReuse => cache_reuse_cfg(0.2 + 0.2 * i as f64),
                    ModuleKind::ModelGen => model_gen_cfg(0.3 + 0.2 * i as f64),
                    ModuleKind::CodeGen => code_gen_cfg(i + 1),
                    ModuleKind::Llm => llm_cfg(match i % 3 {
                        0 => SampleMode::Fixed,
                        1 => SampleMode::Nearest,
                        _ => SampleMode::Random,
                    }),
                };
                grid.push(cfg);
            }
        }
        if let Ok(instance) = instance_over_rng(grids, &mut rng, false, true) {
            if is_dominance_persistent(&instance) {
                return instance;
            }
        }
    }
    panic!("no separated instance found for seed {seed}");
}

fn instance_over_rng(
    grids: Grids,
    rng: &mut ChaCha8Rng,
    llm_always_answers: bool,
    require_separation: bool,
) -> Result<SyntheticInstance> {
    let accuracy = rng.gen_range(0.6..0.98);
    let mut params = BTreeMap::new();
    for kind in [
        ModuleKind::CacheReuse,
        ModuleKind::CodeGen,
        ModuleKind::ModelGen,
        ModuleKind::Llm,
    ] {
        for cfg in grids.for_kind(kind) {
            let fallback = match kind {
                ModuleKind::Llm if llm_always_answers => 0.0,
                ModuleKind::Llm => rng.gen_range(0.02..0.3),
                _ => rng.gen_range(0.05..0.9),
            };
            let cost = match kind {
                ModuleKind::Llm => rng.gen_range(0.8..1.2),
                _ => NON_LLM_STAGE_COST * rng.gen_range(1.0..5.0),
            };
            params.insert(cfg.params_digest(), StageParams { fallback, cost });
        }
    }
    let instance = SyntheticInstance {
        accuracy,
        grids,
        params,
    };
    if require_separation && !is_separated(&instance) {
        return Err(crate::error::Error::InvalidConfig(
            "effectiveness values too close".into(),
        ));
    }
    Ok(instance)
}

/// Dominance persistence needs plans with different config sets to land
/// on different frontier keys: their effectiveness values must differ by
/// more than twice the key granularity. Plans over the same config set
/// (orderings of one another) share an effectiveness exactly and are
/// exempt.
fn is_separated(instance: &SyntheticInstance) -> bool {
    let mut by_set: BTreeMap<Vec<u64>, f64> = BTreeMap::new();
    for plan in instance.all_plans() {
        let mut key: Vec<u64> = plan.stages.iter().map(ModuleConfig::params_digest).collect();
        key.sort_unstable();
        by_set.insert(key, plan.metrics.effectiveness);
    }
    let mut values: Vec<f64> = by_set.into_values().collect();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values.windows(2).all(|w| w[1] - w[0] > 2e-4)
}

/// Whether frontier pruning is lossless on this instance: whenever one
/// partial plan weakly dominates another of the same length, every
/// one-stage extension of the dominated plan must itself be weakly
/// dominated by some one-stage extension of the dominating plan. By
/// induction over search levels, discarding dominated partial plans then
/// never hides a better completion.
fn is_dominance_persistent(instance: &SyntheticInstance) -> bool {
    struct Partial {
        effectiveness: f64,
        cost: f64,
        multiset: Vec<u64>,
        /// One-stage extensions' (effectiveness, cost), sorted by
        /// descending effectiveness with a running cost minimum, so a
        /// coverage query is a binary search.
        extensions: Vec<(f64, f64)>,
        covering_cost: Vec<f64>,
    }

    let kinds = [
        ModuleKind::CacheReuse,
        ModuleKind::CodeGen,
        ModuleKind::ModelGen,
        ModuleKind::Llm,
    ];
    let mut plans = instance.all_plans();
    plans.push(Plan {
        stages: Vec::new(),
        metrics: PlanMetrics {
            effectiveness: 0.0,
            cost: 0.0,
            stages: Vec::new(),
        },
    });
    let mut by_length: BTreeMap<usize, Vec<Partial>> = BTreeMap::new();
    for plan in &plans {
        let survive: f64 = plan.metrics.stages.iter().map(|m| m.fallback).product();
        let mut extensions = Vec::new();
        for kind in kinds {
            if plan.has_kind(kind) {
                continue;
            }
            for cfg in instance.grids.for_kind(kind) {
                let p = instance.stage_params(cfg);
                extensions.push((
                    instance.accuracy * (1.0 - survive * p.fallback),
                    plan.metrics.cost + survive * p.cost,
                ));
            }
        }
        extensions.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let mut covering_cost = Vec::with_capacity(extensions.len());
        let mut min_cost = f64::INFINITY;
        for &(_, cost) in &extensions {
            min_cost = min_cost.min(cost);
            covering_cost.push(min_cost);
        }
        let mut multiset: Vec<u64> =
            plan.stages.iter().map(ModuleConfig::params_digest).collect();
        multiset.sort_unstable();
        by_length.entry(plan.stages.len()).or_default().push(Partial {
            effectiveness: plan.metrics.effectiveness,
            cost: plan.metrics.cost,
            multiset,
            extensions,
            covering_cost,
        });
    }
    for group in by_length.values() {
        for dominator in group {
            for dominated in group {
                if dominator.multiset == dominated.multiset
                    || dominator.effectiveness < dominated.effectiveness
                    || dominator.cost > dominated.cost
                {
                    continue;
                }
                for &(eff, cost) in &dominated.extensions {
                    // Extensions at least as effective as this one form a
                    // prefix of the dominator's sorted list.
                    let prefix = dominator
                        .extensions
                        .partition_point(|&(e, _)| e >= eff);
                    if prefix == 0 || dominator.covering_cost[prefix - 1] > cost {
                        return false;
                    }
                }
            }
        }
    }
    true
}
