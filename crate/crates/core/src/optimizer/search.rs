//! The generic (skyline DP) and specialized (fixed-order beam) plan
//! searches, plus ternary threshold refinement and re-optimization.

use crate::error::Result;
use crate::exec::{ModuleConfig, ModuleKind};

use super::{
    order_by_priority, select_final_plan, OptimizerSettings, Plan, PlanEvaluator, PlanMetrics,
    SkylineFrontier, StageMetrics, NON_LLM_STAGE_COST,
};

/// Modules are considered in this order by the specialized search; the
/// strongest module first so the gap filter has a sound reference.
const CONSIDERATION_ORDER: [ModuleKind; 4] = [
    ModuleKind::Llm,
    ModuleKind::CodeGen,
    ModuleKind::ModelGen,
    ModuleKind::CacheReuse,
];

/// Result of one optimizer run.
#[derive(Debug, Clone)]
pub struct OptimizeOutcome {
    pub frontier: SkylineFrontier,
    /// Highest-effectiveness plan found.
    pub max_plan: Plan,
    /// Minimum-cost plan within the gap of `max_plan`.
    pub chosen: Plan,
    /// Evaluator invocations during the search.
    pub explored: usize,
    /// Specialized only: the plan pool after the LLM and CodeGen levels,
    /// reusable by a later re-optimization.
    pub level_cache: Vec<Plan>,
}

fn evaluate_into(
    evaluator: &dyn PlanEvaluator,
    stages: Vec<ModuleConfig>,
    explored: &mut usize,
) -> Result<Plan> {
    let metrics = evaluator.evaluate(&stages)?;
    *explored += 1;
    Ok(Plan { stages, metrics })
}

/// Skyline dynamic program: each level appends every unused module ×
/// grid point to every frontier subplan, prunes dominated subplans, and
/// stops when a level adds nothing new.
pub fn generic_optimize(
    settings: &OptimizerSettings,
    evaluator: &dyn PlanEvaluator,
) -> Result<OptimizeOutcome> {
    let mut explored = 0usize;
    let mut frontier = SkylineFrontier::new();
    let mut current: Vec<Plan> = vec![Plan {
        stages: Vec::new(),
        metrics: PlanMetrics {
            effectiveness: 0.0,
            cost: 0.0,
            stages: Vec::new(),
        },
    }];
    // Module kinds are unique per plan, so four levels exhaust the space.
    for _level in 0..CONSIDERATION_ORDER.len() {
        let mut level_frontier = SkylineFrontier::new();
        let mut inserted_any = false;
        for plan in &current {
            for kind in CONSIDERATION_ORDER {
                if plan.has_kind(kind) {
                    continue;
                }
                for cfg in settings.grids.for_kind(kind) {
                    let mut stages = plan.stages.clone();
                    stages.push(cfg.clone());
                    let candidate = evaluate_into(evaluator, stages, &mut explored)?;
                    level_frontier.insert(candidate.clone());
                    inserted_any |= frontier.insert(candidate);
                }
            }
        }
        if level_frontier.is_empty() || !inserted_any {
            break;
        }
        current = level_frontier.plans().to_vec();
    }
    finish(frontier, settings.gap, explored, Vec::new())
}

fn finish(
    frontier: SkylineFrontier,
    gap: f64,
    explored: usize,
    level_cache: Vec<Plan>,
) -> Result<OptimizeOutcome> {
    let max_plan = frontier
        .max_effectiveness_plan()
        .cloned()
        .ok_or(crate::error::Error::EmptyValidation)?;
    let chosen = select_final_plan(&frontier, gap).expect("non-empty frontier");
    Ok(OptimizeOutcome {
        frontier,
        max_plan,
        chosen,
        explored,
        level_cache,
    })
}

fn priority_order(stages: &[ModuleConfig], metrics: &PlanMetrics) -> Result<Vec<ModuleConfig>> {
    let paired: Vec<(ModuleConfig, StageMetrics)> = stages
        .iter()
        .cloned()
        .zip(metrics.stages.iter().map(|m| StageMetrics {
            cost: m.cost.max(NON_LLM_STAGE_COST),
            fallback: m.fallback,
        }))
        .collect();
    Ok(order_by_priority(paired)?
        .into_iter()
        .map(|(cfg, _)| cfg)
        .collect())
}

/// Fixed-consideration-order beam search. Orders within each candidate
/// plan come from the priority rule rather than enumeration; the gap
/// filter and beam trim prune as the search goes; the plan pool after
/// the LLM and CodeGen levels is returned for reuse.
pub fn specialized_optimize(
    settings: &OptimizerSettings,
    evaluator: &dyn PlanEvaluator,
    prior_level_cache: Option<&[Plan]>,
) -> Result<OptimizeOutcome> {
    let mut explored = 0usize;
    let mut frontier = SkylineFrontier::new();
    let mut pool: Vec<Plan> = vec![Plan {
        stages: Vec::new(),
        metrics: PlanMetrics {
            effectiveness: 0.0,
            cost: 0.0,
            stages: Vec::new(),
        },
    }];
    let mut level_cache = Vec::new();
    let mut levels: &[ModuleKind] = &CONSIDERATION_ORDER;
    if let Some(cached) = prior_level_cache {
        // LLM and CodeGen levels reloaded from the prior run.
        pool = cached.to_vec();
        for plan in &pool {
            if !plan.stages.is_empty() {
                frontier.insert(plan.clone());
            }
        }
        level_cache = cached.to_vec();
        levels = &CONSIDERATION_ORDER[2..];
    }
    for (li, &kind) in levels.iter().enumerate() {
        let mut candidates: Vec<Plan> = pool.clone();
        for plan in &pool {
            if plan.has_kind(kind) {
                continue;
            }
            for cfg in settings.grids.for_kind(kind) {
                let mut stages = plan.stages.clone();
                stages.push(cfg.clone());
                let appended = evaluate_into(evaluator, stages, &mut explored)?;
                // Re-run in priority order when that differs.
                let ordered_stages = priority_order(&appended.stages, &appended.metrics)?;
                let candidate = if ordered_stages != appended.stages {
                    evaluate_into(evaluator, ordered_stages, &mut explored)?
                } else {
                    appended
                };
                frontier.insert(candidate.clone());
                candidates.push(candidate);
            }
        }
        // Gap filter: drop candidates too far below the best seen.
        let best = candidates
            .iter()
            .map(|p| p.metrics.effectiveness)
            .fold(0.0f64, f64::max);
        candidates.retain(|p| {
            p.stages.is_empty() || best - p.metrics.effectiveness <= settings.gap + 1e-12
        });
        // Beam trim to the top-B by effectiveness.
        if let Some(beam) = settings.beam {
            candidates.sort_by(|a, b| {
                b.metrics
                    .effectiveness
                    .partial_cmp(&a.metrics.effectiveness)
                    .unwrap()
                    .then(a.metrics.cost.partial_cmp(&b.metrics.cost).unwrap())
            });
            candidates.truncate(beam.max(1));
        }
        pool = candidates;
        let is_codegen_level = prior_level_cache.is_none() && li == 1;
        if is_codegen_level {
            level_cache = pool.clone();
        }
    }
    finish(frontier, settings.gap, explored, level_cache)
}

/// Ternary search for a unimodal effectiveness curve over a continuous
/// threshold. At most `2 · iters` evaluations.
pub fn ternary_search_threshold(
    mut evaluate: impl FnMut(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    iters: usize,
) -> f64 {
    assert!(lo < hi);
    for _ in 0..iters {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if evaluate(m1) < evaluate(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    (lo + hi) / 2.0
}

/// Re-run the specialized search after the cache has grown: LLM and
/// CodeGen levels come from the prior run's cache, and the continuous
/// CacheReuse/ModelGen grids are narrowed to a window of one grid step
/// around the prior optimum.
pub fn reoptimize(
    prior: &OptimizeOutcome,
    settings: &OptimizerSettings,
    evaluator: &dyn PlanEvaluator,
) -> Result<OptimizeOutcome> {
    let mut narrowed = settings.clone();
    for kind in [ModuleKind::CacheReuse, ModuleKind::ModelGen] {
        if let Some(position) = prior_grid_position(prior, settings.grids.for_kind(kind), kind) {
            let grid = narrowed.grids.for_kind_mut(kind);
            let lo = position.saturating_sub(1);
            let hi = (position + 1).min(grid.len() - 1);
            *grid = grid[lo..=hi].to_vec();
        }
    }
    specialized_optimize(&narrowed, evaluator, Some(&prior.level_cache))
}

fn prior_grid_position(
    prior: &OptimizeOutcome,
    grid: &[ModuleConfig],
    kind: ModuleKind,
) -> Option<usize> {
    let chosen_cfg = prior.chosen.stages.iter().find(|s| s.kind() == kind)?;
    grid.iter().position(|c| c == chosen_cfg)
}
