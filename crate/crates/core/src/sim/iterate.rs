use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::score::score_day;
use super::{execute_day, replan, CapacityPolicy, EngineConfig, ExecutedDay, MutationRates, PlanMemory, PlanScore, World};
use crate::error::{Error, Result};
use crate::mode_choice::{sample_mode, UtilityParams};
use crate::population::{Agent, DayPlan};
use crate::seed::{self, stream};
use crate::types::Mode;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub iter: u32,
    pub mean_score: f64,
    pub mode_counts: [u64; Mode::COUNT],
    pub stuck: u64,
    pub denied_boardings: u64,
}

#[derive(Clone, Debug)]
pub struct EquilibriumResult {
    pub final_day: ExecutedDay,
    pub final_plans: Vec<DayPlan>,
    pub final_scores: Vec<PlanScore>,
    pub trace: Vec<IterationStats>,
}

/// Give every leg a mode drawn from the choice model on expected travel times.
pub fn initial_plans(
    world: &World,
    agents: &[Agent],
    plans: &[DayPlan],
    p: &UtilityParams,
    global_seed: u64,
) -> Result<Vec<DayPlan>> {
    if agents.len() != plans.len() {
        return Err(Error::Invariant("agents and plans differ in length".into()));
    }
    agents
        .par_iter()
        .zip(plans.par_iter())
        .map(|(agent, plan)| {
            let mut rng = seed::rng_for(global_seed, stream::INITIAL_MODE, u64::from(agent.id.0));
            let mut plan = plan.clone();
            for leg in &mut plan.legs {
                let ctx = world.choice_context(agent, leg.origin, leg.destination);
                leg.mode = sample_mode(&ctx, p, &mut rng)?;
            }
            Ok(plan)
        })
        .collect()
}

/// Number of final iterations that run with selection only.
pub fn cooldown_iterations(n_iter: u32, fraction: f64) -> u32 {
    ((f64::from(n_iter) * fraction).round() as u32).min(n_iter)
}

/// Execute, score and replan for `n_iter` days. Only the last day keeps its
/// event log, and only when `record_events` is set.
#[allow(clippy::too_many_arguments)]
pub fn run_iterations(
    world: &World,
    agents: &[Agent],
    initial: Vec<DayPlan>,
    p: &UtilityParams,
    policy: &CapacityPolicy,
    cfg: &EngineConfig,
    n_iter: u32,
    global_seed: u64,
    record_events: bool,
) -> Result<EquilibriumResult> {
    if n_iter == 0 {
        return Err(Error::Config("n_iter must be ≥ 1".into()));
    }
    if agents.len() != initial.len() {
        return Err(Error::Invariant("agents and plans differ in length".into()));
    }
    cfg.validate()?;
    let cooldown_from = n_iter - cooldown_iterations(n_iter, cfg.cooldown_fraction);
    let mut memories: Vec<PlanMemory> = initial.iter().map(|pl| PlanMemory::new(pl.clone(), cfg.memory_size)).collect();
    let mut current = initial;
    let mut trace = Vec::with_capacity(n_iter as usize);
    let mut it = 0;
    loop {
        let last = it + 1 == n_iter;
        let day = execute_day(world, &current, policy, cfg, record_events && last)?;
        let scores = score_day(world, agents, &current, &day, p, cfg);
        for (m, s) in memories.iter_mut().zip(&scores) {
            m.set_selected_score(s.score);
        }
        let total: f64 = scores.iter().map(|s| s.score).sum();
        trace.push(IterationStats {
            iter: it,
            mean_score: if scores.is_empty() { 0.0 } else { total / scores.len() as f64 },
            mode_counts: day.mode_counts(),
            stuck: day.stuck,
            denied_boardings: day.denied_boardings,
        });
        log::debug!("iteration {it}: mean score {:.4}", trace.last().unwrap().mean_score);
        if last {
            return Ok(EquilibriumResult {
                final_day: day,
                final_plans: current,
                final_scores: scores,
                trace,
            });
        }
        let next = it + 1;
        let rates = if next >= cooldown_from { MutationRates::NONE } else { cfg.rates };
        current = memories
            .par_iter_mut()
            .zip(agents.par_iter())
            .map(|(m, agent)| {
                let mut rng = seed::iteration_rng(global_seed, stream::REPLAN, next, u64::from(agent.id.0));
                replan(world, agent, m, p, &rates, cfg, &mut rng)
            })
            .collect::<Result<_>>()?;
        it = next;
    }
}
