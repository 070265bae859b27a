use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EngineConfig, ExecutedDay, ExecutedLeg, World};
use crate::mode_choice::{utility_of, ModeAttributes, UtilityParams};
use crate::population::{Agent, DayPlan};
use crate::types::{AgentId, Mode};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanScore {
    pub agent: AgentId,
    pub score: f64,
    pub mode_utility: f64,
    /// Lateness disutility; never positive.
    pub schedule_delay: f64,
}

fn hours(s: u32) -> f64 {
    f64::from(s) / 3600.0
}

fn realized_attributes(world: &World, leg: &ExecutedLeg) -> ModeAttributes {
    let km = leg.distance_m / 1000.0;
    let cost = world.choice.cost(leg.mode, km);
    if leg.mode == Mode::Transit {
        ModeAttributes {
            in_vehicle_h: hours(leg.in_vehicle_s),
            cost,
            access_h: hours(leg.access_s + leg.wait_s),
            egress_h: hours(leg.egress_s),
            transfer_h: hours(leg.transfer_s),
        }
    } else {
        ModeAttributes::moving(hours(leg.in_vehicle_s), cost)
    }
}

/// Score an executed plan: mode utility of every leg plus the lateness
/// penalty on the leg that reaches work. Legs that were never completed
/// score `stuck_penalty` instead.
pub fn score_plan(
    world: &World,
    agent: &Agent,
    plan: &DayPlan,
    executed: &[ExecutedLeg],
    p: &UtilityParams,
    cfg: &EngineConfig,
) -> PlanScore {
    let work_leg = plan.work_leg_index();
    let mut mode_utility = 0.0;
    let mut delay = 0.0;
    for i in 0..plan.legs.len() {
        match executed.get(i) {
            Some(leg) if !leg.is_stuck() => {
                mode_utility += utility_of(leg.mode, agent.segment, &realized_attributes(world, leg), p);
                if Some(i) == work_leg {
                    if let (Some(arr), Some(want)) = (leg.arrival, agent.desired_arrival) {
                        delay += cfg.beta_late_per_h * hours(arr.saturating_sub(want));
                    }
                }
            }
            _ => mode_utility += cfg.stuck_penalty,
        }
    }
    PlanScore {
        agent: agent.id,
        score: mode_utility + delay,
        mode_utility,
        schedule_delay: delay,
    }
}

/// Score every agent's executed plan; the result is independent of thread count.
pub fn score_day(
    world: &World,
    agents: &[Agent],
    plans: &[DayPlan],
    day: &ExecutedDay,
    p: &UtilityParams,
    cfg: &EngineConfig,
) -> Vec<PlanScore> {
    agents
        .par_iter()
        .zip(plans.par_iter())
        .zip(day.legs.par_iter())
        .map(|((a, plan), legs)| score_plan(world, a, plan, legs, p, cfg))
        .collect()
}
