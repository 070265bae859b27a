use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{EngineConfig, World};
use crate::error::{Error, Result};
use crate::mode_choice::{sample_mode, UtilityParams};
use crate::population::{Agent, DayPlan};

/// Per-agent, per-iteration probabilities of each plan mutation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MutationRates {
    pub mode: f64,
    pub time: f64,
}

impl Default for MutationRates {
    fn default() -> Self {
        MutationRates { mode: 0.1, time: 0.1 }
    }
}

impl MutationRates {
    pub const NONE: MutationRates = MutationRates { mode: 0.0, time: 0.0 };

    pub fn validate(&self) -> Result<()> {
        let ok = |r: f64| (0.0..=1.0).contains(&r);
        if ok(self.mode) && ok(self.time) && self.mode + self.time <= 1.0 {
            Ok(())
        } else {
            Err(Error::Config("mutation rates must be in [0, 1] and sum to at most 1".into()))
        }
    }
}

/// The plans an agent remembers, with the score each earned when last executed.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanMemory {
    plans: Vec<(DayPlan, Option<f64>)>,
    selected: usize,
    capacity: usize,
}

impl PlanMemory {
    pub fn new(plan: DayPlan, capacity: usize) -> Self {
        PlanMemory {
            plans: vec![(plan, None)],
            selected: 0,
            capacity: capacity.max(1),
        }
    }

    pub fn len(&self) -> usize {
        self.plans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plans.is_empty()
    }

    pub fn plans(&self) -> impl Iterator<Item = (&DayPlan, Option<f64>)> {
        self.plans.iter().map(|(p, s)| (p, *s))
    }

    pub fn selected(&self) -> &DayPlan {
        &self.plans[self.selected].0
    }

    pub fn selected_score(&self) -> Option<f64> {
        self.plans[self.selected].1
    }

    pub fn set_selected_score(&mut self, score: f64) {
        self.plans[self.selected].1 = Some(score);
    }

    /// Insert a plan and select it. At capacity the worst-scored plan goes first.
    pub fn add(&mut self, plan: DayPlan, score: Option<f64>) {
        if self.plans.len() >= self.capacity {
            let worst = self
                .plans
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    let key = |s: Option<f64>| s.unwrap_or(f64::INFINITY);
                    key(a.1).total_cmp(&key(b.1))
                })
                .map(|(i, _)| i)
                .expect("memory is non-empty");
            self.plans.remove(worst);
        }
        self.plans.push((plan, score));
        self.selected = self.plans.len() - 1;
    }

    /// Choose among remembered plans with probability proportional to
    /// `exp(score / temperature)`. Unscored plans count as the best score.
    pub fn select_logit<R: Rng + ?Sized>(&mut self, rng: &mut R, temperature: f64) {
        let best = self
            .plans
            .iter()
            .filter_map(|p| p.1)
            .fold(f64::NEG_INFINITY, f64::max);
        let best = if best.is_finite() { best } else { 0.0 };
        let weights: Vec<f64> = self
            .plans
            .iter()
            .map(|p| ((p.1.unwrap_or(best) - best) / temperature).exp())
            .collect();
        let total: f64 = weights.iter().sum();
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        self.selected = self.plans.len() - 1;
        for (i, w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                self.selected = i;
                break;
            }
        }
    }
}

/// Produce the agent's plan for the next day.
///
/// With probability `rates.mode` one random leg gets a freshly sampled mode;
/// with probability `rates.time` the whole plan shifts by a uniform offset;
/// otherwise a remembered plan is chosen by score.
pub fn replan<R: Rng + ?Sized>(
    world: &World,
    agent: &Agent,
    memory: &mut PlanMemory,
    p: &UtilityParams,
    rates: &MutationRates,
    cfg: &EngineConfig,
    rng: &mut R,
) -> Result<DayPlan> {
    let u: f64 = rng.random();
    let n_legs = memory.selected().legs.len();
    if u < rates.mode && n_legs > 0 {
        let mut plan = memory.selected().clone();
        let k = rng.random_range(0..n_legs);
        let leg = &mut plan.legs[k];
        let ctx = world.choice_context(agent, leg.origin, leg.destination);
        leg.mode = sample_mode(&ctx, p, rng)?;
        memory.add(plan, None);
    } else if u < rates.mode + rates.time && n_legs > 0 {
        let mut plan = memory.selected().clone();
        let j = i64::from(cfg.time_jitter_s);
        plan.shift_times(rng.random_range(-j..=j));
        memory.add(plan, None);
    } else {
        memory.select_logit(rng, cfg.selection_temperature);
    }
    Ok(memory.selected().clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ZoneId;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn plan(z: u32) -> DayPlan {
        DayPlan::home_only(ZoneId(z))
    }

    #[test]
    fn eviction_drops_the_worst() {
        let mut m = PlanMemory::new(plan(0), 3);
        m.set_selected_score(-1.0);
        m.add(plan(1), Some(-5.0));
        m.add(plan(2), Some(2.0));
        m.add(plan(3), Some(4.0));
        assert_eq!(m.len(), 3);
        let zones: Vec<u32> = m.plans().map(|(p, _)| p.activities[0].zone.0).collect();
        assert_eq!(zones, vec![0, 2, 3]);
        assert_eq!(m.selected().activities[0].zone, ZoneId(3));
    }

    #[test]
    fn logit_selection_prefers_high_scores() {
        let mut m = PlanMemory::new(plan(0), 5);
        m.set_selected_score(0.0);
        m.add(plan(1), Some(3.0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 20_000;
        let mut hits = 0;
        for _ in 0..n {
            m.select_logit(&mut rng, 1.0);
            hits += usize::from(m.selected().activities[0].zone == ZoneId(1));
        }
        let want = 3f64.exp() / (1.0 + 3f64.exp());
        assert!((hits as f64 / n as f64 - want).abs() < 0.01);
    }

    #[test]
    fn rates_are_validated() {
        assert!(MutationRates { mode: 0.6, time: 0.5 }.validate().is_err());
        assert!(MutationRates::default().validate().is_ok());
    }
}
