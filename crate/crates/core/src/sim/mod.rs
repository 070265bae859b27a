//! The day loop: execute plans on the network, score them, replan.

mod execute;
mod iterate;
mod replan;
mod score;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mode_choice::{ChoiceConfig, ChoiceContext, ModeAttributes};
use crate::network::{Network, RouteTable, TransitPath, TransitRouter, TransitRouterParams, TransitSchedule, Zone};
use crate::population::Agent;
use crate::types::{Mode, Seconds, ZoneId};

pub use execute::{execute_day, EventKind, EventRecord, ExecutedDay, ExecutedLeg, LinkHour, Location, VehicleRef};
pub use iterate::{initial_plans, run_iterations, EquilibriumResult, IterationStats};
pub use replan::{replan, MutationRates, PlanMemory};
pub use score::{score_day, score_plan, PlanScore};

/// Transit capacity restriction and sample downscaling.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacityPolicy {
    pub transit_capacity_factor: f64,
    /// Population sample fraction; road capacities and seats are scaled by it.
    pub scaling: f64,
}

impl CapacityPolicy {
    pub fn new(transit_capacity_factor: f64, scaling: f64) -> Result<Self> {
        let p = CapacityPolicy {
            transit_capacity_factor,
            scaling,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v <= 1.0;
        if !ok(self.transit_capacity_factor) {
            return Err(Error::Domain(format!(
                "capacity factor {} outside (0, 1]",
                self.transit_capacity_factor
            )));
        }
        if !ok(self.scaling) {
            return Err(Error::Domain(format!("scaling {} outside (0, 1]", self.scaling)));
        }
        Ok(())
    }

    /// Seats available on one run. The small epsilon keeps products such as
    /// 400 × 0.5 × 0.04 from rounding up past an exact integer.
    pub fn effective_seats(&self, seat_capacity: u32) -> u32 {
        let x = f64::from(seat_capacity) * self.transit_capacity_factor * self.scaling;
        ((x - 1e-9).ceil() as u32).max(1)
    }

    pub fn flow_capacity(&self, vehicles_per_hour: f64) -> f64 {
        vehicles_per_hour * self.scaling
    }

    pub fn storage(&self, vehicles: f64) -> u32 {
        ((vehicles * self.scaling - 1e-9).ceil() as u32).max(1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    /// Utility per hour of late arrival at work.
    pub beta_late_per_h: f64,
    /// Score of a leg that was not completed.
    pub stuck_penalty: f64,
    pub max_wait_s: Seconds,
    /// A vehicle blocked by a full downstream link is pushed through after this long.
    pub stuck_time_s: Seconds,
    pub day_end_s: Seconds,
    pub memory_size: usize,
    pub selection_temperature: f64,
    pub rates: MutationRates,
    pub time_jitter_s: Seconds,
    pub cooldown_fraction: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            beta_late_per_h: -12.0,
            stuck_penalty: -10.0,
            max_wait_s: 3600,
            stuck_time_s: 600,
            day_end_s: 30 * 3600,
            memory_size: 5,
            selection_temperature: 1.0,
            rates: MutationRates::default(),
            time_jitter_s: 900,
            cooldown_fraction: 0.1,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta_late_per_h <= 0.0) || !self.stuck_penalty.is_finite() {
            return Err(Error::Config("beta_late_per_h must be ≤ 0 and stuck_penalty finite".into()));
        }
        if self.memory_size == 0 {
            return Err(Error::Config("memory_size must be ≥ 1".into()));
        }
        if !(self.selection_temperature > 0.0) {
            return Err(Error::Config("selection_temperature must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.cooldown_fraction) {
            return Err(Error::Config("cooldown_fraction must be in [0, 1]".into()));
        }
        self.rates.validate()
    }
}

/// Everything immutable that a day of simulation reads.
#[derive(Clone, Debug)]
pub struct World {
    pub network: Network,
    pub schedule: TransitSchedule,
    pub zones: Vec<Zone>,
    pub routes: RouteTable,
    pub transit: TransitRouter,
    pub choice: ChoiceConfig,
}

impl World {
    pub fn new(
        network: Network,
        schedule: TransitSchedule,
        zones: Vec<Zone>,
        choice: ChoiceConfig,
        access_radius_m: f64,
        transfer_penalty_s: f64,
    ) -> Result<Self> {
        choice.validate()?;
        let routes = RouteTable::build(&network, &zones)?;
        let params = TransitRouterParams {
            access_radius_m,
            walk_speed_mps: choice.walk_speed_mps,
            beeline_factor: choice.beeline_factor,
            transfer_penalty_s,
        };
        let transit = TransitRouter::build(&network, &zones, &schedule, &params)?;
        Ok(World {
            network,
            schedule,
            zones,
            routes,
            transit,
            choice,
        })
    }

    pub fn beeline_m(&self, o: ZoneId, d: ZoneId) -> f64 {
        self.network
            .distance(self.zones[o.index()].centroid, self.zones[d.index()].centroid)
    }

    pub fn walk_secs(&self, meters: f64) -> Seconds {
        (meters / self.choice.walk_speed_mps).ceil() as Seconds
    }

    pub fn free_flow_secs(&self, o: ZoneId, d: ZoneId) -> Seconds {
        self.routes.get(o, d).map_or(0, |r| r.free_flow_s.ceil() as Seconds)
    }

    fn transit_estimate(&self, path: &TransitPath) -> ModeAttributes {
        let walk = |m: f64| m / self.choice.walk_speed_mps;
        let mut a = ModeAttributes {
            cost: self.choice.transit_fare,
            egress_h: walk(path.egress_m) / 3600.0,
            ..Default::default()
        };
        for (k, seg) in path.segments.iter().enumerate() {
            let line = self.schedule.line(seg.line);
            let wait = line.mean_headway() / 2.0;
            if k == 0 {
                a.access_h = (walk(path.access_m) + wait) / 3600.0;
            } else {
                a.transfer_h += wait / 3600.0;
            }
            a.in_vehicle_h += f64::from(line.offset(seg.alight) - line.offset(seg.board)) / 3600.0;
        }
        a
    }

    /// Expected level of service of every available mode for a trip.
    pub fn choice_context(&self, agent: &Agent, o: ZoneId, d: ZoneId) -> ChoiceContext {
        let mut ctx = ChoiceContext::new(agent.segment);
        let beeline = self.beeline_m(o, d);
        for mode in [Mode::Walk, Mode::Bike, Mode::Citibike] {
            if mode == Mode::Citibike && !self.choice.citibike_available {
                continue;
            }
            let secs = self.choice.teleport_secs(mode, beeline).expect("fixed-speed mode");
            let km = beeline * self.choice.beeline_factor / 1000.0;
            ctx = ctx.with(mode, ModeAttributes::moving(secs / 3600.0, self.choice.cost(mode, km)));
        }
        if let Some(route) = self.routes.get(o, d) {
            let hours = route.free_flow_s / 3600.0;
            let km = route.length_m / 1000.0;
            for mode in [Mode::Car, Mode::Carpool, Mode::Taxi, Mode::Fhv] {
                let available = match mode {
                    Mode::Car => agent.has_car,
                    Mode::Fhv => self.choice.fhv_available,
                    _ => true,
                };
                if available {
                    ctx = ctx.with(mode, ModeAttributes::moving(hours, self.choice.cost(mode, km)));
                }
            }
        }
        if self.zones[o.index()].transit_accessible {
            if let Some(path) = self.transit.get(o, d) {
                ctx = ctx.with(Mode::Transit, self.transit_estimate(path));
            }
        }
        ctx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn effective_seats_round_up_without_float_creep() {
        let p = CapacityPolicy::new(0.5, 0.04).unwrap();
        assert_eq!(p.effective_seats(400), 8);
        assert_eq!(p.effective_seats(401), 9);
        assert_eq!(CapacityPolicy::new(0.5, 1.0).unwrap().effective_seats(100), 50);
        assert_eq!(CapacityPolicy::new(1.0, 0.04).unwrap().effective_seats(1), 1);
        assert!(CapacityPolicy::new(0.0, 1.0).is_err());
        assert!(CapacityPolicy::new(1.5, 1.0).is_err());
    }
}
