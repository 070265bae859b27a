//! The reopening scenario matrix and the comparisons between scenario runs.

mod report;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mode_choice::{apply_asc_delta, AscDelta, ChoiceConfig, UtilityParams};
use crate::network::{build_toy_city, ToyCity, ToyCitySpec};
use crate::population::{
    assign_wfh, build_agendas, synthesize_population, AgendaConfig, IndustryWfhTable, Population, PopulationSpec,
};
use crate::sim::{initial_plans, run_iterations, CapacityPolicy, EngineConfig, ExecutedDay, IterationStats, World};
use crate::types::{AgentId, IndustryId, Mode, Phase, Segment, NOT_WORKING};

pub use report::{
    car_trip_stats, consumer_surplus_delta, industry_trip_delta, share_change_pp, trip_ratio, write_comparison,
    write_report, CarLeg, CarStats, Region, RegionSurplus, SurplusDelta,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleVariant {
    Regular,
    Covid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamSet {
    Precovid,
    Covid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub phase: Phase,
    pub capacity_factor: f64,
    pub params: ParamSet,
    pub schedule: ScheduleVariant,
    pub seed: u64,
    pub n_iter: u32,
}

impl ScenarioSpec {
    /// A scenario with the timetable and parameters its phase implies.
    pub fn for_phase(phase: Phase, capacity_factor: f64, seed: u64, n_iter: u32) -> Self {
        let name = if capacity_factor < 1.0 {
            format!("{phase}_cap{}", (capacity_factor * 100.0).round())
        } else {
            phase.to_string()
        };
        let schedule = match phase {
            Phase::PreCovid | Phase::Phase3 | Phase::Phase4 => ScheduleVariant::Regular,
            Phase::Covid | Phase::Phase1 | Phase::Phase2 => ScheduleVariant::Covid,
        };
        let params = if phase == Phase::PreCovid { ParamSet::Precovid } else { ParamSet::Covid };
        ScenarioSpec {
            name,
            phase,
            capacity_factor,
            params,
            schedule,
            seed,
            n_iter,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.capacity_factor > 0.0 && self.capacity_factor <= 1.0) {
            return Err(Error::Config(format!(
                "{}: capacity factor {} outside (0, 1]",
                self.name, self.capacity_factor
            )));
        }
        if self.n_iter == 0 {
            return Err(Error::Config(format!("{}: n_iter must be ≥ 1", self.name)));
        }
        if self.phase == Phase::PreCovid && (self.capacity_factor != 1.0 || self.params != ParamSet::Precovid) {
            return Err(Error::Config(format!(
                "{}: the pre-pandemic scenario runs at full capacity with pre-pandemic parameters",
                self.name
            )));
        }
        let want = ScenarioSpec::for_phase(self.phase, 1.0, 0, 1).schedule;
        if matches!(self.phase, Phase::Phase1 | Phase::Phase2 | Phase::Phase3 | Phase::Phase4) && self.schedule != want {
            return Err(Error::Config(format!(
                "{}: phase {} runs on the {:?} timetable",
                self.name, self.phase, want
            )));
        }
        Ok(())
    }
}

/// The ten scenarios: pre-pandemic, stay-at-home, and phases 1 to 4 with and
/// without the 50% transit capacity restriction.
pub fn default_matrix(seed: u64, n_iter: u32) -> Vec<ScenarioSpec> {
    let mut out = vec![
        ScenarioSpec::for_phase(Phase::PreCovid, 1.0, seed, n_iter),
        ScenarioSpec::for_phase(Phase::Covid, 1.0, seed, n_iter),
    ];
    let phases = [Phase::Phase1, Phase::Phase2, Phase::Phase3, Phase::Phase4];
    for factor in [1.0, 0.5] {
        out.extend(phases.iter().map(|&p| ScenarioSpec::for_phase(p, factor, seed, n_iter)));
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurplusConfig {
    /// Currency per hour.
    pub vot_per_h: f64,
    /// Utility per hour; converts score differences into hours.
    pub mu_time: f64,
}

impl Default for SurplusConfig {
    fn default() -> Self {
        SurplusConfig {
            vot_per_h: 29.0,
            mu_time: 1.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UniverseConfig {
    pub city: ToyCitySpec,
    pub population: PopulationSpec,
    pub agenda: AgendaConfig,
    pub engine: EngineConfig,
    pub choice: ChoiceConfig,
    pub transit_router: RouterConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RouterConfig {
    pub transfer_penalty_s: f64,
}

impl Default for RouterConfig {
    fn default() -> Self {
        RouterConfig {
            transfer_penalty_s: 300.0,
        }
    }
}

/// The city, the synthetic population and the parameter sets shared by every
/// scenario that is compared with another.
#[derive(Clone, Debug)]
pub struct Universe {
    pub config: UniverseConfig,
    pub table: IndustryWfhTable,
    pub precovid: UtilityParams,
    pub covid: UtilityParams,
    pub city: ToyCity,
    pub regular: World,
    pub reduced: World,
    pub base: Population,
    pub hash: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Universe {
    pub fn build(
        config: UniverseConfig,
        table: IndustryWfhTable,
        precovid: UtilityParams,
        covid: UtilityParams,
    ) -> Result<Self> {
        config.engine.validate()?;
        precovid.validate()?;
        covid.validate()?;
        let city = build_toy_city(&config.city)?;
        let world = |schedule| {
            World::new(
                city.network.clone(),
                schedule,
                city.zones.clone(),
                config.choice.clone(),
                config.city.access_radius_m,
                config.transit_router.transfer_penalty_s,
            )
        };
        let regular = world(city.schedule.clone())?;
        let reduced = world(city.covid_schedule.clone())?;
        let base = synthesize_population(&config.population, &city.zones)?;
        for a in &base.agents {
            if a.industry != NOT_WORKING && table.row(a.industry).is_none() {
                return Err(Error::Validation(format!(
                    "population uses industry {} missing from the WFH table",
                    a.industry
                )));
            }
        }
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&base.agents)?);
        h.update(serde_json::to_vec(&city.network.links)?);
        h.update(serde_json::to_vec(&city.zones)?);
        h.update(serde_json::to_vec(&city.schedule)?);
        h.update(serde_json::to_vec(&city.covid_schedule)?);
        let hash = hex::encode(h.finalize());
        Ok(Universe {
            config,
            table,
            precovid,
            covid,
            city,
            regular,
            reduced,
            base,
            hash,
        })
    }

    /// Shipped tables with the published stay-at-home constant shifts.
    pub fn with_defaults(config: UniverseConfig) -> Result<Self> {
        let pre = UtilityParams::builtin_precovid();
        let covid = apply_asc_delta(&pre, &AscDelta::builtin_covid());
        Self::build(config, IndustryWfhTable::builtin(), pre, covid)
    }

    pub fn world(&self, v: ScheduleVariant) -> &World {
        match v {
            ScheduleVariant::Regular => &self.regular,
            ScheduleVariant::Covid => &self.reduced,
        }
    }

    pub fn params(&self, s: ParamSet) -> &UtilityParams {
        match s {
            ParamSet::Precovid => &self.precovid,
            ParamSet::Covid => &self.covid,
        }
    }

    /// Population with WFH flags and agendas for a phase.
    pub fn phase_population(&self, phase: Phase, schedule: ScheduleVariant, seed: u64) -> Result<Population> {
        let pop = assign_wfh(&self.base, &self.table, phase, seed)?;
        let world = self.world(schedule);
        let estimate = |o, d| world.free_flow_secs(o, d);
        build_agendas(&pop, phase, seed, &self.config.agenda, &self.city.zones, &estimate)
    }

    fn is_core(&self, z: crate::types::ZoneId) -> bool {
        self.city.zones[z.index()].segment == Segment::Core
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentOutcome {
    pub agent: AgentId,
    pub score: f64,
    pub uses_car: bool,
    /// Some trip of the day ends at a non-home activity in a core zone.
    pub core_destination: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkHourRow {
    pub link: u32,
    pub hour: u32,
    pub volume: u32,
    pub mean_speed_mps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub spec: ScenarioSpec,
    pub universe_hash: String,
    pub config_hash: String,
    pub trips: BTreeMap<Mode, u64>,
    pub shares: BTreeMap<Mode, f64>,
    /// Trips per working industry and mode.
    pub industry_trips: BTreeMap<IndustryId, BTreeMap<Mode, u64>>,
    pub non_working_trips: BTreeMap<Mode, u64>,
    pub car_legs: Vec<CarLeg>,
    pub agents: Vec<AgentOutcome>,
    pub link_profile: Vec<LinkHourRow>,
    pub trace: Vec<IterationStats>,
    pub departures: u64,
    pub arrivals: u64,
    pub stuck: u64,
    pub denied_boardings: u64,
    pub wfh_rate: f64,
}

impl ScenarioReport {
    pub fn total_trips(&self) -> u64 {
        self.trips.values().sum()
    }

    pub fn trips_of(&self, m: Mode) -> u64 {
        self.trips.get(&m).copied().unwrap_or(0)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn trace_csv(&self) -> String {
        let mut s = String::from("iter,mean_score");
        for m in Mode::ALL {
            let _ = write!(s, ",{m}");
        }
        s.push('\n');
        for t in &self.trace {
            let _ = write!(s, "{},{}", t.iter, t.mean_score);
            for c in t.mode_counts {
                let _ = write!(s, ",{c}");
            }
            s.push('\n');
        }
        s
    }
}

/// Everything a scenario run produces.
#[derive(Clone, Debug)]
pub struct ScenarioRun {
    pub report: ScenarioReport,
    pub final_day: ExecutedDay,
}

fn mode_map() -> BTreeMap<Mode, u64> {
    Mode::ALL.into_iter().map(|m| (m, 0)).collect()
}

/// Hash of everything besides the universe that determines a report.
pub fn config_hash(u: &Universe, spec: &ScenarioSpec, params: &UtilityParams) -> Result<String> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&u.config)?);
    h.update(serde_json::to_vec(spec)?);
    h.update(params.to_csv_string().as_bytes());
    Ok(hex::encode(h.finalize()))
}

/// Run one scenario with the parameter set its spec names.
pub fn run_scenario(u: &Universe, spec: &ScenarioSpec, record_events: bool) -> Result<ScenarioRun> {
    run_scenario_with_params(u, spec, u.params(spec.params), record_events)
}

/// Run one scenario to equilibrium under explicit parameters and summarise its final day.
pub fn run_scenario_with_params(
    u: &Universe,
    spec: &ScenarioSpec,
    params: &UtilityParams,
    record_events: bool,
) -> Result<ScenarioRun> {
    spec.validate()?;
    let world = u.world(spec.schedule);
    let pop = u.phase_population(spec.phase, spec.schedule, spec.seed)?;
    let plans = initial_plans(world, &pop.agents, &pop.plans, params, spec.seed)?;
    let policy = CapacityPolicy::new(spec.capacity_factor, pop.sample_fraction)?;
    let result = run_iterations(
        world,
        &pop.agents,
        plans,
        params,
        &policy,
        &u.config.engine,
        spec.n_iter,
        spec.seed,
        record_events,
    )?;
    let day = result.final_day;

    let mut trips = mode_map();
    let mut industry_trips: BTreeMap<IndustryId, BTreeMap<Mode, u64>> = BTreeMap::new();
    let mut non_working_trips = mode_map();
    let mut car_legs = Vec::new();
    let mut agents = Vec::with_capacity(pop.agents.len());
    for ((agent, legs), score) in pop.agents.iter().zip(&day.legs).zip(&result.final_scores) {
        let per_industry = if agent.is_worker() {
            industry_trips.entry(agent.industry).or_insert_with(mode_map)
        } else {
            &mut non_working_trips
        };
        let mut uses_car = false;
        let mut core_destination = false;
        for leg in legs {
            *trips.get_mut(&leg.mode).expect("all modes present") += 1;
            *per_industry.get_mut(&leg.mode).expect("all modes present") += 1;
            let core = u.is_core(leg.destination);
            core_destination |= core && leg.destination != agent.home_zone;
            if leg.mode == Mode::Car {
                uses_car = true;
                if let Some(arr) = leg.arrival {
                    car_legs.push(CarLeg {
                        core_destination: core,
                        distance_m: leg.distance_m,
                        time_s: arr - leg.departure,
                    });
                }
            }
        }
        agents.push(AgentOutcome {
            agent: agent.id,
            score: score.score,
            uses_car,
            core_destination,
        });
    }
    let total: u64 = trips.values().sum();
    let shares = trips
        .iter()
        .map(|(&m, &c)| (m, if total == 0 { 0.0 } else { c as f64 / total as f64 }))
        .collect();

    let mut link_profile = Vec::new();
    for (l, hours) in day.link_hours.iter().enumerate() {
        let length = world.network.links[l].length;
        for (h, bin) in hours.iter().enumerate() {
            if bin.entries == 0 && bin.exits == 0 {
                continue;
            }
            let speed = if bin.exits > 0 && bin.travel_s > 0 {
                length * f64::from(bin.exits) / bin.travel_s as f64
            } else {
                world.network.links[l].free_speed
            };
            link_profile.push(LinkHourRow {
                link: l as u32,
                hour: h as u32,
                volume: bin.entries,
                mean_speed_mps: speed,
            });
        }
    }

    let config_hash = config_hash(u, spec, params)?;

    let report = ScenarioReport {
        spec: spec.clone(),
        universe_hash: u.hash.clone(),
        config_hash,
        trips,
        shares,
        industry_trips,
        non_working_trips,
        car_legs,
        agents,
        link_profile,
        trace: result.trace,
        departures: day.departures,
        arrivals: day.arrivals,
        stuck: day.stuck,
        denied_boardings: day.denied_boardings,
        wfh_rate: crate::population::overall_wfh_rate(&pop),
    };
    Ok(ScenarioRun { report, final_day: day })
}
