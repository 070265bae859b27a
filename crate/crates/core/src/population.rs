//! Synthetic agents, the per-industry non-WFH table and daily agendas.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Zone;
use crate::seed::{self, stream};
use crate::types::{AgentId, IndustryId, Mode, Phase, Seconds, Segment, ZoneId, NOT_WORKING};

const BUILTIN_INDUSTRY_TABLE: &str = include_str!("../data/industry_wfh.csv");

/// Industry ids the table may contain. Id 10 has no row in the source table.
pub const KNOWN_INDUSTRIES: [IndustryId; 16] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 11, 12, 13, 14, 15, 16, 17];

const TABLE_COLUMNS: [&str; 7] = ["id", "label", "covid", "phase1", "phase2", "phase3", "phase4"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndustryRow {
    pub label: String,
    /// Non-WFH share for COVID, Phase1..Phase4.
    pub non_wfh: [f64; 5],
}

/// Share of each industry still commuting, per phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndustryWfhTable {
    rows: BTreeMap<IndustryId, IndustryRow>,
}

impl IndustryWfhTable {
    pub fn builtin() -> Self {
        Self::from_csv_reader(BUILTIN_INDUSTRY_TABLE.as_bytes(), "builtin industry table")
            .expect("shipped industry table is valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(file, path.display().to_string())
    }

    pub fn from_csv_reader<R: Read>(reader: R, source_name: impl Into<String>) -> Result<Self> {
        let source_name = source_name.into();
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let mut column = [0usize; 7];
        for (slot, name) in column.iter_mut().zip(TABLE_COLUMNS) {
            *slot = headers
                .iter()
                .position(|h| h.eq_ignore_ascii_case(name))
                .ok_or_else(|| Error::parse(&source_name, 1, format!("missing column '{name}'")))?;
        }

        let mut rows = BTreeMap::new();
        for (i, record) in rdr.records().enumerate() {
            let row_no = i + 2;
            let record = record.map_err(|e| Error::parse(&source_name, row_no, e.to_string()))?;
            let field = |c: usize| record.get(column[c]).unwrap_or("");
            let id: IndustryId = field(0)
                .parse()
                .map_err(|_| Error::parse(&source_name, row_no, format!("bad industry id '{}'", field(0))))?;
            if !KNOWN_INDUSTRIES.contains(&id) {
                return Err(Error::Validation(format!(
                    "row {row_no}: unknown industry id {id}"
                )));
            }
            let mut non_wfh = [0.0; 5];
            for (k, slot) in non_wfh.iter_mut().enumerate() {
                let raw = field(k + 2);
                let v: f64 = raw.parse().map_err(|_| {
                    Error::parse(&source_name, row_no, format!("bad fraction '{raw}' in column {}", TABLE_COLUMNS[k + 2]))
                })?;
                *slot = v;
            }
            let row = IndustryRow {
                label: field(1).to_string(),
                non_wfh,
            };
            if rows.insert(id, row).is_some() {
                return Err(Error::Validation(format!("row {row_no}: duplicate industry id {id}")));
            }
        }
        let table = IndustryWfhTable { rows };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<()> {
        for (&id, row) in &self.rows {
            if !KNOWN_INDUSTRIES.contains(&id) {
                return Err(Error::Validation(format!("unknown industry id {id}")));
            }
            for (k, &v) in row.non_wfh.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                    return Err(Error::Validation(format!(
                        "industry {id}: {} fraction {v} outside [0,1]",
                        TABLE_COLUMNS[k + 2]
                    )));
                }
            }
            if id >= 2 && row.non_wfh.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::Validation(format!(
                    "industry {id}: non-WFH shares decrease between phases"
                )));
            }
        }
        Ok(())
    }

    pub fn row(&self, id: IndustryId) -> Option<&IndustryRow> {
        self.rows.get(&id)
    }

    pub fn ids(&self) -> impl Iterator<Item = IndustryId> + '_ {
        self.rows.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Probability that a member of `industry` commutes in `phase`.
    ///
    /// Non-workers never commute, whatever their row says; before the
    /// pandemic every worker commutes.
    pub fn non_wfh(&self, industry: IndustryId, phase: Phase) -> Option<f64> {
        let row = self.rows.get(&industry)?;
        if industry == NOT_WORKING {
            return Some(0.0);
        }
        Some(match phase.table_column() {
            None => 1.0,
            Some(c) => row.non_wfh[c],
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub id: AgentId,
    pub industry: IndustryId,
    pub segment: Segment,
    pub home_zone: ZoneId,
    pub work_zone: Option<ZoneId>,
    pub works_from_home: bool,
    pub desired_arrival: Option<Seconds>,
    pub has_car: bool,
}

impl Agent {
    pub fn is_worker(&self) -> bool {
        self.industry != NOT_WORKING
    }

    pub fn commutes(&self) -> bool {
        self.is_worker() && !self.works_from_home
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivityKind {
    Home,
    Work,
    Secondary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Activity {
    pub kind: ActivityKind,
    pub zone: ZoneId,
    /// `None` for the final activity of the day.
    pub end_time: Option<Seconds>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Leg {
    /// Placeholder (`Walk`) until the choice model assigns initial modes.
    pub mode: Mode,
    pub origin: ZoneId,
    pub destination: ZoneId,
    pub departure: Seconds,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DayPlan {
    pub activities: Vec<Activity>,
    pub legs: Vec<Leg>,
}

impl DayPlan {
    pub fn home_only(zone: ZoneId) -> Self {
        DayPlan {
            activities: vec![Activity {
                kind: ActivityKind::Home,
                zone,
                end_time: None,
            }],
            legs: Vec::new(),
        }
    }

    fn from_stops(stops: &[(ActivityKind, ZoneId, Seconds)], final_zone: ZoneId) -> Self {
        let mut activities: Vec<Activity> = stops
            .iter()
            .map(|&(kind, zone, end)| Activity {
                kind,
                zone,
                end_time: Some(end),
            })
            .collect();
        activities.push(Activity {
            kind: ActivityKind::Home,
            zone: final_zone,
            end_time: None,
        });
        let legs = activities
            .windows(2)
            .map(|w| Leg {
                mode: Mode::Walk,
                origin: w[0].zone,
                destination: w[1].zone,
                departure: w[0].end_time.expect("non-final activity has an end time"),
            })
            .collect();
        DayPlan { activities, legs }
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .activities
            .first()
            .ok_or_else(|| Error::Invariant("plan without activities".into()))?;
        let last = self.activities.last().expect("non-empty");
        if first.kind != ActivityKind::Home || last.kind != ActivityKind::Home {
            return Err(Error::Invariant("plan must start and end at home".into()));
        }
        if self.legs.len() + 1 != self.activities.len() {
            return Err(Error::Invariant("legs must alternate with activities".into()));
        }
        if last.end_time.is_some() {
            return Err(Error::Invariant("final activity has an end time".into()));
        }
        let mut prev: Option<Seconds> = None;
        for (i, leg) in self.legs.iter().enumerate() {
            let (from, to) = (&self.activities[i], &self.activities[i + 1]);
            if leg.origin != from.zone || leg.destination != to.zone {
                return Err(Error::Invariant(format!("leg {i} does not connect its activities")));
            }
            let end = from
                .end_time
                .ok_or_else(|| Error::Invariant(format!("activity {i} lacks an end time")))?;
            if leg.departure != end {
                return Err(Error::Invariant(format!("leg {i} departure differs from activity end")));
            }
            if prev.is_some_and(|p| end <= p) {
                return Err(Error::Invariant("activity end times must increase".into()));
            }
            prev = Some(end);
        }
        Ok(())
    }

    /// Shift every activity end (and leg departure) by `delta` seconds,
    /// clamping at midnight while keeping times strictly increasing.
    pub fn shift_times(&mut self, delta: i64) {
        let mut floor: i64 = 0;
        for (i, act) in self.activities.iter_mut().enumerate() {
            if let Some(end) = act.end_time.as_mut() {
                let shifted = (i64::from(*end) + delta).max(floor);
                *end = shifted as Seconds;
                floor = shifted + 1;
                self.legs[i].departure = *end;
            }
        }
    }

    pub fn work_leg_index(&self) -> Option<usize> {
        self.activities
            .iter()
            .position(|a| a.kind == ActivityKind::Work)
            .and_then(|i| i.checked_sub(1))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub agents: Vec<Agent>,
    /// Filled by [`build_agendas`]; aligned with `agents`.
    #[serde(default)]
    pub plans: Vec<DayPlan>,
    pub sample_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CarOwnership {
    pub core: f64,
    pub periphery: f64,
}

impl Default for CarOwnership {
    fn default() -> Self {
        CarOwnership {
            core: 0.22,
            periphery: 0.55,
        }
    }
}

impl CarOwnership {
    pub fn for_segment(&self, s: Segment) -> f64 {
        match s {
            Segment::Core => self.core,
            Segment::Periphery => self.periphery,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PopulationSpec {
    pub n_agents: usize,
    pub industry_mix: BTreeMap<IndustryId, f64>,
    /// Share of residents living in core zones.
    pub core_share: f64,
    /// Share of jobs located in core zones.
    pub work_core_share: f64,
    pub car_ownership: CarOwnership,
    pub sample_fraction: f64,
    pub seed: u64,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        PopulationSpec {
            n_agents: 10_000,
            industry_mix: Self::nyc_like_mix(),
            core_share: 0.25,
            work_core_share: 0.6,
            car_ownership: CarOwnership::default(),
            sample_fraction: 0.04,
            seed: 1,
        }
    }
}

impl PopulationSpec {
    /// Rough NYC employment structure with 45% of residents not working.
    pub fn nyc_like_mix() -> BTreeMap<IndustryId, f64> {
        [
            (1, 0.45),
            (2, 0.0011),
            (3, 0.029),
            (4, 0.0185),
            (5, 0.0132),
            (6, 0.0501),
            (7, 0.0343),
            (8, 0.0238),
            (9, 0.0528),
            (11, 0.0528),
            (12, 0.0053),
            (13, 0.0264),
            (14, 0.1424),
            (15, 0.0528),
            (16, 0.0264),
            (17, 0.0211),
        ]
        .into_iter()
        .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_agents == 0 {
            return Err(Error::Config("n_agents must be at least 1".into()));
        }
        if self.industry_mix.is_empty() {
            return Err(Error::Config("industry_mix is empty".into()));
        }
        if let Some((id, v)) = self.industry_mix.iter().find(|(_, v)| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::Config(format!("industry {id} has invalid share {v}")));
        }
        let total: f64 = self.industry_mix.values().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("industry_mix sums to {total}, expected 1")));
        }
        for (name, v) in [
            ("core_share", self.core_share),
            ("work_core_share", self.work_core_share),
            ("car_ownership.core", self.car_ownership.core),
            ("car_ownership.periphery", self.car_ownership.periphery),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} = {v} outside [0,1]")));
            }
        }
        if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "sample_fraction = {} outside (0,1]",
                self.sample_fraction
            )));
        }
        Ok(())
    }
}

fn pick<T: Copy>(items: &[T], rng: &mut impl Rng) -> T {
    items[rng.random_range(0..items.len())]
}

/// Draw a zone from `preferred`, avoiding `exclude` where possible.
fn pick_zone_excluding(
    preferred: &[ZoneId],
    all: &[ZoneId],
    exclude: ZoneId,
    rng: &mut impl Rng,
) -> ZoneId {
    let pool: Vec<ZoneId> = preferred.iter().copied().filter(|z| *z != exclude).collect();
    if !pool.is_empty() {
        return pick(&pool, rng);
    }
    let pool: Vec<ZoneId> = all.iter().copied().filter(|z| *z != exclude).collect();
    if pool.is_empty() {
        exclude
    } else {
        pick(&pool, rng)
    }
}

pub fn synthesize_population(spec: &PopulationSpec, zones: &[Zone]) -> Result<Population> {
    spec.validate()?;
    let all: Vec<ZoneId> = zones.iter().map(|z| z.id).collect();
    let core: Vec<ZoneId> = zones.iter().filter(|z| z.segment == Segment::Core).map(|z| z.id).collect();
    let periphery: Vec<ZoneId> = zones
        .iter()
        .filter(|z| z.segment == Segment::Periphery)
        .map(|z| z.id)
        .collect();
    if all.len() < 2 {
        return Err(Error::Config("population needs at least two zones".into()));
    }
    if (spec.core_share > 0.0 && core.is_empty()) || (spec.core_share < 1.0 && periphery.is_empty()) {
        return Err(Error::Config("core_share requires zones of both segments".into()));
    }

    let mix: Vec<(IndustryId, f64)> = spec.industry_mix.iter().map(|(k, v)| (*k, *v)).collect();
    let agents = (0..spec.n_agents)
        .map(|i| {
            let id = AgentId(i as u32);
            let mut rng = seed::rng_for(spec.seed, stream::SYNTH, u64::from(id.0));
            let u_industry: f64 = rng.random();
            let u_segment: f64 = rng.random();
            let u_car: f64 = rng.random();
            let u_work: f64 = rng.random();

            let mut acc = 0.0;
            let mut industry = mix.last().expect("non-empty mix").0;
            for &(k, p) in &mix {
                acc += p;
                if u_industry < acc {
                    industry = k;
                    break;
                }
            }
            let segment = if u_segment < spec.core_share {
                Segment::Core
            } else {
                Segment::Periphery
            };
            let home_zone = match segment {
                Segment::Core => pick(&core, &mut rng),
                Segment::Periphery => pick(&periphery, &mut rng),
            };
            let work_zone = (industry != NOT_WORKING).then(|| {
                let preferred = if u_work < spec.work_core_share && !core.is_empty() {
                    &core
                } else if !periphery.is_empty() {
                    &periphery
                } else {
                    &core
                };
                pick_zone_excluding(preferred, &all, home_zone, &mut rng)
            });
            Agent {
                id,
                industry,
                segment,
                home_zone,
                work_zone,
                works_from_home: false,
                desired_arrival: None,
                has_car: u_car < spec.car_ownership.for_segment(segment),
            }
        })
        .collect();
    Ok(Population {
        agents,
        plans: Vec::new(),
        sample_fraction: spec.sample_fraction,
    })
}

/// Decide who works from home in `phase`.
///
/// Each agent draws one uniform number from `(seed, agent id)` and commutes
/// when it falls below the industry's non-WFH share. The draw does not depend
/// on the phase, so the set of commuters only grows along non-decreasing
/// table rows.
pub fn assign_wfh(pop: &Population, table: &IndustryWfhTable, phase: Phase, seed: u64) -> Result<Population> {
    let mut out = pop.clone();
    out.plans.clear();
    for agent in &mut out.agents {
        let p = table.non_wfh(agent.industry, phase).ok_or_else(|| {
            Error::Validation(format!("industry {} missing from non-WFH table", agent.industry))
        })?;
        agent.desired_arrival = None;
        if !agent.is_worker() {
            agent.works_from_home = true;
            continue;
        }
        let u: f64 = seed::rng_for(seed, stream::WFH, u64::from(agent.id.0)).random();
        agent.works_from_home = u >= p;
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WfhCount {
    pub agents: u64,
    pub commuting: u64,
    pub wfh: u64,
}

/// Per-industry commuter counts.
pub fn wfh_summary(pop: &Population) -> BTreeMap<IndustryId, WfhCount> {
    let mut out: BTreeMap<IndustryId, WfhCount> = BTreeMap::new();
    for a in &pop.agents {
        let e = out.entry(a.industry).or_default();
        e.agents += 1;
        if a.commutes() {
            e.commuting += 1;
        } else if a.is_worker() {
            e.wfh += 1;
        }
    }
    out
}

/// WFH share among workers.
pub fn overall_wfh_rate(pop: &Population) -> f64 {
    let workers = pop.agents.iter().filter(|a| a.is_worker()).count();
    if workers == 0 {
        return 0.0;
    }
    let wfh = pop.agents.iter().filter(|a| a.is_worker() && a.works_from_home).count();
    wfh as f64 / workers as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgendaConfig {
    /// Uniform window for the morning commute departure, seconds from midnight.
    pub departure_window: (Seconds, Seconds),
    pub work_duration_s: Seconds,
    /// Per-agent probability of a secondary activity in a fully open phase.
    pub secondary_base_rate: f64,
    /// Multipliers on the base rate for Phase1..Phase4.
    pub secondary_phase_scale: [f64; 4],
    pub secondary_window: (Seconds, Seconds),
    pub secondary_duration_s: Seconds,
}

impl Default for AgendaConfig {
    fn default() -> Self {
        AgendaConfig {
            departure_window: (6 * 3600 + 1800, 9 * 3600 + 1800),
            work_duration_s: 8 * 3600 + 1800,
            secondary_base_rate: 0.4,
            secondary_phase_scale: [0.25, 0.5, 0.75, 1.0],
            secondary_window: (10 * 3600, 16 * 3600),
            secondary_duration_s: 5400,
        }
    }
}

impl AgendaConfig {
    pub fn secondary_rate(&self, phase: Phase) -> f64 {
        match phase {
            Phase::PreCovid => self.secondary_base_rate,
            Phase::Covid => 0.0,
            Phase::Phase1 => self.secondary_base_rate * self.secondary_phase_scale[0],
            Phase::Phase2 => self.secondary_base_rate * self.secondary_phase_scale[1],
            Phase::Phase3 => self.secondary_base_rate * self.secondary_phase_scale[2],
            Phase::Phase4 => self.secondary_base_rate * self.secondary_phase_scale[3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.departure_window;
        let (c, d) = self.secondary_window;
        if a > b || c > d {
            return Err(Error::Config("agenda windows must have start <= end".into()));
        }
        if !(0.0..=1.0).contains(&self.secondary_base_rate)
            || self.secondary_phase_scale.iter().any(|s| !(0.0..=1.0).contains(s))
        {
            return Err(Error::Config("secondary rates must lie in [0,1]".into()));
        }
        if self.work_duration_s == 0 || self.secondary_duration_s == 0 {
            return Err(Error::Config("activity durations must be positive".into()));
        }
        Ok(())
    }
}

/// Build one day plan per agent for `phase`.
///
/// `travel_estimate` gives a free-flow travel time between zones and sets
/// each commuter's desired arrival time.
pub fn build_agendas(
    pop: &Population,
    phase: Phase,
    seed: u64,
    cfg: &AgendaConfig,
    zones: &[Zone],
    travel_estimate: &(dyn Fn(ZoneId, ZoneId) -> Seconds + Sync),
) -> Result<Population> {
    cfg.validate()?;
    let all: Vec<ZoneId> = zones.iter().map(|z| z.id).collect();
    let secondary_rate = cfg.secondary_rate(phase);
    let mut out = pop.clone();
    let mut plans = Vec::with_capacity(out.agents.len());
    for agent in &mut out.agents {
        let mut rng = seed::rng_for(seed, stream::AGENDA, u64::from(agent.id.0));
        // Fixed draw order keeps agendas paired across phases.
        let dep = rng.random_range(cfg.departure_window.0..=cfg.departure_window.1);
        let u_secondary: f64 = rng.random();
        let sec_dep = rng.random_range(cfg.secondary_window.0..=cfg.secondary_window.1);
        let sec_pick: usize = rng.random_range(0..all.len().max(1));
        let wants_secondary = u_secondary < secondary_rate;
        let secondary_zone = |from: ZoneId| -> ZoneId {
            let z = all[sec_pick];
            if z != from {
                z
            } else {
                all[(sec_pick + 1) % all.len()]
            }
        };

        agent.desired_arrival = None;
        let plan = if agent.commutes() {
            let work = agent.work_zone.ok_or_else(|| {
                Error::Invariant(format!("agent {} commutes but has no work zone", agent.id))
            })?;
            let desired = dep + travel_estimate(agent.home_zone, work).max(1);
            agent.desired_arrival = Some(desired);
            let work_end = desired + cfg.work_duration_s;
            let mut stops = vec![
                (ActivityKind::Home, agent.home_zone, dep),
                (ActivityKind::Work, work, work_end),
            ];
            if wants_secondary && all.len() > 1 {
                let z = secondary_zone(work);
                let end = work_end + travel_estimate(work, z).max(1) + cfg.secondary_duration_s;
                stops.push((ActivityKind::Secondary, z, end));
            }
            DayPlan::from_stops(&stops, agent.home_zone)
        } else if wants_secondary && all.len() > 1 {
            let z = secondary_zone(agent.home_zone);
            let end = sec_dep + travel_estimate(agent.home_zone, z).max(1) + cfg.secondary_duration_s;
            DayPlan::from_stops(
                &[
                    (ActivityKind::Home, agent.home_zone, sec_dep),
                    (ActivityKind::Secondary, z, end),
                ],
                agent.home_zone,
            )
        } else {
            DayPlan::home_only(agent.home_zone)
        };
        plans.push(plan);
    }
    out.plans = plans;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Zone;
    use crate::types::NodeId;

    fn zones(n: u32) -> Vec<Zone> {
        (0..n)
            .map(|i| Zone {
                id: ZoneId(i),
                centroid: NodeId(i),
                segment: if i < n / 4 { Segment::Core } else { Segment::Periphery },
                transit_accessible: true,
            })
            .collect()
    }

    fn header() -> &'static str {
        "id,label,covid,phase1,phase2,phase3,phase4\n"
    }

    #[test]
    fn loads_information_row() {
        let src = format!("{}8,Information,0.28,0.28,0.28,0.28,1\n", header());
        let t = IndustryWfhTable::from_csv_reader(src.as_bytes(), "t").unwrap();
        assert_eq!(t.non_wfh(8, Phase::Covid), Some(0.28));
        assert_eq!(t.non_wfh(8, Phase::Phase4), Some(1.0));
    }

    #[test]
    fn loads_professional_row() {
        let src = format!(
            "{}11,\"Professional, Scientific, and Technical Services\",0.2,0.2,1,1,1\n",
            header()
        );
        let t = IndustryWfhTable::from_csv_reader(src.as_bytes(), "t").unwrap();
        assert_eq!(t.non_wfh(11, Phase::Phase2), Some(1.0));
        assert_eq!(t.row(11).unwrap().label, "Professional, Scientific, and Technical Services");
    }

    #[test]
    fn rejects_out_of_range_fraction() {
        let src = format!("{}3,Construction,1.2,1,1,1,1\n", header());
        let err = IndustryWfhTable::from_csv_reader(src.as_bytes(), "t").unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
    }

    #[test]
    fn rejects_industry_ten_and_unknown_ids() {
        for id in [10, 18, 0] {
            let src = format!("{}{id},Mystery,0.5,0.5,0.5,0.5,1\n", header());
            let err = IndustryWfhTable::from_csv_reader(src.as_bytes(), "t").unwrap_err();
            assert!(err.to_string().contains(&format!("industry id {id}")), "{err}");
        }
    }

    #[test]
    fn malformed_row_names_row() {
        let src = format!("{}3,Construction,0.81,1,1,1,1\n4,Manufacturing,abc,1,1,1,1\n", header());
        let err = IndustryWfhTable::from_csv_reader(src.as_bytes(), "t").unwrap_err();
        match err {
            Error::Parse { row, .. } => assert_eq!(row, 3),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn rejects_decreasing_rows() {
        let src = format!("{}6,Retail trade,0.86,0.5,1,1,1\n", header());
        assert!(IndustryWfhTable::from_csv_reader(src.as_bytes(), "t").is_err());
    }

    #[test]
    fn builtin_table_has_sixteen_rows() {
        let t = IndustryWfhTable::builtin();
        assert_eq!(t.len(), 16);
        assert!(t.row(10).is_none());
        // Not-working never commutes, Phase4 table value notwithstanding.
        assert_eq!(t.non_wfh(NOT_WORKING, Phase::Phase4), Some(0.0));
        assert_eq!(t.non_wfh(15, Phase::Phase3), Some(0.915));
        assert_eq!(t.non_wfh(12, Phase::PreCovid), Some(1.0));
    }

    #[test]
    fn degenerate_mix_gives_single_industry() {
        let spec = PopulationSpec {
            n_agents: 1,
            industry_mix: [(2, 1.0)].into_iter().collect(),
            ..PopulationSpec::default()
        };
        let pop = synthesize_population(&spec, &zones(16)).unwrap();
        assert_eq!(pop.agents.len(), 1);
        assert_eq!(pop.agents[0].industry, 2);
        assert!(pop.agents[0].work_zone.is_some());
        assert_ne!(pop.agents[0].work_zone, Some(pop.agents[0].home_zone));
    }

    #[test]
    fn mix_must_sum_to_one() {
        let spec = PopulationSpec {
            industry_mix: [(2, 0.5), (3, 0.4)].into_iter().collect(),
            ..PopulationSpec::default()
        };
        assert!(matches!(synthesize_population(&spec, &zones(16)), Err(Error::Config(_))));
        let spec = PopulationSpec {
            n_agents: 0,
            ..PopulationSpec::default()
        };
        assert!(synthesize_population(&spec, &zones(16)).is_err());
    }

    #[test]
    fn non_workers_have_no_work_zone() {
        let pop = synthesize_population(&PopulationSpec::default(), &zones(16)).unwrap();
        for a in &pop.agents {
            assert_eq!(a.work_zone.is_some(), a.industry != NOT_WORKING);
        }
    }

    #[test]
    fn missing_industry_is_named() {
        let spec = PopulationSpec {
            n_agents: 5,
            industry_mix: [(3, 1.0)].into_iter().collect(),
            ..PopulationSpec::default()
        };
        let pop = synthesize_population(&spec, &zones(16)).unwrap();
        let src = format!("{}4,Manufacturing,0.78,1,1,1,1\n", header());
        let t = IndustryWfhTable::from_csv_reader(src.as_bytes(), "t").unwrap();
        let err = assign_wfh(&pop, &t, Phase::Covid, 1).unwrap_err();
        assert!(err.to_string().contains("industry 3"), "{err}");
    }

    #[test]
    fn full_non_wfh_means_no_wfh_workers() {
        let pop = synthesize_population(&PopulationSpec::default(), &zones(16)).unwrap();
        let t = IndustryWfhTable::builtin();
        let pop = assign_wfh(&pop, &t, Phase::Phase4, 3).unwrap();
        assert_eq!(overall_wfh_rate(&pop), 0.0);
        assert!(pop.agents.iter().filter(|a| a.is_worker()).all(|a| a.commutes()));
    }

    fn flat_estimate(_: ZoneId, _: ZoneId) -> Seconds {
        600
    }

    #[test]
    fn covid_wfh_agents_stay_home() {
        let z = zones(16);
        let pop = synthesize_population(&PopulationSpec::default(), &z).unwrap();
        let pop = assign_wfh(&pop, &IndustryWfhTable::builtin(), Phase::Covid, 2).unwrap();
        let pop = build_agendas(&pop, Phase::Covid, 4, &AgendaConfig::default(), &z, &flat_estimate).unwrap();
        for (a, plan) in pop.agents.iter().zip(&pop.plans) {
            plan.validate().unwrap();
            if a.works_from_home {
                assert_eq!(plan, &DayPlan::home_only(a.home_zone));
            } else {
                assert_eq!(plan.legs.len(), 2);
                assert_eq!(plan.legs[0].destination, a.work_zone.unwrap());
                assert_eq!(a.desired_arrival, Some(plan.legs[0].departure + 600));
            }
        }
    }

    #[test]
    fn departures_reproducible_and_in_window() {
        let z = zones(16);
        let spec = PopulationSpec {
            n_agents: 1000,
            industry_mix: [(3, 1.0)].into_iter().collect(),
            ..PopulationSpec::default()
        };
        let cfg = AgendaConfig::default();
        let pop = synthesize_population(&spec, &z).unwrap();
        let pop = assign_wfh(&pop, &IndustryWfhTable::builtin(), Phase::PreCovid, 1).unwrap();
        let a = build_agendas(&pop, Phase::PreCovid, 9, &cfg, &z, &flat_estimate).unwrap();
        let b = build_agendas(&pop, Phase::PreCovid, 9, &cfg, &z, &flat_estimate).unwrap();
        assert_eq!(a, b);
        for plan in &a.plans {
            let d = plan.legs[0].departure;
            assert!(d >= cfg.departure_window.0 && d <= cfg.departure_window.1);
        }
    }

    #[test]
    fn shift_times_keeps_order() {
        let mut plan = DayPlan::from_stops(
            &[(ActivityKind::Home, ZoneId(0), 100), (ActivityKind::Work, ZoneId(1), 200)],
            ZoneId(0),
        );
        plan.shift_times(-500);
        plan.validate().unwrap();
        assert_eq!(plan.legs[0].departure, 0);
        assert_eq!(plan.legs[1].departure, 1);
        plan.shift_times(300);
        plan.validate().unwrap();
        assert_eq!(plan.legs[0].departure, 300);
    }
}
