use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ScenarioReport, SurplusConfig};
use crate::error::{Error, Result};
use crate::types::{IndustryId, Mode};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarLeg {
    pub core_destination: bool,
    pub distance_m: f64,
    pub time_s: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    CoreDestination,
    Citywide,
}

impl Region {
    pub const ALL: [Region; 2] = [Region::Citywide, Region::CoreDestination];

    pub fn as_str(self) -> &'static str {
        match self {
            Region::CoreDestination => "core_destination",
            Region::Citywide => "citywide",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CarStats {
    pub count: u64,
    pub total_distance_m: f64,
    pub mean_distance_m: f64,
    pub total_time_s: f64,
    pub mean_time_s: f64,
}

/// Aggregate completed car legs, optionally only those ending in the core.
pub fn car_trip_stats(report: &ScenarioReport, region: Region) -> CarStats {
    let mut s = CarStats::default();
    for leg in report
        .car_legs
        .iter()
        .filter(|l| region == Region::Citywide || l.core_destination)
    {
        s.count += 1;
        s.total_distance_m += leg.distance_m;
        s.total_time_s += f64::from(leg.time_s);
    }
    if s.count > 0 {
        s.mean_distance_m = s.total_distance_m / s.count as f64;
        s.mean_time_s = s.total_time_s / s.count as f64;
    }
    s
}

fn same_universe(a: &ScenarioReport, b: &ScenarioReport) -> Result<()> {
    if a.universe_hash != b.universe_hash {
        return Err(Error::Validation(format!(
            "reports come from different universes ({} vs {})",
            short(&a.universe_hash),
            short(&b.universe_hash)
        )));
    }
    Ok(())
}

fn short(h: &str) -> &str {
    &h[..h.len().min(12)]
}

/// Trips per mode relative to the baseline; `None` where the baseline has none.
pub fn trip_ratio(report: &ScenarioReport, baseline: &ScenarioReport) -> BTreeMap<Mode, Option<f64>> {
    Mode::ALL
        .into_iter()
        .map(|m| {
            let base = baseline.trips_of(m);
            (m, (base > 0).then(|| report.trips_of(m) as f64 / base as f64))
        })
        .collect()
}

/// Mode share change in percentage points.
pub fn share_change_pp(report: &ScenarioReport, baseline: &ScenarioReport) -> BTreeMap<Mode, f64> {
    let share = |r: &ScenarioReport, m| r.shares.get(&m).copied().unwrap_or(0.0);
    Mode::ALL
        .into_iter()
        .map(|m| (m, 100.0 * (share(report, m) - share(baseline, m))))
        .collect()
}

pub fn industry_trip_delta(
    report: &ScenarioReport,
    baseline: &ScenarioReport,
) -> BTreeMap<IndustryId, BTreeMap<Mode, i64>> {
    let ids: std::collections::BTreeSet<IndustryId> = report
        .industry_trips
        .keys()
        .chain(baseline.industry_trips.keys())
        .copied()
        .collect();
    let count = |r: &ScenarioReport, i: IndustryId, m: Mode| -> i64 {
        r.industry_trips.get(&i).and_then(|t| t.get(&m)).copied().unwrap_or(0) as i64
    };
    ids.into_iter()
        .map(|i| {
            let row = Mode::ALL
                .into_iter()
                .map(|m| (m, count(report, i, m) - count(baseline, i, m)))
                .collect();
            (i, row)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RegionSurplus {
    pub all_modes: f64,
    pub car_users: f64,
    pub n_agents: u64,
    pub n_car_users: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SurplusDelta {
    pub citywide: RegionSurplus,
    pub core_destination: RegionSurplus,
}

impl SurplusDelta {
    pub fn region(&self, r: Region) -> &RegionSurplus {
        match r {
            Region::Citywide => &self.citywide,
            Region::CoreDestination => &self.core_destination,
        }
    }
}

/// Mean money-equivalent score change of `a` relative to `b`. Car users and
/// regions are taken from `a`.
pub fn consumer_surplus_delta(a: &ScenarioReport, b: &ScenarioReport, cfg: &SurplusConfig) -> Result<SurplusDelta> {
    same_universe(a, b)?;
    if !(cfg.mu_time > 0.0) {
        return Err(Error::Config("mu_time must be positive".into()));
    }
    if a.agents.len() != b.agents.len() || a.agents.iter().zip(&b.agents).any(|(x, y)| x.agent != y.agent) {
        return Err(Error::Validation("reports cover different agents".into()));
    }
    let mut sums = [[0.0f64; 2]; 2];
    let mut counts = [[0u64; 2]; 2];
    for (x, y) in a.agents.iter().zip(&b.agents) {
        let d = (x.score - y.score) / cfg.mu_time * cfg.vot_per_h;
        for (r, in_region) in [(0, true), (1, x.core_destination)] {
            if !in_region {
                continue;
            }
            sums[r][0] += d;
            counts[r][0] += 1;
            if x.uses_car {
                sums[r][1] += d;
                counts[r][1] += 1;
            }
        }
    }
    let mean = |s: f64, n: u64| if n == 0 { 0.0 } else { s / n as f64 };
    let region = |r: usize| RegionSurplus {
        all_modes: mean(sums[r][0], counts[r][0]),
        car_users: mean(sums[r][1], counts[r][1]),
        n_agents: counts[r][0],
        n_car_users: counts[r][1],
    };
    Ok(SurplusDelta {
        citywide: region(0),
        core_destination: region(1),
    })
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Write a report as JSON plus its own flat tables, then compare it with `baseline`.
pub fn write_report(dir: &Path, report: &ScenarioReport, baseline: &ScenarioReport, surplus: &SurplusConfig) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(dir, "report.json", &report.to_json()?)?;
    write(dir, "trace.csv", &report.trace_csv())?;

    let mut s = String::from("mode,trips,share\n");
    for m in Mode::ALL {
        let _ = writeln!(s, "{m},{},{}", report.trips_of(m), report.shares.get(&m).copied().unwrap_or(0.0));
    }
    write(dir, "mode_shares.csv", &s)?;

    let mut s = String::from("link,hour,volume,mean_speed_mps\n");
    for r in &report.link_profile {
        let _ = writeln!(s, "{},{},{},{}", r.link, r.hour, r.volume, r.mean_speed_mps);
    }
    write(dir, "link_profile.csv", &s)?;
    write_comparison(dir, baseline, report, surplus)
}

/// Write trip ratios, share changes, industry deltas, car statistics and
/// surplus changes of `other` against `base`.
pub fn write_comparison(dir: &Path, base: &ScenarioReport, other: &ScenarioReport, surplus: &SurplusConfig) -> Result<()> {
    same_universe(base, other)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ratios = trip_ratio(other, base);
    let pp = share_change_pp(other, base);
    let mut s = String::from("mode,base_trips,trips,ratio,base_share,share,share_change_pp\n");
    for m in Mode::ALL {
        let _ = writeln!(
            s,
            "{m},{},{},{},{},{},{}",
            base.trips_of(m),
            other.trips_of(m),
            opt(ratios[&m]),
            base.shares.get(&m).copied().unwrap_or(0.0),
            other.shares.get(&m).copied().unwrap_or(0.0),
            pp[&m]
        );
    }
    write(dir, "trip_ratios.csv", &s)?;

    let mut s = String::from("industry,mode,base_trips,trips,delta\n");
    for (i, row) in industry_trip_delta(other, base) {
        for (m, d) in row {
            let get = |r: &ScenarioReport| r.industry_trips.get(&i).and_then(|t| t.get(&m)).copied().unwrap_or(0);
            let _ = writeln!(s, "{i},{m},{},{},{d}", get(base), get(other));
        }
    }
    write(dir, "industry_deltas.csv", &s)?;

    let mut s = String::from(
        "region,base_count,count,count_change_pct,base_mean_km,mean_km,base_mean_min,mean_min,mean_time_change_pct,base_total_km,total_km,base_total_h,total_h\n",
    );
    let pct = |a: f64, b: f64| if a > 0.0 { Some(100.0 * (b - a) / a) } else { None };
    for r in Region::ALL {
        let (a, b) = (car_trip_stats(base, r), car_trip_stats(other, r));
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.as_str(),
            a.count,
            b.count,
            opt(pct(a.count as f64, b.count as f64)),
            a.mean_distance_m / 1000.0,
            b.mean_distance_m / 1000.0,
            a.mean_time_s / 60.0,
            b.mean_time_s / 60.0,
            opt(pct(a.mean_time_s, b.mean_time_s)),
            a.total_distance_m / 1000.0,
            b.total_distance_m / 1000.0,
            a.total_time_s / 3600.0,
            b.total_time_s / 3600.0
        );
    }
    write(dir, "car_stats.csv", &s)?;

    let d = consumer_surplus_delta(other, base, surplus)?;
    let mut s = String::from("region,group,agents,mean_delta_usd\n");
    for r in Region::ALL {
        let x = d.region(r);
        let _ = writeln!(s, "{},all_modes,{},{}", r.as_str(), x.n_agents, x.all_modes);
        let _ = writeln!(s, "{},car_users,{},{}", r.as_str(), x.n_car_users, x.car_users);
    }
    write(dir, "surplus.csv", &s)
}
