use std::sync::OnceLock;

use reopen_core::calibration::{trip_reduction, ModeGroup, ReductionHarness};
use reopen_core::mode_choice::AscDelta;
use reopen_core::scenario::*;
use reopen_core::types::{Mode, Phase};

fn universe() -> &'static Universe {
    static U: OnceLock<Universe> = OnceLock::new();
    U.get_or_init(|| {
        let mut cfg = UniverseConfig::default();
        cfg.population.n_agents = 1500;
        Universe::with_defaults(cfg).unwrap()
    })
}

fn run(phase: Phase, factor: f64) -> ScenarioReport {
    run_scenario(universe(), &ScenarioSpec::for_phase(phase, factor, 3, 8), false)
        .unwrap()
        .report
}

fn pre() -> &'static ScenarioReport {
    static R: OnceLock<ScenarioReport> = OnceLock::new();
    R.get_or_init(|| run(Phase::PreCovid, 1.0))
}

#[test]
fn matrix_has_ten_distinct_scenarios() {
    let m = default_matrix(1, 10);
    assert_eq!(m.len(), 10);
    let mut names: Vec<_> = m.iter().map(|s| s.name.clone()).collect();
    names.sort();
    names.dedup();
    assert_eq!(names.len(), 10);
    for s in &m {
        s.validate().unwrap();
    }
    assert!(names.contains(&"P4_cap50".to_string()));
}

#[test]
fn invalid_specs_are_rejected() {
    let mut s = ScenarioSpec::for_phase(Phase::Phase2, 0.5, 1, 10);
    s.capacity_factor = 0.0;
    assert!(s.validate().is_err());
    let mut s = ScenarioSpec::for_phase(Phase::PreCovid, 1.0, 1, 10);
    s.capacity_factor = 0.5;
    assert!(s.validate().is_err());
    let mut s = ScenarioSpec::for_phase(Phase::Phase4, 1.0, 1, 10);
    s.schedule = ScheduleVariant::Covid;
    assert!(s.validate().is_err());
}

#[test]
fn shares_sum_to_one_and_agents_are_conserved() {
    let r = pre();
    let total: f64 = r.shares.values().sum();
    assert!((total - 1.0).abs() < 1e-12);
    assert_eq!(r.arrivals + r.stuck, r.departures);
    assert_eq!(r.agents.len(), universe().base.agents.len());
    let by_industry: u64 = r.industry_trips.values().flat_map(|t| t.values()).sum::<u64>()
        + r.non_working_trips.values().sum::<u64>();
    assert_eq!(by_industry, r.total_trips());
}

#[test]
fn comparing_a_report_with_itself_is_neutral() {
    let r = pre();
    assert!(trip_ratio(r, r).values().flatten().all(|&x| x == 1.0));
    assert!(share_change_pp(r, r).values().all(|&x| x == 0.0));
    let d = consumer_surplus_delta(r, r, &SurplusConfig::default()).unwrap();
    assert_eq!(d.citywide.all_modes, 0.0);
    assert_eq!(d.core_destination.car_users, 0.0);
    let red = trip_reduction(r, r).unwrap();
    assert!(red.values().flatten().all(|&x| x == 0.0));
}

#[test]
fn car_stats_add_up() {
    let r = pre();
    for region in Region::ALL {
        let s = car_trip_stats(r, region);
        if s.count > 0 {
            assert!((s.mean_distance_m * s.count as f64 - s.total_distance_m).abs() < 1e-6);
            assert!((s.mean_time_s * s.count as f64 - s.total_time_s).abs() < 1e-6);
        }
    }
    let city = car_trip_stats(r, Region::Citywide);
    let core = car_trip_stats(r, Region::CoreDestination);
    assert!(core.count <= city.count && city.count > 0);
}

#[test]
fn stay_at_home_cuts_transit_and_trips() {
    let covid = run(Phase::Covid, 1.0);
    let base = pre();
    assert!(covid.trips_of(Mode::Transit) < base.trips_of(Mode::Transit));
    assert!(covid.total_trips() < base.total_trips());
    assert!(covid.wfh_rate > base.wfh_rate);
    let ratio = trip_ratio(&covid, base);
    assert!(ratio[&Mode::Transit].unwrap() < 1.0);
}

#[test]
fn runs_are_reproducible() {
    let a = run(Phase::Phase2, 0.5);
    let b = run(Phase::Phase2, 0.5);
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    assert_eq!(ScenarioReport::from_json(&a.to_json().unwrap()).unwrap(), a);
}

#[test]
fn other_universes_are_refused() {
    let mut cfg = UniverseConfig::default();
    cfg.population.n_agents = 300;
    let u2 = Universe::with_defaults(cfg).unwrap();
    let other = run_scenario(&u2, &ScenarioSpec::for_phase(Phase::PreCovid, 1.0, 3, 2), false)
        .unwrap()
        .report;
    assert!(consumer_surplus_delta(&other, pre(), &SurplusConfig::default()).is_err());
    assert!(trip_reduction(&other, pre()).is_err());
    let dir = tempfile::tempdir().unwrap();
    assert!(write_comparison(dir.path(), pre(), &other, &SurplusConfig::default()).is_err());
}

#[test]
fn report_directory_has_every_table() {
    let dir = tempfile::tempdir().unwrap();
    let r = pre();
    write_report(dir.path(), r, r, &SurplusConfig::default()).unwrap();
    for f in [
        "report.json",
        "trace.csv",
        "mode_shares.csv",
        "link_profile.csv",
        "trip_ratios.csv",
        "industry_deltas.csv",
        "car_stats.csv",
        "surplus.csv",
    ] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 8);
    let ratios = std::fs::read_to_string(dir.path().join("trip_ratios.csv")).unwrap();
    assert!(ratios.starts_with("mode,base_trips,trips,ratio,base_share,share,share_change_pp\n"));
}

#[test]
fn harness_reports_reductions_against_the_baseline() {
    let u = universe();
    let mut spec = ScenarioSpec::for_phase(Phase::Covid, 1.0, 3, 8);
    spec.params = ParamSet::Precovid;
    let h = ReductionHarness::new(u, &u.precovid, spec, pre().clone());
    let zero = h.reductions(&AscDelta::zero()).unwrap();
    let shifted = h.reductions(&AscDelta::builtin_covid()).unwrap();
    // Fewer people travel under the stay-at-home order whatever the constants.
    assert!(zero[&ModeGroup::Transit].unwrap() > 0.0);
    // The published shifts move travellers away from transit.
    assert!(shifted[&ModeGroup::Transit].unwrap() > zero[&ModeGroup::Transit].unwrap());
    assert_eq!(h.reductions(&AscDelta::zero()).unwrap(), zero);
}
