use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use reopen_core::calibration::{ModeGroup, ReductionHarness};
use reopen_core::mode_choice::AscDelta;
use reopen_core::scenario::{run_scenario, ParamSet, ScenarioSpec, Universe, UniverseConfig};
use reopen_core::types::Phase;

fn reopen(args: &[&str], threads: usize) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reopen"))
        .args(args)
        .env("RAYON_NUM_THREADS", threads.to_string())
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("config.json");
    let text = format!(
        r#"{{ "universe": {{ "population": {{ "n_agents": 600 }} }}, "iterations": 4, "out": "out"{extra} }}"#
    );
    std::fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn synth_writes_population_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let o = reopen(&["synth", "--config", s(&cfg), "--scenario", "COVID"], 2);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("overall WFH rate"));
    let synth = dir.path().join("out/synth");
    for f in ["population.csv", "agenda.csv", "wfh_summary.csv"] {
        assert!(synth.join(f).is_file(), "{f}");
    }
    let first = read_tree(&synth);
    let o = reopen(&["synth", "--config", s(&cfg), "--scenario", "COVID"], 1);
    assert!(o.status.success());
    assert_eq!(first, read_tree(&synth));
}

#[test]
fn missing_industry_table_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), r#", "industry_table": "nowhere/industries.csv""#);
    let o = reopen(&["synth", "--config", s(&cfg)], 2);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nowhere/industries.csv"), "{}", stderr(&o));
}

#[test]
fn run_writes_report_and_honours_iterations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let o = reopen(&["run", "--config", s(&cfg), "--scenario", "preCOVID", "--iterations", "1"], 2);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("preCOVID:"));
    let report = dir.path().join("out/preCOVID");
    for f in [
        "report.json",
        "mode_shares.csv",
        "trip_ratios.csv",
        "industry_deltas.csv",
        "car_stats.csv",
        "surplus.csv",
        "link_profile.csv",
        "trace.csv",
    ] {
        assert!(report.join(f).is_file(), "{f}");
    }
    let trace = std::fs::read_to_string(report.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 2);
}

#[test]
fn unknown_scenario_lists_the_known_ones() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let o = reopen(&["run", "--config", s(&cfg), "--scenario", "P9"], 2);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    for name in ["preCOVID", "COVID", "P1", "P2", "P3", "P4", "P1_cap50", "P2_cap50", "P3_cap50", "P4_cap50"] {
        assert!(err.contains(name), "{name} missing from: {err}");
    }
}

#[test]
fn bad_usage_exits_with_one() {
    assert_eq!(reopen(&["frobnicate"], 1).status.code(), Some(1));
    assert_eq!(reopen(&["run", "--iterations", "many"], 1).status.code(), Some(1));
    assert_eq!(reopen(&["--help"], 1).status.code(), Some(0));
}

#[test]
fn capacity_override_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let o = reopen(&["run", "--config", s(&cfg), "--scenario", "P3", "--capacity-factor", "0.5"], 2);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("out");
    assert!(out.join("P3_cap50/report.json").is_file());
    assert!(out.join("preCOVID/report.json").is_file());

    let cmp = dir.path().join("self");
    let o = reopen(
        &["compare", s(&out.join("P3_cap50")), s(&out.join("P3_cap50")), "--out", s(&cmp)],
        2,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let ratios = std::fs::read_to_string(cmp.join("trip_ratios.csv")).unwrap();
    assert!(ratios.starts_with("mode,base_trips,trips,ratio,base_share,share,share_change_pp\n"));
    for line in ratios.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        assert!(f[3].is_empty() || f[3] == "1", "{line}");
        assert_eq!(f[6], "0", "{line}");
    }
    let surplus = std::fs::read_to_string(cmp.join("surplus.csv")).unwrap();
    assert!(surplus.lines().skip(1).all(|l| l.ends_with(",0")), "{surplus}");

    let o = reopen(&["report", "--config", s(&cfg)], 2);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("summary.csv").is_file());
}

#[test]
fn compare_refuses_other_universes() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    std::fs::create_dir_all(&a).unwrap();
    std::fs::create_dir_all(&b).unwrap();
    let ca = small_config(&a, "");
    let cb = b.join("config.json");
    std::fs::write(&cb, r#"{ "universe": { "population": { "n_agents": 500 } }, "out": "out" }"#).unwrap();
    for c in [&ca, &cb] {
        let o = reopen(&["run", "--config", s(c), "--scenario", "preCOVID", "--iterations", "1"], 2);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let o = reopen(&["compare", s(&a.join("out/preCOVID")), s(&b.join("out/preCOVID"))], 2);
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("different universes"));
}

#[test]
fn calibrate_limits_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(
        dir.path(),
        r#", "calibration": { "engine_iterations": 2, "spsa": { "max_iter": 0 } }"#,
    );
    let o = reopen(&["calibrate", "--config", s(&cfg)], 2);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let cal = dir.path().join("out/calibration");
    assert_eq!(std::fs::read_to_string(cal.join("trace.csv")).unwrap().lines().count(), 1);

    let cfg = small_config(
        dir.path(),
        r#", "calibration": { "engine_iterations": 2, "spsa": { "max_iter": 2, "loss_tol": 0.0 } }"#,
    );
    let o = reopen(&["calibrate", "--config", s(&cfg)], 2);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(std::fs::read_to_string(cal.join("trace.csv")).unwrap().lines().count(), 3);
    for f in ["asc_delta.csv", "utility_params.csv", "summary.json"] {
        assert!(cal.join(f).is_file(), "{f}");
    }
}

#[test]
fn self_calibration_converges() {
    let n_agents = 3000;
    let n_iter = 10;
    let mut ucfg = UniverseConfig::default();
    ucfg.population.n_agents = n_agents;
    let u = Universe::with_defaults(ucfg).unwrap();
    let base = run_scenario(&u, &ScenarioSpec::for_phase(Phase::PreCovid, 1.0, 1, n_iter), false)
        .unwrap()
        .report;
    let mut spec = ScenarioSpec::for_phase(Phase::Covid, 1.0, 1, n_iter);
    spec.params = ParamSet::Precovid;
    let h = ReductionHarness::new(&u, &u.precovid, spec, base);
    let truth = AscDelta::from_theta(&AscDelta::builtin_covid().to_theta().map(|v| 0.5 * v));
    let r = h.reductions(&truth).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let mut targets = String::from("mode_group,target_reduction\n");
    for g in ModeGroup::ALL {
        targets.push_str(&format!("{g},{}\n", r[&g].unwrap()));
    }
    std::fs::write(dir.path().join("targets.csv"), targets).unwrap();
    let cfg = dir.path().join("config.json");
    std::fs::write(
        &cfg,
        format!(
            r#"{{ "universe": {{ "population": {{ "n_agents": {n_agents} }} }}, "targets": "targets.csv",
                 "calibration": {{ "engine_iterations": {n_iter} }}, "out": "out" }}"#
        ),
    )
    .unwrap();
    let o = reopen(&["calibrate", "--config", s(&cfg)], 4);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/calibration/summary.json")).unwrap()).unwrap();
    assert!(summary["best_loss"].as_f64().unwrap() < 0.1);
}

#[test]
fn artifacts_do_not_depend_on_thread_count() {
    let runs: Vec<_> = [1, 4]
        .into_iter()
        .map(|threads| {
            let dir = tempfile::tempdir().unwrap();
            let cfg = small_config(dir.path(), "");
            let o = reopen(&["run", "--config", s(&cfg), "--scenario", "P2_cap50"], threads);
            assert!(o.status.success(), "{}", stderr(&o));
            read_tree(&dir.path().join("out"))
        })
        .collect();
    assert!(!runs[0].is_empty());
    assert_eq!(runs[0], runs[1]);
}
