use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use reopen_core::calibration::{calibrate, ReductionHarness, ReductionTargets, SpsaConfig};
use reopen_core::mode_choice::{apply_asc_delta, AscDelta};
use reopen_core::population::{wfh_summary, ActivityKind};
use reopen_core::scenario::{
    config_hash, consumer_surplus_delta, run_scenario, trip_ratio, write_comparison, write_report, ParamSet,
    Region, ScenarioReport, ScenarioSpec, Universe,
};
use reopen_core::types::{Mode, Phase};

use crate::config::RunConfig;

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn find_spec(cfg: &RunConfig, name: &str) -> Result<ScenarioSpec> {
    let specs = cfg.specs();
    if let Some(s) = specs.iter().find(|s| s.name.eq_ignore_ascii_case(name)) {
        return Ok(s.clone());
    }
    let known: Vec<_> = specs.iter().map(|s| s.name.as_str()).collect();
    bail!("unknown scenario '{name}'; known scenarios: {}", known.join(", "))
}

pub fn synth(cfg: &RunConfig, scenario: Option<&str>) -> Result<()> {
    let spec = find_spec(cfg, scenario.unwrap_or("preCOVID"))?;
    let u = cfg.universe()?;
    let pop = u.phase_population(spec.phase, spec.schedule, cfg.seed)?;
    let dir = cfg.out.join("synth");

    let mut s = String::from("agent,industry,segment,home_zone,work_zone,has_car,works_from_home,desired_arrival_s\n");
    for a in &pop.agents {
        let opt = |v: Option<String>| v.unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            a.id,
            a.industry,
            a.segment,
            a.home_zone,
            opt(a.work_zone.map(|z| z.to_string())),
            a.has_car,
            a.works_from_home,
            opt(a.desired_arrival.map(|t| t.to_string()))
        );
    }
    write(&dir.join("population.csv"), &s)?;

    let mut s = String::from("agent,seq,kind,zone,end_time_s\n");
    for (a, plan) in pop.agents.iter().zip(&pop.plans) {
        for (i, act) in plan.activities.iter().enumerate() {
            let kind = match act.kind {
                ActivityKind::Home => "home",
                ActivityKind::Work => "work",
                ActivityKind::Secondary => "secondary",
            };
            let end = act.end_time.map(|t| t.to_string()).unwrap_or_default();
            let _ = writeln!(s, "{},{i},{kind},{},{end}", a.id, act.zone);
        }
    }
    write(&dir.join("agenda.csv"), &s)?;

    let mut s = String::from("industry,label,agents,commuting,wfh,table_non_wfh\n");
    println!("{}: WFH by industry (phase {})", spec.name, spec.phase);
    println!("{:>4}  {:<40} {:>7} {:>9} {:>6} {:>8}", "id", "industry", "agents", "commuting", "wfh", "table");
    for (id, c) in wfh_summary(&pop) {
        let label = u.table.row(id).map(|r| r.label.clone()).unwrap_or_else(|| "not working".into());
        let table = u.table.non_wfh(id, spec.phase);
        let _ = writeln!(
            s,
            "{id},{},{},{},{},{}",
            label.replace(',', ";"),
            c.agents,
            c.commuting,
            c.wfh,
            table.map(|t| t.to_string()).unwrap_or_default()
        );
        println!(
            "{id:>4}  {:<40} {:>7} {:>9} {:>6} {:>8}",
            label.chars().take(40).collect::<String>(),
            c.agents,
            c.commuting,
            c.wfh,
            table.map(|t| format!("{t:.3}")).unwrap_or_default()
        );
    }
    write(&dir.join("wfh_summary.csv"), &s)?;
    println!("overall WFH rate among workers: {:.4}", reopen_core::population::overall_wfh_rate(&pop));
    println!("wrote {}", dir.display());
    Ok(())
}

fn load_report(path: &Path) -> Result<ScenarioReport> {
    let file = if path.is_dir() { path.join("report.json") } else { path.to_path_buf() };
    let text = std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
    ScenarioReport::from_json(&text).with_context(|| format!("parsing {}", file.display()))
}

/// The pre-pandemic report, reused from the output directory when it matches.
fn baseline(cfg: &RunConfig, u: &Universe) -> Result<ScenarioReport> {
    let spec = ScenarioSpec::for_phase(Phase::PreCovid, 1.0, cfg.seed, cfg.iterations);
    let dir = cfg.out.join(&spec.name);
    let want = config_hash(u, &spec, u.params(ParamSet::Precovid))?;
    if let Ok(r) = load_report(&dir) {
        if r.universe_hash == u.hash && r.config_hash == want {
            log::info!("reusing baseline from {}", dir.display());
            return Ok(r);
        }
    }
    let r = run_scenario(u, &spec, false)?.report;
    write_report(&dir, &r, &r, &cfg.surplus)?;
    println!("{}", summary_line(&r));
    Ok(r)
}

fn summary_line(r: &ScenarioReport) -> String {
    let mut s = format!("{}: {} trips |", r.spec.name, r.total_trips());
    for m in Mode::ALL {
        let _ = write!(s, " {m} {:.1}%", 100.0 * r.shares.get(&m).copied().unwrap_or(0.0));
    }
    let _ = write!(s, " | denied {} stuck {}", r.denied_boardings, r.stuck);
    s
}

pub fn run(cfg: &RunConfig, scenario: &str, capacity_factor: Option<f64>) -> Result<()> {
    let mut specs = if scenario.eq_ignore_ascii_case("all") {
        cfg.specs()
    } else {
        vec![find_spec(cfg, scenario)?]
    };
    if let Some(f) = capacity_factor {
        for s in &mut specs {
            *s = ScenarioSpec::for_phase(s.phase, f, s.seed, s.n_iter);
            s.validate()?;
        }
    }
    let u = cfg.universe()?;
    let base = baseline(cfg, &u)?;
    for spec in specs {
        if spec.phase == Phase::PreCovid {
            continue;
        }
        let r = run_scenario(&u, &spec, false)?.report;
        write_report(&cfg.out.join(&spec.name), &r, &base, &cfg.surplus)?;
        println!("{}", summary_line(&r));
    }
    Ok(())
}

pub fn compare(cfg: &RunConfig, base: &Path, other: &Path, out: Option<&Path>) -> Result<()> {
    let b = load_report(base)?;
    let o = load_report(other)?;
    if b.universe_hash != o.universe_hash {
        bail!(
            "reports come from different universes ({} vs {}); refusing to compare",
            b.universe_hash,
            o.universe_hash
        );
    }
    let dir: PathBuf = match out {
        Some(d) => d.to_path_buf(),
        None => cfg.out.join("compare").join(format!("{}_vs_{}", o.spec.name, b.spec.name)),
    };
    write_comparison(&dir, &b, &o, &cfg.surplus)?;
    let ratios = trip_ratio(&o, &b);
    let mut line = format!("{} vs {}: trip ratio", o.spec.name, b.spec.name);
    for m in Mode::ALL {
        match ratios[&m] {
            Some(r) => {
                let _ = write!(line, " {m} {r:.3}");
            }
            None => {
                let _ = write!(line, " {m} -");
            }
        }
    }
    println!("{line}");
    let d = consumer_surplus_delta(&o, &b, &cfg.surplus)?;
    for r in Region::ALL {
        let x = d.region(r);
        println!(
            "  {}: all modes {:+.2} ({} agents), car users {:+.2} ({} agents)",
            r.as_str(),
            x.all_modes,
            x.n_agents,
            x.car_users,
            x.n_car_users
        );
    }
    println!("wrote {}", dir.display());
    Ok(())
}

pub fn report(cfg: &RunConfig) -> Result<()> {
    let mut reports = Vec::new();
    let entries = std::fs::read_dir(&cfg.out).with_context(|| format!("reading {}", cfg.out.display()))?;
    let mut dirs: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
    dirs.sort();
    for d in dirs {
        if d.join("report.json").is_file() {
            reports.push(load_report(&d)?);
        }
    }
    if reports.is_empty() {
        bail!("no scenario reports under {}", cfg.out.display());
    }
    let base = reports.iter().find(|r| r.spec.phase == Phase::PreCovid);

    let mut s = String::from("scenario,phase,capacity_factor,total_trips");
    for m in Mode::ALL {
        let _ = write!(s, ",{m}_trips,{m}_share,{m}_ratio");
    }
    s.push_str(",denied_boardings,stuck,wfh_rate\n");
    for r in &reports {
        let ratios = base.filter(|b| b.universe_hash == r.universe_hash).map(|b| trip_ratio(r, b));
        let _ = write!(s, "{},{},{},{}", r.spec.name, r.spec.phase, r.spec.capacity_factor, r.total_trips());
        for m in Mode::ALL {
            let ratio = ratios.as_ref().and_then(|x| x[&m]).map(|v| v.to_string()).unwrap_or_default();
            let _ = write!(s, ",{},{},{ratio}", r.trips_of(m), r.shares.get(&m).copied().unwrap_or(0.0));
        }
        let _ = writeln!(s, ",{},{},{}", r.denied_boardings, r.stuck, r.wfh_rate);
        println!("{}", summary_line(r));
    }
    write(&cfg.out.join("summary.csv"), &s)?;

    // Restricted runs against their unrestricted counterparts.
    let mut s = String::from("scenario,baseline,region,group,agents,mean_delta_usd\n");
    for r in reports.iter().filter(|r| r.spec.capacity_factor < 1.0) {
        let Some(full) = reports
            .iter()
            .find(|b| b.spec.phase == r.spec.phase && b.spec.capacity_factor == 1.0 && b.universe_hash == r.universe_hash)
        else {
            continue;
        };
        let d = consumer_surplus_delta(r, full, &cfg.surplus)?;
        for region in Region::ALL {
            let x = d.region(region);
            let name = region.as_str();
            let _ = writeln!(s, "{},{},{name},all_modes,{},{}", r.spec.name, full.spec.name, x.n_agents, x.all_modes);
            let _ = writeln!(s, "{},{},{name},car_users,{},{}", r.spec.name, full.spec.name, x.n_car_users, x.car_users);
        }
    }
    write(&cfg.out.join("capacity_surplus.csv"), &s)?;
    println!("wrote {} and {}", cfg.out.join("summary.csv").display(), cfg.out.join("capacity_surplus.csv").display());
    Ok(())
}

#[derive(Serialize)]
struct CalibrationSummary<'a> {
    converged: bool,
    start_loss: f64,
    best_loss: f64,
    steps: u32,
    evaluations: u32,
    a: Option<f64>,
    phase: Phase,
    engine_iterations: u32,
    seed: u64,
    spsa: &'a SpsaConfig,
    targets: &'a ReductionTargets,
    universe_hash: &'a str,
}

/// Returns whether the calibration converged.
pub fn calibrate_cmd(cfg: &RunConfig) -> Result<bool> {
    let u = cfg.universe()?;
    let targets = cfg.targets()?;
    let start = cfg.start_delta()?;
    let n = cfg.calibration.engine_iterations;
    let base = run_scenario(&u, &ScenarioSpec::for_phase(Phase::PreCovid, 1.0, cfg.seed, n), false)?.report;
    let mut spec = ScenarioSpec::for_phase(cfg.calibration.phase, 1.0, cfg.seed, n);
    spec.params = ParamSet::Precovid;
    spec.validate()?;
    let harness = ReductionHarness::new(&u, u.params(ParamSet::Precovid), spec, base);
    let spsa = cfg.calibration.spsa;
    let result = calibrate(&start, &targets, &|d: &AscDelta| harness.reductions(d), &spsa)?;

    let dir = cfg.out.join("calibration");
    write(&dir.join("asc_delta.csv"), &result.best.to_csv_string())?;
    write(
        &dir.join("utility_params.csv"),
        &apply_asc_delta(u.params(ParamSet::Precovid), &result.best).to_csv_string(),
    )?;
    write(&dir.join("trace.csv"), &result.trace_csv())?;
    let summary = CalibrationSummary {
        converged: result.converged,
        start_loss: result.start_loss,
        best_loss: result.best_loss,
        steps: result.steps,
        evaluations: result.evaluations,
        a: result.a,
        phase: cfg.calibration.phase,
        engine_iterations: n,
        seed: cfg.seed,
        spsa: &spsa,
        targets: &targets,
        universe_hash: &u.hash,
    };
    write(&dir.join("summary.json"), &serde_json::to_string_pretty(&summary)?)?;
    println!(
        "calibration: {} after {} steps, loss {:.4} -> {:.4} (tolerance {})",
        if result.converged { "converged" } else { "not converged" },
        result.steps,
        result.start_loss,
        result.best_loss,
        spsa.loss_tol
    );
    println!("wrote {}", dir.display());
    Ok(result.converged)
}
