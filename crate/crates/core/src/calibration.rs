//! SPSA calibration of the per-segment ASC shifts against observed trip reductions.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mode_choice::{apply_asc_delta, AscDelta, UtilityParams, THETA_LEN};
use crate::scenario::{run_scenario_with_params, ScenarioReport, ScenarioSpec, Universe};
use crate::seed::{self, stream};
use crate::types::Mode;

pub type Theta = [f64; THETA_LEN];

const BUILTIN_OBSERVED: &str = include_str!("../data/targets_observed.csv");
const BUILTIN_WEEKLY: &str = include_str!("../data/targets_weekly_average.csv");

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeGroup {
    Transit,
    Car,
    Walk,
}

impl ModeGroup {
    pub const ALL: [ModeGroup; 3] = [ModeGroup::Transit, ModeGroup::Car, ModeGroup::Walk];

    pub fn mode(self) -> Mode {
        match self {
            ModeGroup::Transit => Mode::Transit,
            ModeGroup::Car => Mode::Car,
            ModeGroup::Walk => Mode::Walk,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModeGroup::Transit => "transit",
            ModeGroup::Car => "car",
            ModeGroup::Walk => "walk",
        }
    }
}

impl fmt::Display for ModeGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModeGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "transit" | "subway" => Ok(ModeGroup::Transit),
            "car" => Ok(ModeGroup::Car),
            "walk" => Ok(ModeGroup::Walk),
            other => Err(Error::Validation(format!("unknown mode group '{other}'"))),
        }
    }
}

/// Reduction per group; `None` where the baseline has no trips of that group.
pub type Reductions = BTreeMap<ModeGroup, Option<f64>>;

/// `1 - trips(scenario) / trips(baseline)` for each mode group.
pub fn trip_reduction(scenario: &ScenarioReport, baseline: &ScenarioReport) -> Result<Reductions> {
    if scenario.universe_hash != baseline.universe_hash {
        return Err(Error::Validation("scenario and baseline come from different universes".into()));
    }
    Ok(reduction_from_counts(
        |g| scenario.trips_of(g.mode()),
        |g| baseline.trips_of(g.mode()),
    ))
}

fn reduction_from_counts(now: impl Fn(ModeGroup) -> u64, base: impl Fn(ModeGroup) -> u64) -> Reductions {
    ModeGroup::ALL
        .into_iter()
        .map(|g| {
            let b = base(g);
            (g, (b > 0).then(|| 1.0 - now(g) as f64 / b as f64))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionTargets {
    pub values: BTreeMap<ModeGroup, f64>,
}

impl ReductionTargets {
    pub fn new(transit: f64, car: f64, walk: f64) -> Result<Self> {
        let t = ReductionTargets {
            values: BTreeMap::from([(ModeGroup::Transit, transit), (ModeGroup::Car, car), (ModeGroup::Walk, walk)]),
        };
        t.validate()?;
        Ok(t)
    }

    /// Observed reductions used by default.
    pub fn builtin_observed() -> Self {
        Self::from_csv_str(BUILTIN_OBSERVED, "targets_observed.csv").expect("builtin targets are valid")
    }

    /// Weekly averages of the same counts.
    pub fn builtin_weekly_average() -> Self {
        Self::from_csv_str(BUILTIN_WEEKLY, "targets_weekly_average.csv").expect("builtin targets are valid")
    }

    pub fn validate(&self) -> Result<()> {
        for g in ModeGroup::ALL {
            match self.values.get(&g) {
                None => return Err(Error::Validation(format!("target for '{g}' missing"))),
                Some(v) if !(0.0..=1.0).contains(v) => {
                    return Err(Error::Validation(format!("target for '{g}' is {v}, outside [0, 1]")))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text, &path.display().to_string())
    }

    pub fn from_csv_str(text: &str, source_name: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            mode_group: String,
            target_reduction: f64,
        }
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let mut values = BTreeMap::new();
        for (i, row) in rdr.deserialize::<Row>().enumerate() {
            let row_no = i + 2;
            let row = row.map_err(|e| Error::parse(source_name, row_no, e.to_string()))?;
            let g: ModeGroup = row.mode_group.parse().map_err(|e: Error| Error::parse(source_name, row_no, e.to_string()))?;
            if values.insert(g, row.target_reduction).is_some() {
                return Err(Error::parse(source_name, row_no, format!("duplicate group '{g}'")));
            }
        }
        let t = ReductionTargets { values };
        t.validate().map_err(|e| Error::parse(source_name, 0, e.to_string()))?;
        Ok(t)
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("mode_group,target_reduction\n");
        for (g, v) in &self.values {
            let _ = writeln!(s, "{g},{v}");
        }
        s
    }
}

/// Mean absolute difference over transit, car and walk.
pub fn loss(sim: &Reductions, targets: &ReductionTargets) -> Result<f64> {
    let mut total = 0.0;
    for g in ModeGroup::ALL {
        let s = sim
            .get(&g)
            .copied()
            .flatten()
            .ok_or_else(|| Error::Domain(format!("simulated reduction for '{g}' is missing")))?;
        let t = targets
            .values
            .get(&g)
            .ok_or_else(|| Error::Domain(format!("target for '{g}' is missing")))?;
        total += (s - t).abs();
    }
    Ok(total / ModeGroup::ALL.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpsaConfig {
    /// Step gain numerator. `None` picks it from the first gradient estimate so
    /// that the first step moves no ASC by more than `max_first_step`.
    pub a: Option<f64>,
    pub c: f64,
    /// Stability constant. `None` means a tenth of `max_iter`.
    pub big_a: Option<f64>,
    pub alpha: f64,
    pub gamma: f64,
    pub max_iter: u32,
    pub loss_tol: f64,
    pub max_first_step: f64,
    /// Largest change of any one shift in a single step of [`calibrate`].
    pub max_step: f64,
    pub seed: u64,
}

impl Default for SpsaConfig {
    fn default() -> Self {
        SpsaConfig {
            a: None,
            c: 0.1,
            big_a: None,
            alpha: 0.602,
            gamma: 0.101,
            max_iter: 50,
            loss_tol: 0.1,
            max_first_step: 0.5,
            max_step: 1.0,
            seed: 1,
        }
    }
}

impl SpsaConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v <= 1.0;
        if let Some(a) = self.a {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(Error::Config(format!("SPSA a must be non-negative, got {a}")));
            }
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Config(format!("SPSA c must be positive, got {}", self.c)));
        }
        if let Some(big_a) = self.big_a {
            if !(big_a >= 0.0 && big_a.is_finite()) {
                return Err(Error::Config(format!("SPSA A must be non-negative, got {big_a}")));
            }
        }
        if !unit(self.alpha) || !unit(self.gamma) {
            return Err(Error::Config("SPSA alpha and gamma must lie in (0, 1]".into()));
        }
        if !(self.loss_tol >= 0.0) {
            return Err(Error::Config(format!("loss tolerance must be non-negative, got {}", self.loss_tol)));
        }
        if !(self.max_first_step > 0.0) || !(self.max_step > 0.0) {
            return Err(Error::Config("max_first_step and max_step must be positive".into()));
        }
        Ok(())
    }

    pub fn stability(&self) -> f64 {
        self.big_a.unwrap_or(0.1 * f64::from(self.max_iter))
    }
}

/// Gain sequences with every constant resolved.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gains {
    pub a: f64,
    pub c: f64,
    pub big_a: f64,
    pub alpha: f64,
    pub gamma: f64,
}

impl Gains {
    pub fn a_k(&self, k: u32) -> f64 {
        self.a / (self.big_a + f64::from(k) + 1.0).powf(self.alpha)
    }

    pub fn c_k(&self, k: u32) -> f64 {
        self.c / (f64::from(k) + 1.0).powf(self.gamma)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientEstimate {
    pub delta: Theta,
    pub loss_plus: f64,
    pub loss_minus: f64,
    pub gradient: Theta,
}

impl GradientEstimate {
    pub fn is_finite(&self) -> bool {
        self.loss_plus.is_finite() && self.loss_minus.is_finite()
    }
}

fn shifted(theta: &Theta, delta: &Theta, by: f64) -> Theta {
    std::array::from_fn(|i| theta[i] + by * delta[i])
}

/// Two-sided simultaneous-perturbation gradient at `theta`. The two
/// evaluations run concurrently.
pub fn estimate_gradient<F, R>(theta: &Theta, c_k: f64, eval: &F, rng: &mut R) -> Result<GradientEstimate>
where
    F: Fn(&Theta) -> Result<f64> + Sync,
    R: Rng + ?Sized,
{
    let delta: Theta = std::array::from_fn(|_| if rng.random::<bool>() { 1.0 } else { -1.0 });
    let plus = shifted(theta, &delta, c_k);
    let minus = shifted(theta, &delta, -c_k);
    let (lp, lm) = rayon::join(|| eval(&plus), || eval(&minus));
    let (loss_plus, loss_minus) = (lp?, lm?);
    let gradient = std::array::from_fn(|i| (loss_plus - loss_minus) / (2.0 * c_k * delta[i]));
    Ok(GradientEstimate {
        delta,
        loss_plus,
        loss_minus,
        gradient,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub theta: Theta,
    pub estimate: GradientEstimate,
    pub aborted: bool,
}

fn apply_gradient(theta: &Theta, g: &Theta, a_k: f64) -> Theta {
    std::array::from_fn(|i| theta[i] - a_k * g[i])
}

/// One SPSA iteration. A non-finite loss leaves `theta` unchanged.
pub fn spsa_step<F, R>(theta: &Theta, k: u32, eval: &F, gains: &Gains, rng: &mut R) -> Result<StepOutcome>
where
    F: Fn(&Theta) -> Result<f64> + Sync,
    R: Rng + ?Sized,
{
    let estimate = estimate_gradient(theta, gains.c_k(k), eval, rng)?;
    if !estimate.is_finite() {
        log::warn!(
            "SPSA step {k}: non-finite loss ({}, {}); keeping theta",
            estimate.loss_plus,
            estimate.loss_minus
        );
        return Ok(StepOutcome {
            theta: *theta,
            estimate,
            aborted: true,
        });
    }
    Ok(StepOutcome {
        theta: apply_gradient(theta, &estimate.gradient, gains.a_k(k)),
        estimate,
        aborted: false,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: u32,
    pub loss: f64,
    pub theta: Theta,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Calibration {
    /// Lowest-loss point evaluated.
    pub best: AscDelta,
    pub best_loss: f64,
    pub start_loss: f64,
    pub converged: bool,
    pub steps: u32,
    pub evaluations: u32,
    /// Resolved step gain numerator, if any step needed it.
    pub a: Option<f64>,
    /// One row per SPSA step: the loss of the updated point.
    pub trace: Vec<TraceRow>,
}

impl Calibration {
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("iter,loss");
        for seg in ["core", "periphery"] {
            for m in crate::mode_choice::CALIBRATED_MODES {
                let _ = write!(s, ",{seg}_{m}");
            }
        }
        s.push('\n');
        for r in &self.trace {
            let _ = write!(s, "{},{}", r.iter, r.loss);
            for v in r.theta {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }
}

/// Run SPSA from `start` until some evaluated point has loss below
/// `cfg.loss_tol` or `cfg.max_iter` steps are spent.
pub fn calibrate<H>(start: &AscDelta, targets: &ReductionTargets, harness: &H, cfg: &SpsaConfig) -> Result<Calibration>
where
    H: Fn(&AscDelta) -> Result<Reductions> + Sync,
{
    cfg.validate()?;
    targets.validate()?;
    let evaluations = std::sync::atomic::AtomicU32::new(0);
    let eval = |t: &Theta| -> Result<f64> {
        evaluations.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        loss(&harness(&AscDelta::from_theta(t))?, targets)
    };
    let mut theta = start.to_theta();
    let start_loss = eval(&theta)?;
    let mut best = (theta, start_loss);
    let consider = |t: &Theta, l: f64, best: &mut (Theta, f64)| {
        if l.is_finite() && l < best.1 {
            *best = (*t, l);
        }
    };
    let mut gains = Gains {
        a: cfg.a.unwrap_or(0.0),
        c: cfg.c,
        big_a: cfg.stability(),
        alpha: cfg.alpha,
        gamma: cfg.gamma,
    };
    let mut a_resolved = cfg.a.is_some();
    let mut rng = seed::rng_for(cfg.seed, stream::SPSA, 0);
    let mut trace = Vec::new();
    let mut steps = 0;
    let done = |best: &(Theta, f64)| best.1 < cfg.loss_tol;

    while !done(&best) && steps < cfg.max_iter {
        let k = steps;
        let est = estimate_gradient(&theta, gains.c_k(k), &eval, &mut rng)?;
        if est.is_finite() {
            if !a_resolved {
                let g_max = est.gradient.iter().fold(0.0f64, |m, g| m.max(g.abs()));
                if g_max > 0.0 {
                    gains.a = cfg.max_first_step * (gains.big_a + f64::from(k) + 1.0).powf(gains.alpha) / g_max;
                    a_resolved = true;
                }
            }
            consider(&shifted(&theta, &est.delta, gains.c_k(k)), est.loss_plus, &mut best);
            consider(&shifted(&theta, &est.delta, -gains.c_k(k)), est.loss_minus, &mut best);
            if a_resolved {
                let a_k = gains.a_k(k);
                theta = std::array::from_fn(|i| theta[i] - (a_k * est.gradient[i]).clamp(-cfg.max_step, cfg.max_step));
            }
        } else {
            log::warn!("SPSA step {k}: non-finite loss; keeping theta");
        }
        let l = eval(&theta)?;
        consider(&theta, l, &mut best);
        steps += 1;
        log::info!("SPSA step {steps}: loss {l:.4}, best {:.4}", best.1);
        trace.push(TraceRow { iter: steps, loss: l, theta });
    }

    Ok(Calibration {
        best: AscDelta::from_theta(&best.0),
        best_loss: best.1,
        start_loss,
        converged: done(&best),
        steps,
        evaluations: evaluations.into_inner(),
        a: a_resolved.then_some(gains.a),
        trace,
    })
}

/// Maps ASC shifts to simulated reductions of one scenario against a fixed
/// baseline. Every evaluation reuses the scenario seed, so the two perturbed
/// runs of a step share their random numbers.
pub struct ReductionHarness<'a> {
    pub universe: &'a Universe,
    pub base_params: &'a UtilityParams,
    pub spec: ScenarioSpec,
    pub baseline: ScenarioReport,
}

impl<'a> ReductionHarness<'a> {
    pub fn new(universe: &'a Universe, base_params: &'a UtilityParams, spec: ScenarioSpec, baseline: ScenarioReport) -> Self {
        ReductionHarness {
            universe,
            base_params,
            spec,
            baseline,
        }
    }

    pub fn params(&self, delta: &AscDelta) -> UtilityParams {
        apply_asc_delta(self.base_params, delta)
    }

    pub fn report(&self, delta: &AscDelta) -> Result<ScenarioReport> {
        Ok(run_scenario_with_params(self.universe, &self.spec, &self.params(delta), false)?.report)
    }

    pub fn reductions(&self, delta: &AscDelta) -> Result<Reductions> {
        trip_reduction(&self.report(delta)?, &self.baseline)
    }
}
