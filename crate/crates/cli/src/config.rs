use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use reopen_core::calibration::{ReductionTargets, SpsaConfig};
use reopen_core::mode_choice::{apply_asc_delta, AscDelta, UtilityParams};
use reopen_core::population::IndustryWfhTable;
use reopen_core::scenario::{ScenarioSpec, SurplusConfig, Universe, UniverseConfig};
use reopen_core::types::Phase;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEntry {
    pub phase: Phase,
    pub capacity_factor: f64,
}

fn default_matrix() -> Vec<ScenarioEntry> {
    reopen_core::scenario::default_matrix(0, 1)
        .into_iter()
        .map(|s| ScenarioEntry {
            phase: s.phase,
            capacity_factor: s.capacity_factor,
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationRun {
    pub spsa: SpsaConfig,
    /// Day-loop iterations per loss evaluation.
    pub engine_iterations: u32,
    /// Phase whose reductions against pre-pandemic travel are matched.
    pub phase: Phase,
    /// Shifts to start from; zero when absent.
    pub start_delta: Option<PathBuf>,
}

impl Default for CalibrationRun {
    fn default() -> Self {
        CalibrationRun {
            spsa: SpsaConfig::default(),
            engine_iterations: 20,
            phase: Phase::Covid,
            start_delta: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub universe: UniverseConfig,
    pub industry_table: Option<PathBuf>,
    /// Pre-pandemic utility table.
    pub params: Option<PathBuf>,
    /// Constant shifts giving the pandemic-era parameters.
    pub covid_delta: Option<PathBuf>,
    pub targets: Option<PathBuf>,
    pub scenarios: Vec<ScenarioEntry>,
    pub iterations: u32,
    pub calibration: CalibrationRun,
    pub surplus: SurplusConfig,
    pub out: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            universe: UniverseConfig::default(),
            industry_table: None,
            params: None,
            covid_delta: None,
            targets: None,
            scenarios: default_matrix(),
            iterations: 100,
            calibration: CalibrationRun::default(),
            surplus: SurplusConfig::default(),
            out: PathBuf::from("out"),
            seed: 1,
        }
    }
}

impl RunConfig {
    /// Read a config file; relative paths inside it are taken from its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.industry_table,
            &mut cfg.params,
            &mut cfg.covid_delta,
            &mut cfg.targets,
            &mut cfg.calibration.start_delta,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if cfg.out.is_relative() {
            cfg.out = base.join(&cfg.out);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for p in [
            &self.industry_table,
            &self.params,
            &self.covid_delta,
            &self.targets,
            &self.calibration.start_delta,
        ]
        .into_iter()
        .flatten()
        {
            if !p.is_file() {
                bail!("file not found: {}", p.display());
            }
        }
        if self.iterations == 0 || self.calibration.engine_iterations == 0 {
            bail!("iteration counts must be at least 1");
        }
        if self.scenarios.is_empty() {
            bail!("no scenarios configured");
        }
        for s in self.specs() {
            s.validate()?;
        }
        self.calibration.spsa.validate()?;
        if !(self.surplus.vot_per_h.is_finite() && self.surplus.mu_time > 0.0) {
            bail!("surplus conversion needs a finite value of time and a positive mu_time");
        }
        Ok(())
    }

    pub fn specs(&self) -> Vec<ScenarioSpec> {
        self.scenarios
            .iter()
            .map(|e| ScenarioSpec::for_phase(e.phase, e.capacity_factor, self.seed, self.iterations))
            .collect()
    }

    pub fn targets(&self) -> Result<ReductionTargets> {
        Ok(match &self.targets {
            Some(p) => ReductionTargets::load(p)?,
            None => ReductionTargets::builtin_observed(),
        })
    }

    pub fn start_delta(&self) -> Result<AscDelta> {
        Ok(match &self.calibration.start_delta {
            Some(p) => AscDelta::load(p)?,
            None => AscDelta::zero(),
        })
    }

    pub fn universe(&self) -> Result<Universe> {
        let table = match &self.industry_table {
            Some(p) => IndustryWfhTable::load(p)?,
            None => IndustryWfhTable::builtin(),
        };
        let pre = match &self.params {
            Some(p) => UtilityParams::load(p)?,
            None => UtilityParams::builtin_precovid(),
        };
        let delta = match &self.covid_delta {
            Some(p) => AscDelta::load(p)?,
            None => AscDelta::builtin_covid(),
        };
        let covid = apply_asc_delta(&pre, &delta);
        Ok(Universe::build(self.universe.clone(), table, pre, covid)?)
    }
}
