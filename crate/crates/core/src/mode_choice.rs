//! Flat multinomial-logit mode choice over the eight-mode universe.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Mode, PerMode, Segment};

const BUILTIN_PARAMS: &str = include_str!("../data/params_precovid.csv");
const BUILTIN_DELTA: &str = include_str!("../data/asc_delta_covid.csv");

/// Modes whose constants move under calibration, in theta order.
pub const CALIBRATED_MODES: [Mode; 4] = [Mode::Transit, Mode::Car, Mode::Walk, Mode::Bike];

/// Length of the calibration vector: two segments times four modes.
pub const THETA_LEN: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentParams {
    pub asc: PerMode<f64>,
    /// Per hour of in-vehicle (or moving) time.
    pub beta_time: PerMode<f64>,
    pub beta_cost: f64,
    pub beta_access: f64,
    pub beta_egress: f64,
    pub beta_transfer: f64,
}

impl SegmentParams {
    fn zero() -> Self {
        SegmentParams {
            asc: PerMode::default(),
            beta_time: PerMode::default(),
            beta_cost: 0.0,
            beta_access: 0.0,
            beta_egress: 0.0,
            beta_transfer: 0.0,
        }
    }

    fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.asc.0.iter().chain(self.beta_time.0.iter()).copied().chain([
            self.beta_cost,
            self.beta_access,
            self.beta_egress,
            self.beta_transfer,
        ])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilityParams {
    pub core: SegmentParams,
    pub periphery: SegmentParams,
}

impl UtilityParams {
    pub fn segment(&self, s: Segment) -> &SegmentParams {
        match s {
            Segment::Core => &self.core,
            Segment::Periphery => &self.periphery,
        }
    }

    pub fn segment_mut(&mut self, s: Segment) -> &mut SegmentParams {
        match s {
            Segment::Core => &mut self.core,
            Segment::Periphery => &mut self.periphery,
        }
    }

    /// The shipped pre-pandemic parameter set.
    pub fn builtin_precovid() -> Self {
        Self::from_csv_str(BUILTIN_PARAMS, "params_precovid.csv").expect("builtin parameter file is valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text, &path.display().to_string())
    }

    /// Parse the two-section layout: `segment,mode,asc,beta_time` rows, a blank
    /// line, then `segment,coefficient,value` rows.
    pub fn from_csv_str(text: &str, source_name: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        let split = lines
            .iter()
            .position(|l| l.trim().is_empty())
            .ok_or_else(|| Error::parse(source_name, lines.len(), "missing blank line before scalar section"))?;
        let (modes_part, scalar_part) = (lines[..split].join("\n"), lines[split + 1..].join("\n"));

        let mut p = UtilityParams {
            core: SegmentParams::zero(),
            periphery: SegmentParams::zero(),
        };
        let mut seen = [[false; Mode::COUNT]; 2];
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(modes_part.as_bytes());
        expect_headers(&mut rdr, &["segment", "mode", "asc", "beta_time"], source_name, 1)?;
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 2;
            let rec = rec.map_err(|e| Error::parse(source_name, row, e.to_string()))?;
            let seg: Segment = field(&rec, 0).parse().map_err(|e: Error| Error::parse(source_name, row, e.to_string()))?;
            let mode: Mode = field(&rec, 1).parse().map_err(|e: Error| Error::parse(source_name, row, e.to_string()))?;
            if std::mem::replace(&mut seen[seg.index()][mode.index()], true) {
                return Err(Error::parse(source_name, row, format!("duplicate entry for {seg}/{mode}")));
            }
            let sp = p.segment_mut(seg);
            sp.asc[mode] = number(&rec, 2, source_name, row)?;
            sp.beta_time[mode] = number(&rec, 3, source_name, row)?;
        }
        for seg in Segment::ALL {
            for mode in Mode::ALL {
                if !seen[seg.index()][mode.index()] {
                    return Err(Error::Validation(format!("{source_name}: no row for {seg}/{mode}")));
                }
            }
        }

        let offset = split + 1;
        let mut seen_scalar = [[false; 4]; 2];
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(scalar_part.as_bytes());
        expect_headers(&mut rdr, &["segment", "coefficient", "value"], source_name, offset + 1)?;
        for (i, rec) in rdr.records().enumerate() {
            let row = offset + i + 2;
            let rec = rec.map_err(|e| Error::parse(source_name, row, e.to_string()))?;
            let seg: Segment = field(&rec, 0).parse().map_err(|e: Error| Error::parse(source_name, row, e.to_string()))?;
            let value = number(&rec, 2, source_name, row)?;
            let sp = p.segment_mut(seg);
            let (slot, k) = match field(&rec, 1).to_ascii_lowercase().as_str() {
                "cost" => (&mut sp.beta_cost, 0),
                "access" => (&mut sp.beta_access, 1),
                "egress" => (&mut sp.beta_egress, 2),
                "transfer" => (&mut sp.beta_transfer, 3),
                other => return Err(Error::parse(source_name, row, format!("unknown coefficient '{other}'"))),
            };
            *slot = value;
            seen_scalar[seg.index()][k] = true;
        }
        if seen_scalar.iter().flatten().any(|s| !s) {
            return Err(Error::Validation(format!(
                "{source_name}: scalar section must define cost, access, egress and transfer for both segments"
            )));
        }
        p.validate()?;
        Ok(p)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("segment,mode,asc,beta_time\n");
        for seg in Segment::ALL {
            let sp = self.segment(seg);
            for m in Mode::ALL {
                let _ = writeln!(out, "{seg},{m},{},{}", sp.asc[m], sp.beta_time[m]);
            }
        }
        out.push_str("\nsegment,coefficient,value\n");
        for seg in Segment::ALL {
            let sp = self.segment(seg);
            for (name, v) in [
                ("cost", sp.beta_cost),
                ("access", sp.beta_access),
                ("egress", sp.beta_egress),
                ("transfer", sp.beta_transfer),
            ] {
                let _ = writeln!(out, "{seg},{name},{v}");
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.core.values().chain(self.periphery.values()).all(f64::is_finite) {
            Ok(())
        } else {
            Err(Error::Validation("utility parameters must be finite".into()))
        }
    }
}

fn expect_headers<R: std::io::Read>(
    rdr: &mut csv::Reader<R>,
    want: &[&str],
    source_name: &str,
    row: usize,
) -> Result<()> {
    let got = rdr.headers().map_err(|e| Error::parse(source_name, row, e.to_string()))?;
    let ok = got.len() >= want.len() && want.iter().zip(got.iter()).all(|(w, g)| g.eq_ignore_ascii_case(w));
    if ok {
        Ok(())
    } else {
        Err(Error::parse(source_name, row, format!("expected header {}", want.join(","))))
    }
}

fn field(rec: &csv::StringRecord, i: usize) -> &str {
    rec.get(i).unwrap_or("")
}

fn number(rec: &csv::StringRecord, i: usize, source_name: &str, row: usize) -> Result<f64> {
    let raw = field(rec, i);
    raw.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::parse(source_name, row, format!("bad number '{raw}'")))
}

/// Additive shifts to the transit, car, walk and bike constants of each segment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AscDelta {
    pub core: [f64; 4],
    pub periphery: [f64; 4],
}

impl AscDelta {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn builtin_covid() -> Self {
        Self::from_csv_str(BUILTIN_DELTA, "asc_delta_covid.csv").expect("builtin delta file is valid")
    }

    pub fn segment(&self, s: Segment) -> &[f64; 4] {
        match s {
            Segment::Core => &self.core,
            Segment::Periphery => &self.periphery,
        }
    }

    /// Flatten as core (transit, car, walk, bike) then periphery.
    pub fn to_theta(&self) -> [f64; THETA_LEN] {
        let mut t = [0.0; THETA_LEN];
        t[..4].copy_from_slice(&self.core);
        t[4..].copy_from_slice(&self.periphery);
        t
    }

    pub fn from_theta(t: &[f64; THETA_LEN]) -> Self {
        let mut d = AscDelta::zero();
        d.core.copy_from_slice(&t[..4]);
        d.periphery.copy_from_slice(&t[4..]);
        d
    }

    pub fn negated(&self) -> Self {
        AscDelta {
            core: self.core.map(|v| -v),
            periphery: self.periphery.map(|v| -v),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text, &path.display().to_string())
    }

    /// Parse `segment,mode,delta` rows; modes outside the calibrated four are rejected.
    pub fn from_csv_str(text: &str, source_name: &str) -> Result<Self> {
        let mut d = AscDelta::zero();
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        expect_headers(&mut rdr, &["segment", "mode", "delta"], source_name, 1)?;
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 2;
            let rec = rec.map_err(|e| Error::parse(source_name, row, e.to_string()))?;
            let seg: Segment = field(&rec, 0).parse().map_err(|e: Error| Error::parse(source_name, row, e.to_string()))?;
            let mode: Mode = field(&rec, 1).parse().map_err(|e: Error| Error::parse(source_name, row, e.to_string()))?;
            let k = CALIBRATED_MODES
                .iter()
                .position(|&m| m == mode)
                .ok_or_else(|| Error::parse(source_name, row, format!("mode '{mode}' has no shift")))?;
            let v = number(&rec, 2, source_name, row)?;
            match seg {
                Segment::Core => d.core[k] = v,
                Segment::Periphery => d.periphery[k] = v,
            }
        }
        Ok(d)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("segment,mode,delta\n");
        for seg in Segment::ALL {
            for (k, m) in CALIBRATED_MODES.iter().enumerate() {
                let _ = writeln!(out, "{seg},{m},{}", self.segment(seg)[k]);
            }
        }
        out
    }
}

pub fn apply_asc_delta(p: &UtilityParams, d: &AscDelta) -> UtilityParams {
    let mut out = p.clone();
    for seg in Segment::ALL {
        let shift = *d.segment(seg);
        let sp = out.segment_mut(seg);
        for (k, &m) in CALIBRATED_MODES.iter().enumerate() {
            sp.asc[m] += shift[k];
        }
    }
    out
}

/// Level-of-service attributes of one mode for one trip. Times in hours.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModeAttributes {
    pub in_vehicle_h: f64,
    pub cost: f64,
    pub access_h: f64,
    pub egress_h: f64,
    pub transfer_h: f64,
}

impl ModeAttributes {
    pub fn moving(hours: f64, cost: f64) -> Self {
        ModeAttributes {
            in_vehicle_h: hours,
            cost,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChoiceContext {
    pub segment: Segment,
    /// `None` marks an unavailable mode.
    pub modes: PerMode<Option<ModeAttributes>>,
}

impl ChoiceContext {
    pub fn new(segment: Segment) -> Self {
        ChoiceContext {
            segment,
            modes: PerMode([None; Mode::COUNT]),
        }
    }

    pub fn with(mut self, mode: Mode, attrs: ModeAttributes) -> Self {
        self.modes[mode] = Some(attrs);
        self
    }

    pub fn available(&self) -> impl Iterator<Item = Mode> + '_ {
        Mode::ALL.into_iter().filter(|&m| self.modes[m].is_some())
    }

    pub fn validate(&self) -> Result<()> {
        if self.available().next().is_none() {
            return Err(Error::Domain("choice context has no available mode".into()));
        }
        for m in self.available() {
            let a = self.modes[m].unwrap();
            let fields = [a.in_vehicle_h, a.cost, a.access_h, a.egress_h, a.transfer_h];
            if fields.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::Domain(format!("negative or non-finite attribute for {m}")));
            }
        }
        Ok(())
    }
}

/// Utility of a mode given explicit attributes; transit terms apply to transit only.
pub fn utility_of(mode: Mode, segment: Segment, a: &ModeAttributes, p: &UtilityParams) -> f64 {
    let sp = p.segment(segment);
    let mut v = sp.asc[mode] + sp.beta_time[mode] * a.in_vehicle_h + sp.beta_cost * a.cost;
    if mode == Mode::Transit {
        v += sp.beta_access * a.access_h + sp.beta_egress * a.egress_h + sp.beta_transfer * a.transfer_h;
    }
    v
}

pub fn utility(mode: Mode, ctx: &ChoiceContext, p: &UtilityParams) -> Result<f64> {
    let a = ctx.modes[mode]
        .as_ref()
        .ok_or_else(|| Error::Domain(format!("mode {mode} is not available")))?;
    Ok(utility_of(mode, ctx.segment, a, p))
}

/// Softmax over available modes; unavailable modes get probability 0.
pub fn choice_probabilities(ctx: &ChoiceContext, p: &UtilityParams) -> Result<PerMode<f64>> {
    ctx.validate()?;
    let mut v = PerMode([f64::NEG_INFINITY; Mode::COUNT]);
    for m in ctx.available() {
        v[m] = utility(m, ctx, p)?;
    }
    Ok(softmax(&v))
}

fn softmax(v: &PerMode<f64>) -> PerMode<f64> {
    let max = v.0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = PerMode([0.0; Mode::COUNT]);
    let mut total = 0.0;
    for m in Mode::ALL {
        if v[m] > f64::NEG_INFINITY {
            out[m] = (v[m] - max).exp();
            total += out[m];
        }
    }
    for x in out.0.iter_mut() {
        *x /= total;
    }
    out
}

pub fn sample_mode<R: Rng + ?Sized>(ctx: &ChoiceContext, p: &UtilityParams, rng: &mut R) -> Result<Mode> {
    let probs = choice_probabilities(ctx, p)?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = None;
    for m in ctx.available() {
        acc += probs[m];
        last = Some(m);
        if u < acc {
            return Ok(m);
        }
    }
    Ok(last.expect("validated context has a mode"))
}

/// Money costs per trip and speeds of the fixed-speed modes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChoiceConfig {
    pub car_cost_per_km: f64,
    pub carpool_cost_per_km: f64,
    pub transit_fare: f64,
    pub taxi_base: f64,
    pub taxi_per_km: f64,
    pub fhv_base: f64,
    pub fhv_per_km: f64,
    pub citibike_fare: f64,
    pub walk_speed_mps: f64,
    pub bike_speed_mps: f64,
    pub citibike_speed_mps: f64,
    /// Ratio of travelled to straight-line distance for fixed-speed modes.
    pub beeline_factor: f64,
    pub fhv_available: bool,
    pub citibike_available: bool,
}

impl Default for ChoiceConfig {
    fn default() -> Self {
        ChoiceConfig {
            car_cost_per_km: 0.25,
            carpool_cost_per_km: 0.12,
            transit_fare: 2.75,
            taxi_base: 3.0,
            taxi_per_km: 1.55,
            fhv_base: 2.5,
            fhv_per_km: 1.35,
            citibike_fare: 3.5,
            walk_speed_mps: 1.34,
            bike_speed_mps: 4.0,
            citibike_speed_mps: 4.0,
            beeline_factor: 1.3,
            fhv_available: true,
            citibike_available: true,
        }
    }
}

impl ChoiceConfig {
    pub fn validate(&self) -> Result<()> {
        let costs = [
            self.car_cost_per_km,
            self.carpool_cost_per_km,
            self.transit_fare,
            self.taxi_base,
            self.taxi_per_km,
            self.fhv_base,
            self.fhv_per_km,
            self.citibike_fare,
        ];
        if costs.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::Config("mode costs must be finite and non-negative".into()));
        }
        let speeds = [self.walk_speed_mps, self.bike_speed_mps, self.citibike_speed_mps];
        if speeds.iter().any(|s| !s.is_finite() || *s <= 0.0) || !(self.beeline_factor >= 1.0) {
            return Err(Error::Config("speeds must be positive and beeline_factor ≥ 1".into()));
        }
        Ok(())
    }

    /// Money cost of a trip of `road_km` (network) or beeline-derived distance.
    pub fn cost(&self, mode: Mode, km: f64) -> f64 {
        match mode {
            Mode::Car => self.car_cost_per_km * km,
            Mode::Carpool => self.carpool_cost_per_km * km,
            Mode::Transit => self.transit_fare,
            Mode::Taxi => self.taxi_base + self.taxi_per_km * km,
            Mode::Fhv => self.fhv_base + self.fhv_per_km * km,
            Mode::Citibike => self.citibike_fare,
            Mode::Bike | Mode::Walk => 0.0,
        }
    }

    pub fn speed(&self, mode: Mode) -> Option<f64> {
        match mode {
            Mode::Walk => Some(self.walk_speed_mps),
            Mode::Bike => Some(self.bike_speed_mps),
            Mode::Citibike => Some(self.citibike_speed_mps),
            _ => None,
        }
    }

    /// Travel seconds of a fixed-speed mode over a straight-line distance.
    pub fn teleport_secs(&self, mode: Mode, beeline_m: f64) -> Option<f64> {
        self.speed(mode).map(|v| beeline_m * self.beeline_factor / v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_ctx(seg: Segment, modes: &[Mode]) -> ChoiceContext {
        modes
            .iter()
            .fold(ChoiceContext::new(seg), |c, &m| c.with(m, ModeAttributes::default()))
    }

    #[test]
    fn core_transit_constant() {
        let p = UtilityParams::builtin_precovid();
        let ctx = zero_ctx(Segment::Core, &[Mode::Transit]);
        assert!((utility(Mode::Transit, &ctx, &p).unwrap() - 2.95).abs() < 1e-12);
        let ctx = ChoiceContext::new(Segment::Core).with(
            Mode::Transit,
            ModeAttributes {
                access_h: 1.0,
                ..Default::default()
            },
        );
        assert!((utility(Mode::Transit, &ctx, &p).unwrap() - 1.99).abs() < 1e-12);
    }

    #[test]
    fn periphery_cost_is_inert() {
        let p = UtilityParams::builtin_precovid();
        for cost in [0.0, 5.0, 500.0] {
            let a = ModeAttributes::moving(0.0, cost);
            assert_eq!(utility_of(Mode::Car, Segment::Periphery, &a, &p), -0.05);
        }
    }

    #[test]
    fn unavailable_mode_is_domain_error() {
        let p = UtilityParams::builtin_precovid();
        let ctx = zero_ctx(Segment::Core, &[Mode::Walk]);
        assert!(matches!(utility(Mode::Car, &ctx, &p), Err(Error::Domain(_))));
        assert!(choice_probabilities(&ChoiceContext::new(Segment::Core), &p).is_err());
    }

    #[test]
    fn softmax_cases() {
        let p = UtilityParams::builtin_precovid();
        let ctx = zero_ctx(Segment::Core, &[Mode::Transit, Mode::Car]);
        let pr = choice_probabilities(&ctx, &p).unwrap();
        let want = 2.95f64.exp() / (2.95f64.exp() + (-0.06f64).exp());
        assert!((pr[Mode::Transit] - want).abs() < 1e-12);
        assert_eq!(pr[Mode::Walk], 0.0);

        let single = zero_ctx(Segment::Periphery, &[Mode::Bike]);
        assert_eq!(choice_probabilities(&single, &p).unwrap()[Mode::Bike], 1.0);

        let mut flat = p.clone();
        flat.core.asc[Mode::Car] = 0.0;
        flat.core.asc[Mode::Taxi] = 0.0;
        let even = zero_ctx(Segment::Core, &[Mode::Car, Mode::Taxi]);
        let pr = choice_probabilities(&even, &flat).unwrap();
        assert_eq!((pr[Mode::Car], pr[Mode::Taxi]), (0.5, 0.5));
    }

    #[test]
    fn sampler_matches_probabilities() {
        let mut p = UtilityParams::builtin_precovid();
        p.core.asc[Mode::Car] = 0.0;
        p.core.asc[Mode::Taxi] = 0.0;
        let ctx = zero_ctx(Segment::Core, &[Mode::Car, Mode::Taxi]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let cars = (0..n).filter(|_| sample_mode(&ctx, &p, &mut rng).unwrap() == Mode::Car).count();
        assert!((cars as f64 / n as f64 - 0.5).abs() < 0.005);

        let draw = |seed| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| sample_mode(&ctx, &p, &mut r).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
        let single = zero_ctx(Segment::Core, &[Mode::Fhv]);
        assert!((0..100).all(|_| sample_mode(&single, &p, &mut rng).unwrap() == Mode::Fhv));
    }

    #[test]
    fn covid_shift_matches_published_constants() {
        let p = apply_asc_delta(&UtilityParams::builtin_precovid(), &AscDelta::builtin_covid());
        let expect = [
            (Segment::Core, Mode::Transit, 1.95),
            (Segment::Core, Mode::Car, 3.07),
            (Segment::Core, Mode::Walk, 8.53),
            (Segment::Core, Mode::Bike, 1.94),
            (Segment::Periphery, Mode::Transit, 0.36),
            (Segment::Periphery, Mode::Car, 3.56),
            (Segment::Periphery, Mode::Walk, 6.00),
            (Segment::Periphery, Mode::Bike, 0.00),
        ];
        for (s, m, v) in expect {
            assert!((p.segment(s).asc[m] - v).abs() < 1e-9, "{s}/{m}");
        }
        assert_eq!(p.core.asc[Mode::Taxi], 1.06);
        let same = apply_asc_delta(&UtilityParams::builtin_precovid(), &AscDelta::zero());
        assert_eq!(same, UtilityParams::builtin_precovid());
    }

    #[test]
    fn params_round_trip_through_csv() {
        let p = apply_asc_delta(&UtilityParams::builtin_precovid(), &AscDelta::builtin_covid());
        let back = UtilityParams::from_csv_str(&p.to_csv_string(), "mem").unwrap();
        assert_eq!(back, p);
        let d = AscDelta::builtin_covid();
        assert_eq!(AscDelta::from_csv_str(&d.to_csv_string(), "mem").unwrap(), d);
        assert_eq!(AscDelta::from_theta(&d.to_theta()), d);
    }

    #[test]
    fn malformed_params_are_rejected() {
        let bad = BUILTIN_PARAMS.replacen("2.95", "abc", 1);
        match UtilityParams::from_csv_str(&bad, "p.csv") {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 4),
            other => panic!("{other:?}"),
        }
        let missing = BUILTIN_PARAMS.replacen("core,fhv,0.79,1.75\n", "", 1);
        assert!(UtilityParams::from_csv_str(&missing, "p.csv").is_err());
        assert!(AscDelta::from_csv_str("segment,mode,delta\ncore,taxi,1\n", "d").is_err());
    }

    fn arb_ctx() -> impl Strategy<Value = (ChoiceContext, u8)> {
        let attrs = (0.0..3.0f64, 0.0..30.0f64, 0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64).prop_map(|(t, c, a, e, x)| {
            ModeAttributes {
                in_vehicle_h: t,
                cost: c,
                access_h: a,
                egress_h: e,
                transfer_h: x,
            }
        });
        (
            prop::bool::ANY,
            prop::collection::vec(prop::option::of(attrs), Mode::COUNT),
            1u8..=255,
        )
            .prop_map(|(core, v, mask)| {
                let seg = if core { Segment::Core } else { Segment::Periphery };
                let mut ctx = ChoiceContext::new(seg);
                for (i, a) in v.into_iter().enumerate() {
                    if mask & (1 << i) != 0 {
                        ctx.modes.0[i] = Some(a.unwrap_or_default());
                    }
                }
                (ctx, mask)
            })
    }

    proptest! {
        #[test]
        fn probabilities_are_a_distribution((ctx, _) in arb_ctx()) {
            let p = UtilityParams::builtin_precovid();
            let pr = choice_probabilities(&ctx, &p).unwrap();
            let sum: f64 = pr.0.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            if ctx.available().count() >= 2 {
                for m in ctx.available() {
                    prop_assert!(pr[m] > 0.0 && pr[m] < 1.0);
                }
            }
        }

        #[test]
        fn shifting_every_constant_changes_nothing((ctx, _) in arb_ctx(), shift in -20.0..20.0f64) {
            let p = UtilityParams::builtin_precovid();
            let mut q = p.clone();
            for m in Mode::ALL {
                q.segment_mut(ctx.segment).asc[m] += shift;
            }
            let (a, b) = (choice_probabilities(&ctx, &p).unwrap(), choice_probabilities(&ctx, &q).unwrap());
            for m in Mode::ALL {
                prop_assert!((a[m] - b[m]).abs() < 1e-12);
            }
        }

        #[test]
        fn raising_a_constant_favours_that_mode((ctx, _) in arb_ctx(), pick in 0usize..8, bump in 0.01..5.0f64) {
            let modes: Vec<Mode> = ctx.available().collect();
            let target = modes[pick % modes.len()];
            let p = UtilityParams::builtin_precovid();
            let mut q = p.clone();
            q.segment_mut(ctx.segment).asc[target] += bump;
            let (a, b) = (choice_probabilities(&ctx, &p).unwrap(), choice_probabilities(&ctx, &q).unwrap());
            if modes.len() > 1 {
                prop_assert!(b[target] > a[target]);
            }
            for m in modes.into_iter().filter(|&m| m != target) {
                prop_assert!(b[m] <= a[m] + 1e-15);
            }
        }

        #[test]
        fn delta_then_negation_is_identity(t in prop::array::uniform8(-5.0..5.0f64)) {
            let p = UtilityParams::builtin_precovid();
            let d = AscDelta::from_theta(&t);
            let back = apply_asc_delta(&apply_asc_delta(&p, &d), &d.negated());
            for seg in Segment::ALL {
                for m in Mode::ALL {
                    prop_assert!((back.segment(seg).asc[m] - p.segment(seg).asc[m]).abs() < 1e-12);
                }
            }
        }
    }
}
