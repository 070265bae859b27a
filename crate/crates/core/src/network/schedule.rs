use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{LineId, NodeId, Seconds, StopId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitStop {
    pub id: StopId,
    pub name: String,
    /// Road node the stop sits on; GTFS-loaded stops may have none.
    pub node: Option<NodeId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleRun {
    pub name: String,
    /// Departure from the first stop of the line.
    pub departure: Seconds,
    pub seat_capacity: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitLine {
    pub id: LineId,
    pub name: String,
    pub stops: Vec<StopId>,
    /// Scheduled time between consecutive stops; `stops.len() - 1` entries.
    pub ride_times: Vec<Seconds>,
    pub runs: Vec<VehicleRun>,
    #[serde(skip)]
    offsets: Vec<Seconds>,
}

/// A vehicle run, addressed by its line and its position in that line's timetable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RunId {
    pub line: LineId,
    pub run: u32,
}

impl TransitLine {
    pub fn new(
        id: LineId,
        name: impl Into<String>,
        stops: Vec<StopId>,
        ride_times: Vec<Seconds>,
        mut runs: Vec<VehicleRun>,
    ) -> Result<Self> {
        let name = name.into();
        if stops.len() < 2 {
            return Err(Error::Validation(format!("line {name} has fewer than two stops")));
        }
        if ride_times.len() + 1 != stops.len() {
            return Err(Error::Validation(format!(
                "line {name}: {} ride times for {} stops",
                ride_times.len(),
                stops.len()
            )));
        }
        if let Some(r) = runs.iter().find(|r| r.seat_capacity == 0) {
            return Err(Error::Validation(format!("line {name}: run {} has no seats", r.name)));
        }
        runs.sort_by(|a, b| a.departure.cmp(&b.departure).then_with(|| a.name.cmp(&b.name)));
        let mut line = TransitLine {
            id,
            name,
            stops,
            ride_times,
            runs,
            offsets: Vec::new(),
        };
        line.reindex();
        Ok(line)
    }

    pub(crate) fn reindex(&mut self) {
        let mut acc = 0;
        self.offsets = std::iter::once(0)
            .chain(self.ride_times.iter().map(|r| {
                acc += r;
                acc
            }))
            .collect();
    }

    /// Time from the first stop to stop `idx`.
    pub fn offset(&self, idx: usize) -> Seconds {
        self.offsets[idx]
    }

    pub fn stop_index(&self, stop: StopId) -> Option<usize> {
        self.stops.iter().position(|s| *s == stop)
    }

    pub fn departure_at(&self, run: usize, stop_idx: usize) -> Seconds {
        self.runs[run].departure + self.offsets[stop_idx]
    }

    /// Earliest run leaving stop `stop_idx` at or after `t`.
    pub fn next_run_at(&self, stop_idx: usize, t: Seconds) -> Option<usize> {
        let off = self.offsets[stop_idx];
        let i = self.runs.partition_point(|r| r.departure + off < t);
        (i < self.runs.len()).then_some(i)
    }

    /// Mean spacing between runs; the whole service span when only one run exists.
    pub fn mean_headway(&self) -> f64 {
        match self.runs.len() {
            0 => f64::INFINITY,
            1 => 3600.0,
            n => f64::from(self.runs[n - 1].departure - self.runs[0].departure) / (n - 1) as f64,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TransitSchedule {
    pub stops: Vec<TransitStop>,
    pub lines: Vec<TransitLine>,
}

impl TransitSchedule {
    pub fn line(&self, id: LineId) -> &TransitLine {
        &self.lines[id.index()]
    }

    pub fn stop(&self, id: StopId) -> &TransitStop {
        &self.stops[id.index()]
    }

    pub fn run_count(&self) -> usize {
        self.lines.iter().map(|l| l.runs.len()).sum()
    }

    /// Restore derived indexes after deserialization.
    pub fn reindex(&mut self) {
        for l in &mut self.lines {
            l.reindex();
        }
    }
}

/// Earliest run of `line` departing `stop` at or after `t` (inclusive).
pub fn next_departure(schedule: &TransitSchedule, line: LineId, stop: StopId, t: Seconds) -> Result<Option<RunId>> {
    let l = schedule
        .lines
        .get(line.index())
        .ok_or_else(|| Error::Domain(format!("unknown line {line}")))?;
    let idx = l
        .stop_index(stop)
        .ok_or_else(|| Error::Domain(format!("stop {stop} is not on line {}", l.name)))?;
    Ok(l.next_run_at(idx, t).map(|run| RunId {
        line,
        run: run as u32,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line(departures: &[Seconds]) -> TransitSchedule {
        let runs = departures
            .iter()
            .enumerate()
            .map(|(i, d)| VehicleRun {
                name: format!("r{i}"),
                departure: *d,
                seat_capacity: 10,
            })
            .collect();
        let stops = (0..3)
            .map(|i| TransitStop {
                id: StopId(i),
                name: format!("s{i}"),
                node: None,
            })
            .collect();
        TransitSchedule {
            stops,
            lines: vec![TransitLine::new(LineId(0), "L", vec![StopId(0), StopId(1), StopId(2)], vec![60, 120], runs).unwrap()],
        }
    }

    #[test]
    fn picks_next_run() {
        let s = line(&[8 * 3600, 8 * 3600 + 600]);
        let r = next_departure(&s, LineId(0), StopId(0), 8 * 3600 + 300).unwrap();
        assert_eq!(r.map(|r| r.run), Some(1));
    }

    #[test]
    fn none_after_last_run() {
        let s = line(&[8 * 3600, 8 * 3600 + 600]);
        assert_eq!(next_departure(&s, LineId(0), StopId(0), 9 * 3600).unwrap(), None);
    }

    #[test]
    fn exact_departure_is_inclusive() {
        let s = line(&[8 * 3600, 8 * 3600 + 600]);
        let r = next_departure(&s, LineId(0), StopId(0), 8 * 3600 + 600).unwrap();
        assert_eq!(r.map(|r| r.run), Some(1));
        // Downstream stops shift by the ride offset.
        let r = next_departure(&s, LineId(0), StopId(2), 8 * 3600 + 180).unwrap();
        assert_eq!(r.map(|r| r.run), Some(0));
    }

    #[test]
    fn stop_off_line_is_domain_error() {
        let mut s = line(&[0]);
        s.stops.push(TransitStop {
            id: StopId(3),
            name: "x".into(),
            node: None,
        });
        assert!(matches!(next_departure(&s, LineId(0), StopId(3), 0), Err(Error::Domain(_))));
    }

    #[test]
    fn line_invariants() {
        assert!(TransitLine::new(LineId(0), "L", vec![StopId(0)], vec![], vec![]).is_err());
        let zero_seats = VehicleRun {
            name: "r".into(),
            departure: 0,
            seat_capacity: 0,
        };
        assert!(TransitLine::new(LineId(0), "L", vec![StopId(0), StopId(1)], vec![60], vec![zero_seats]).is_err());
    }

    proptest! {
        #[test]
        fn matches_linear_scan(mut deps in proptest::collection::vec(0u32..20_000, 0..12), stop in 0usize..3, t in 0u32..21_000) {
            deps.sort_unstable();
            let s = line(&deps);
            let l = &s.lines[0];
            let expected = (0..l.runs.len()).find(|&r| l.departure_at(r, stop) >= t);
            let got = next_departure(&s, LineId(0), StopId(stop as u32), t).unwrap().map(|r| r.run as usize);
            prop_assert_eq!(got, expected);
            if let Some(r) = got {
                prop_assert!(l.departure_at(r, stop) >= t);
            }
        }
    }
}
