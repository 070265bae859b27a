//! Loader for a minimal GTFS subset: `stops.txt`, `routes.txt`, `trips.txt`
//! and `stop_times.txt`.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use super::{TransitLine, TransitSchedule, TransitStop, VehicleRun};
use crate::error::{Error, Result};
use crate::types::{parse_clock, LineId, Seconds, StopId};

struct Table {
    name: String,
    headers: Vec<String>,
    rows: Vec<(usize, csv::StringRecord)>,
}

impl Table {
    fn read(dir: &Path, file: &str) -> Result<Table> {
        let path = dir.join(file);
        let f = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(f);
        let headers = rdr.headers()?.iter().map(|h| h.trim_start_matches('\u{feff}').to_string()).collect();
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::parse(file, i + 2, e.to_string()))?;
            rows.push((i + 2, rec));
        }
        Ok(Table {
            name: file.to_string(),
            headers,
            rows,
        })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::parse(&self.name, 1, format!("missing column '{name}'")))
    }

    fn optional_column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    fn field<'a>(&self, row: &'a (usize, csv::StringRecord), col: usize) -> Result<&'a str> {
        row.1
            .get(col)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::parse(&self.name, row.0, format!("missing value for '{}'", self.headers[col])))
    }
}

/// Load a schedule from a GTFS-subset directory.
///
/// Trips sharing a route, stop sequence and ride times form one line; every
/// trip becomes a vehicle run with `seat_capacity` seats.
pub fn load_gtfs_lite(dir: &Path, seat_capacity: u32) -> Result<TransitSchedule> {
    let stops_t = Table::read(dir, "stops.txt")?;
    let routes_t = Table::read(dir, "routes.txt")?;
    let trips_t = Table::read(dir, "trips.txt")?;
    let times_t = Table::read(dir, "stop_times.txt")?;

    let mut stops = Vec::new();
    let mut stop_index: HashMap<String, StopId> = HashMap::new();
    let c = stops_t.column("stop_id")?;
    for row in &stops_t.rows {
        let name = stops_t.field(row, c)?.to_string();
        if stop_index.contains_key(&name) {
            return Err(Error::Validation(format!("duplicate stop '{name}'")));
        }
        let id = StopId(stops.len() as u32);
        stop_index.insert(name.clone(), id);
        stops.push(TransitStop { id, name, node: None });
    }

    let c = routes_t.column("route_id")?;
    let mut routes = std::collections::HashSet::new();
    for row in &routes_t.rows {
        routes.insert(routes_t.field(row, c)?.to_string());
    }

    let (c_route, c_trip) = (trips_t.column("route_id")?, trips_t.column("trip_id")?);
    let mut trips: Vec<(String, String)> = Vec::new();
    for row in &trips_t.rows {
        let route = trips_t.field(row, c_route)?.to_string();
        let trip = trips_t.field(row, c_trip)?.to_string();
        if !routes.contains(&route) {
            return Err(Error::Validation(format!("trip '{trip}' references unknown route '{route}'")));
        }
        trips.push((trip, route));
    }

    let c_trip = times_t.column("trip_id")?;
    let c_arr = times_t.column("arrival_time")?;
    let c_stop = times_t.column("stop_id")?;
    let c_seq = times_t.optional_column("stop_sequence");
    let mut times: HashMap<String, Vec<(u32, usize, Seconds, StopId)>> = HashMap::new();
    for (order, row) in times_t.rows.iter().enumerate() {
        let trip = times_t.field(row, c_trip)?.to_string();
        let raw = times_t.field(row, c_arr)?;
        let t = parse_clock(raw).ok_or_else(|| Error::parse(&times_t.name, row.0, format!("bad time '{raw}'")))?;
        let stop_name = times_t.field(row, c_stop)?;
        let stop = *stop_index
            .get(stop_name)
            .ok_or_else(|| Error::Validation(format!("trip '{trip}' uses unknown stop '{stop_name}'")))?;
        let seq = match c_seq {
            Some(c) => {
                let raw = times_t.field(row, c)?;
                raw.parse()
                    .map_err(|_| Error::parse(&times_t.name, row.0, format!("bad stop_sequence '{raw}'")))?
            }
            None => order as u32,
        };
        times.entry(trip).or_default().push((seq, order, t, stop));
    }

    type Pattern = (String, Vec<StopId>, Vec<Seconds>);
    let mut patterns: BTreeMap<Pattern, Vec<VehicleRun>> = BTreeMap::new();
    for (trip, route) in &trips {
        let mut st = times
            .remove(trip)
            .ok_or_else(|| Error::Validation(format!("trip '{trip}' has no stop times")))?;
        st.sort_by_key(|(seq, order, ..)| (*seq, *order));
        if st.len() < 2 {
            return Err(Error::Validation(format!("trip '{trip}' has fewer than two stop times")));
        }
        if st.windows(2).any(|w| w[1].2 < w[0].2) {
            return Err(Error::Validation(format!("trip '{trip}' has stop_times out of order")));
        }
        let stop_ids = st.iter().map(|s| s.3).collect();
        let ride_times = st.windows(2).map(|w| w[1].2 - w[0].2).collect();
        patterns.entry((route.clone(), stop_ids, ride_times)).or_default().push(VehicleRun {
            name: trip.clone(),
            departure: st[0].2,
            seat_capacity,
        });
    }
    if let Some(orphan) = times.keys().min() {
        return Err(Error::Validation(format!("stop_times reference unknown trip '{orphan}'")));
    }

    let mut per_route: HashMap<&str, usize> = HashMap::new();
    for ((route, ..), _) in &patterns {
        *per_route.entry(route.as_str()).or_default() += 1;
    }
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut lines = Vec::new();
    for ((route, stop_ids, ride_times), runs) in patterns.iter() {
        let k = seen.entry(route.clone()).or_default();
        let name = if per_route[route.as_str()] > 1 {
            format!("{route}#{k}")
        } else {
            route.clone()
        };
        *k += 1;
        let id = LineId(lines.len() as u32);
        lines.push(TransitLine::new(id, name, stop_ids.clone(), ride_times.clone(), runs.clone())?);
    }
    Ok(TransitSchedule { stops, lines })
}
