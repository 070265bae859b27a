use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Link, Network, Node, TransitLine, TransitSchedule, TransitStop, VehicleRun, Zone, VEHICLE_SPACE_M};
use crate::error::{Error, Result};
use crate::seed::{self, stream};
use crate::types::{LineId, LinkId, NodeId, Seconds, Segment, StopId, ZoneId};

/// Inclusive node-index rectangle of the dense centre.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoreBlock {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl CoreBlock {
    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkDefaults {
    pub free_speed: f64,
    pub flow_capacity: f64,
    pub lanes: f64,
}

impl Default for LinkDefaults {
    fn default() -> Self {
        LinkDefaults {
            free_speed: 13.9,
            flow_capacity: 1800.0,
            lanes: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyCitySpec {
    /// Nodes along x and y.
    pub grid: (u32, u32),
    pub spacing_m: f64,
    pub core: CoreBlock,
    pub links: LinkDefaults,
    /// Links with both ends in the core.
    pub core_links: LinkDefaults,
    /// Transit corridors; each runs in both directions.
    pub n_lines: usize,
    pub transit_speed_mps: f64,
    pub dwell_s: Seconds,
    pub service_window: (Seconds, Seconds),
    pub headway_s: Seconds,
    /// Headway of the reduced service operated during the stay-at-home period.
    pub covid_headway_s: Seconds,
    /// Seats per run at full population scale.
    pub seats: u32,
    pub access_radius_m: f64,
    pub seed: u64,
}

impl Default for ToyCitySpec {
    fn default() -> Self {
        ToyCitySpec {
            grid: (8, 8),
            spacing_m: 2000.0,
            core: CoreBlock {
                x0: 3,
                y0: 3,
                x1: 4,
                y1: 4,
            },
            links: LinkDefaults::default(),
            core_links: LinkDefaults {
                free_speed: 8.3,
                flow_capacity: 1200.0,
                lanes: 1.0,
            },
            n_lines: 4,
            transit_speed_mps: 10.0,
            dwell_s: 30,
            service_window: (5 * 3600, 24 * 3600),
            headway_s: 300,
            covid_headway_s: 600,
            seats: 100,
            access_radius_m: 2200.0,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ToyCity {
    pub network: Network,
    /// Regular timetable.
    pub schedule: TransitSchedule,
    /// Reduced stay-at-home timetable.
    pub covid_schedule: TransitSchedule,
    pub zones: Vec<Zone>,
}

impl ToyCitySpec {
    pub fn validate(&self) -> Result<()> {
        let (nx, ny) = self.grid;
        if nx < 2 || ny < 2 {
            return Err(Error::Construction(format!("grid {nx}x{ny} is smaller than 2x2")));
        }
        let c = &self.core;
        if c.x0 > c.x1 || c.y0 > c.y1 || c.x0 < 1 || c.y0 < 1 || c.x1 + 2 > nx || c.y1 + 2 > ny {
            return Err(Error::Construction("core block must lie strictly inside the grid".into()));
        }
        let positive = [
            self.spacing_m,
            self.links.free_speed,
            self.links.flow_capacity,
            self.links.lanes,
            self.core_links.free_speed,
            self.core_links.flow_capacity,
            self.core_links.lanes,
            self.transit_speed_mps,
            self.access_radius_m,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Construction("link and transit attributes must be positive".into()));
        }
        if self.headway_s == 0 || self.covid_headway_s == 0 || self.seats == 0 {
            return Err(Error::Construction("headways and seats must be positive".into()));
        }
        if self.service_window.0 >= self.service_window.1 {
            return Err(Error::Construction("empty service window".into()));
        }
        if self.n_lines == 0 {
            return Err(Error::Construction("at least one transit line is required to serve the core".into()));
        }
        Ok(())
    }

    fn node_at(&self, x: u32, y: u32) -> NodeId {
        NodeId(y * self.grid.0 + x)
    }

    /// Node sequences of each corridor, alternating rows and columns through the core.
    fn corridors(&self) -> Vec<Vec<NodeId>> {
        let (nx, ny) = self.grid;
        let c = &self.core;
        let (core_w, core_h) = (c.x1 - c.x0 + 1, c.y1 - c.y0 + 1);
        (0..self.n_lines)
            .map(|i| {
                let k = (i / 2) as u32;
                if i % 2 == 0 {
                    let y = c.y0 + k % core_h;
                    (0..nx).map(|x| self.node_at(x, y)).collect()
                } else {
                    let x = c.x0 + k % core_w;
                    (0..ny).map(|y| self.node_at(x, y)).collect()
                }
            })
            .collect()
    }

    fn build_schedule(&self, network: &Network, headway: Seconds, variant: &str) -> Result<TransitSchedule> {
        let corridors = self.corridors();
        let mut stop_of_node: Vec<Option<StopId>> = vec![None; network.nodes.len()];
        let mut stops = Vec::new();
        for corridor in &corridors {
            for &n in corridor {
                if stop_of_node[n.index()].is_none() {
                    let id = StopId(stops.len() as u32);
                    stops.push(TransitStop {
                        id,
                        name: format!("stop{}", n.0),
                        node: Some(n),
                    });
                    stop_of_node[n.index()] = Some(id);
                }
            }
        }
        let hop = (self.spacing_m / self.transit_speed_mps).ceil() as Seconds + self.dwell_s;
        let (start, end) = self.service_window;
        let mut lines = Vec::new();
        for (ci, corridor) in corridors.iter().enumerate() {
            for (dir, nodes) in [("a", corridor.clone()), ("b", corridor.iter().rev().copied().collect())] {
                let id = LineId(lines.len() as u32);
                let mut rng = seed::rng_for(self.seed, stream::CITY, u64::from(id.0));
                let offset: Seconds = rng.random_range(0..headway);
                let runs = (0..)
                    .map(|k| start + offset + k * headway)
                    .take_while(|t| *t < end)
                    .enumerate()
                    .map(|(k, departure)| VehicleRun {
                        name: format!("{variant}-L{ci}{dir}-{k}"),
                        departure,
                        seat_capacity: self.seats,
                    })
                    .collect();
                let stop_ids = nodes.iter().map(|n| stop_of_node[n.index()].expect("stop")).collect::<Vec<_>>();
                let ride_times = vec![hop; stop_ids.len() - 1];
                lines.push(TransitLine::new(id, format!("L{ci}{dir}"), stop_ids, ride_times, runs)?);
            }
        }
        Ok(TransitSchedule { stops, lines })
    }
}

pub fn build_toy_city(spec: &ToyCitySpec) -> Result<ToyCity> {
    spec.validate()?;
    let (nx, ny) = spec.grid;
    let nodes: Vec<Node> = (0..ny)
        .flat_map(|y| (0..nx).map(move |x| (x, y)))
        .map(|(x, y)| Node {
            id: spec.node_at(x, y),
            x: f64::from(x) * spec.spacing_m,
            y: f64::from(y) * spec.spacing_m,
        })
        .collect();

    let mut links = Vec::new();
    let mut add = |a: (u32, u32), b: (u32, u32)| {
        let in_core = spec.core.contains(a.0, a.1) && spec.core.contains(b.0, b.1);
        let d = if in_core { &spec.core_links } else { &spec.links };
        links.push(Link {
            id: LinkId(links.len() as u32),
            from: spec.node_at(a.0, a.1),
            to: spec.node_at(b.0, b.1),
            length: spec.spacing_m,
            free_speed: d.free_speed,
            flow_capacity: d.flow_capacity * d.lanes,
            storage_capacity: spec.spacing_m * d.lanes / VEHICLE_SPACE_M,
        });
    };
    for y in 0..ny {
        for x in 0..nx {
            if x + 1 < nx {
                add((x, y), (x + 1, y));
                add((x + 1, y), (x, y));
            }
            if y + 1 < ny {
                add((x, y), (x, y + 1));
                add((x, y + 1), (x, y));
            }
        }
    }
    let network = Network::new(nodes, links)?;
    if !network.is_strongly_connected() {
        return Err(Error::Construction("road graph is not strongly connected".into()));
    }

    let schedule = spec.build_schedule(&network, spec.headway_s, "reg")?;
    let covid_schedule = spec.build_schedule(&network, spec.covid_headway_s, "cov")?;

    let zones: Vec<Zone> = network
        .nodes
        .iter()
        .map(|n| {
            let (x, y) = (n.id.0 % nx, n.id.0 / nx);
            let transit_accessible = schedule
                .stops
                .iter()
                .filter_map(|s| s.node)
                .any(|s| network.distance(n.id, s) <= spec.access_radius_m);
            Zone {
                id: ZoneId(n.id.0),
                centroid: n.id,
                segment: if spec.core.contains(x, y) {
                    Segment::Core
                } else {
                    Segment::Periphery
                },
                transit_accessible,
            }
        })
        .collect();
    if let Some(z) = zones.iter().find(|z| z.segment == Segment::Core && !z.transit_accessible) {
        return Err(Error::Construction(format!("core zone {} has no transit stop within reach", z.id)));
    }
    Ok(ToyCity {
        network,
        schedule,
        covid_schedule,
        zones,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{RouteTable, TransitRouter};
    use crate::network::routing::TransitRouterParams;

    fn small() -> ToyCitySpec {
        ToyCitySpec {
            grid: (4, 4),
            core: CoreBlock {
                x0: 1,
                y0: 1,
                x1: 2,
                y1: 2,
            },
            n_lines: 2,
            ..ToyCitySpec::default()
        }
    }

    #[test]
    fn four_by_four_city() {
        let city = build_toy_city(&small()).unwrap();
        assert_eq!(city.zones.len(), 16);
        assert!(city.network.is_strongly_connected());
        let routes = RouteTable::build(&city.network, &city.zones).unwrap();
        for o in &city.zones {
            for d in &city.zones {
                assert!(routes.get(o.id, d.id).is_some());
            }
        }
        let core: Vec<_> = city.zones.iter().filter(|z| z.segment == Segment::Core).collect();
        assert_eq!(core.len(), 4);
        assert!(core.iter().all(|z| z.transit_accessible));
        assert_eq!(city.schedule.lines.len(), 4);
    }

    #[test]
    fn runs_per_line_follow_headway() {
        let spec = ToyCitySpec {
            headway_s: 600,
            service_window: (6 * 3600, 10 * 3600),
            ..small()
        };
        let city = build_toy_city(&spec).unwrap();
        for line in &city.schedule.lines {
            assert_eq!(line.runs.len(), 24);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = build_toy_city(&small()).unwrap();
        let b = build_toy_city(&small()).unwrap();
        assert_eq!(a.network, b.network);
        assert_eq!(a.schedule, b.schedule);
        assert_eq!(a.zones, b.zones);
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = small();
        s.grid = (1, 4);
        assert!(matches!(build_toy_city(&s), Err(Error::Construction(_))));
        let mut s = small();
        s.core = CoreBlock { x0: 0, y0: 1, x1: 1, y1: 2 };
        assert!(build_toy_city(&s).is_err());
        let mut s = small();
        s.n_lines = 0;
        assert!(build_toy_city(&s).is_err());
    }

    #[test]
    fn free_flow_times_symmetric() {
        let city = build_toy_city(&ToyCitySpec::default()).unwrap();
        let routes = RouteTable::build(&city.network, &city.zones).unwrap();
        for o in &city.zones {
            for d in &city.zones {
                let ab = routes.get(o.id, d.id).unwrap().free_flow_s;
                let ba = routes.get(d.id, o.id).unwrap().free_flow_s;
                assert!((ab - ba).abs() < 1e-9, "{} -> {}", o.id, d.id);
            }
        }
    }

    #[test]
    fn core_pairs_have_transit_paths() {
        let city = build_toy_city(&ToyCitySpec::default()).unwrap();
        let p = TransitRouterParams {
            access_radius_m: 2200.0,
            walk_speed_mps: 1.34,
            beeline_factor: 1.3,
            transfer_penalty_s: 300.0,
        };
        let router = TransitRouter::build(&city.network, &city.zones, &city.schedule, &p).unwrap();
        let core: Vec<_> = city.zones.iter().filter(|z| z.segment == Segment::Core).collect();
        for o in &core {
            for d in &core {
                if o.id != d.id {
                    let path = router.get(o.id, d.id).expect("core pair path");
                    for seg in &path.segments {
                        assert!(seg.alight > seg.board);
                    }
                }
            }
        }
        // Opposite corners need a transfer.
        let corner = router.get(ZoneId(0), ZoneId(63));
        if let Some(path) = corner {
            assert!(path.segments.len() <= 2);
        }
    }
}
