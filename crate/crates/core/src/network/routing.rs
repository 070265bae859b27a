use serde::{Deserialize, Serialize};

use super::{trace_route, Network, TransitSchedule, Zone};
use crate::error::{Error, Result};
use crate::types::{LineId, LinkId, StopId, ZoneId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarRoute {
    pub links: Vec<LinkId>,
    pub length_m: f64,
    pub free_flow_s: f64,
}

/// Free-flow shortest road routes between all zone centroids.
#[derive(Clone, Debug)]
pub struct RouteTable {
    n_zones: usize,
    routes: Vec<Option<CarRoute>>,
}

fn check_zone_indexing(zones: &[Zone]) -> Result<()> {
    match zones.iter().enumerate().find(|(i, z)| z.id.index() != *i) {
        Some((i, z)) => Err(Error::Construction(format!("zone {} stored at index {i}", z.id))),
        None => Ok(()),
    }
}

impl RouteTable {
    pub fn build(net: &Network, zones: &[Zone]) -> Result<Self> {
        check_zone_indexing(zones)?;
        let n = zones.len();
        let mut routes = Vec::with_capacity(n * n);
        for o in zones {
            let (dist, pred) = net.shortest_path_tree(o.centroid);
            for d in zones {
                let route = trace_route(net, &dist, &pred, o.centroid, d.centroid).map(|links| {
                    let length_m = links.iter().map(|l| net.link(*l).length).sum();
                    let free_flow_s = links.iter().map(|l| net.link(*l).free_flow_time()).sum();
                    CarRoute {
                        links,
                        length_m,
                        free_flow_s,
                    }
                });
                routes.push(route);
            }
        }
        Ok(RouteTable { n_zones: n, routes })
    }

    pub fn get(&self, o: ZoneId, d: ZoneId) -> Option<&CarRoute> {
        self.routes[o.index() * self.n_zones + d.index()].as_ref()
    }

    pub fn n_zones(&self) -> usize {
        self.n_zones
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathSegment {
    pub line: LineId,
    /// Stop positions within the line.
    pub board: usize,
    pub alight: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitPath {
    pub access_m: f64,
    pub egress_m: f64,
    pub segments: Vec<PathSegment>,
    /// Access and egress walks, half-headway waits and rides, in seconds.
    pub expected_s: f64,
}

/// Best transit path (at most one transfer) between every pair of zones.
#[derive(Clone, Debug)]
pub struct TransitRouter {
    n_zones: usize,
    paths: Vec<Option<TransitPath>>,
}

#[derive(Clone, Copy, Debug)]
struct Reach {
    cost: f64,
    line: usize,
    board: usize,
    alight: usize,
    /// Index into the first-round table for transfers.
    via: Option<(usize, usize)>,
    access_m: f64,
}

#[derive(Clone, Debug)]
pub struct TransitRouterParams {
    pub access_radius_m: f64,
    pub walk_speed_mps: f64,
    pub beeline_factor: f64,
    pub transfer_penalty_s: f64,
}

impl TransitRouter {
    pub fn build(net: &Network, zones: &[Zone], schedule: &TransitSchedule, p: &TransitRouterParams) -> Result<Self> {
        check_zone_indexing(zones)?;
        let n = zones.len();
        // Stops near each zone, with beeline walking distance.
        let near: Vec<Vec<(StopId, f64)>> = zones
            .iter()
            .map(|z| {
                schedule
                    .stops
                    .iter()
                    .filter_map(|s| {
                        let node = s.node?;
                        let d = net.distance(z.centroid, node);
                        (d <= p.access_radius_m).then_some((s.id, d * p.beeline_factor))
                    })
                    .collect()
            })
            .collect();
        let walk = |m: f64| m / p.walk_speed_mps;
        let half_headway: Vec<f64> = schedule.lines.iter().map(|l| l.mean_headway() / 2.0).collect();
        let n_stops = schedule.stops.len();

        let mut paths = Vec::with_capacity(n * n);
        for o in 0..n {
            let mut access = vec![None; n_stops];
            for &(s, d) in &near[o] {
                access[s.index()] = Some(d);
            }

            // Round one: direct rides from an access stop.
            let mut round1: Vec<Vec<Option<Reach>>> = Vec::with_capacity(schedule.lines.len());
            for (li, line) in schedule.lines.iter().enumerate() {
                let mut row = vec![None; line.stops.len()];
                let mut best_board: Option<(f64, usize, f64)> = None;
                for j in 0..line.stops.len() {
                    if let Some((c, i, acc)) = best_board {
                        let cost = c + f64::from(line.offset(j));
                        row[j] = Some(Reach {
                            cost,
                            line: li,
                            board: i,
                            alight: j,
                            via: None,
                            access_m: acc,
                        });
                    }
                    if let Some(acc) = access[line.stops[j].index()] {
                        let c = walk(acc) + half_headway[li] - f64::from(line.offset(j));
                        if best_board.is_none_or(|(b, _, _)| c < b) {
                            best_board = Some((c, j, acc));
                        }
                    }
                }
                round1.push(row);
            }
            let mut best1: Vec<Option<(usize, usize)>> = vec![None; n_stops];
            for (li, row) in round1.iter().enumerate() {
                for (j, r) in row.iter().enumerate() {
                    if let Some(r) = r {
                        let s = schedule.lines[li].stops[j].index();
                        if best1[s].is_none_or(|(bl, bj)| r.cost < round1[bl][bj].unwrap().cost) {
                            best1[s] = Some((li, j));
                        }
                    }
                }
            }

            // Round two: one transfer at a stop reached in round one.
            let mut best2: Vec<Option<Reach>> = vec![None; n_stops];
            for (li, line) in schedule.lines.iter().enumerate() {
                let mut best_board: Option<(f64, usize, (usize, usize), f64)> = None;
                for j in 0..line.stops.len() {
                    if let Some((c, m, via, acc)) = best_board {
                        let cost = c + f64::from(line.offset(j));
                        let s = line.stops[j].index();
                        if best2[s].is_none_or(|b| cost < b.cost) {
                            best2[s] = Some(Reach {
                                cost,
                                line: li,
                                board: m,
                                alight: j,
                                via: Some(via),
                                access_m: acc,
                            });
                        }
                    }
                    let s = line.stops[j].index();
                    if let Some((bl, bj)) = best1[s] {
                        if bl != li {
                            let r = round1[bl][bj].expect("recorded reach");
                            let c = r.cost + p.transfer_penalty_s + half_headway[li] - f64::from(line.offset(j));
                            if best_board.is_none_or(|(b, ..)| c < b) {
                                best_board = Some((c, j, (bl, bj), r.access_m));
                            }
                        }
                    }
                }
            }

            for d in 0..n {
                if d == o {
                    paths.push(None);
                    continue;
                }
                let mut best: Option<(f64, Reach, f64)> = None;
                for &(s, egress) in &near[d] {
                    let candidates = [best1[s.index()].map(|(l, j)| round1[l][j].unwrap()), best2[s.index()]];
                    for r in candidates.into_iter().flatten() {
                        let total = r.cost + walk(egress);
                        if best.as_ref().is_none_or(|(b, ..)| total < *b) {
                            best = Some((total, r, egress));
                        }
                    }
                }
                paths.push(best.map(|(total, r, egress)| {
                    let mut segments = Vec::with_capacity(2);
                    if let Some((l1, j1)) = r.via {
                        let first = round1[l1][j1].unwrap();
                        segments.push(PathSegment {
                            line: LineId(l1 as u32),
                            board: first.board,
                            alight: first.alight,
                        });
                    }
                    segments.push(PathSegment {
                        line: LineId(r.line as u32),
                        board: r.board,
                        alight: r.alight,
                    });
                    TransitPath {
                        access_m: r.access_m,
                        egress_m: egress,
                        segments,
                        expected_s: total,
                    }
                }));
            }
        }
        Ok(TransitRouter { n_zones: n, paths })
    }

    pub fn get(&self, o: ZoneId, d: ZoneId) -> Option<&TransitPath> {
        self.paths[o.index() * self.n_zones + d.index()].as_ref()
    }

    pub fn empty(n_zones: usize) -> Self {
        TransitRouter {
            n_zones,
            paths: vec![None; n_zones * n_zones],
        }
    }
}
