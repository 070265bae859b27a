//! Road graph, zones and the transit schedule.

mod gtfs;
mod routing;
mod schedule;
mod toy_city;

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{LinkId, NodeId, Segment, ZoneId};

pub use gtfs::load_gtfs_lite;
pub use routing::{CarRoute, PathSegment, RouteTable, TransitPath, TransitRouter, TransitRouterParams};
pub use schedule::{next_departure, RunId, TransitLine, TransitSchedule, TransitStop, VehicleRun};
pub use toy_city::{build_toy_city, CoreBlock, LinkDefaults, ToyCity, ToyCitySpec};

/// Vehicle length used to derive storage capacity from link length.
pub const VEHICLE_SPACE_M: f64 = 7.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub id: LinkId,
    pub from: NodeId,
    pub to: NodeId,
    /// Meters.
    pub length: f64,
    /// Meters per second.
    pub free_speed: f64,
    /// Vehicles per hour at full population scale.
    pub flow_capacity: f64,
    /// Vehicles on the link at once, full population scale.
    pub storage_capacity: f64,
}

impl Link {
    pub fn free_flow_time(&self) -> f64 {
        self.length / self.free_speed
    }

    /// Whole seconds to traverse the link at free speed.
    pub fn free_flow_secs(&self) -> u32 {
        (self.free_flow_time() - 1e-9).ceil().max(0.0) as u32
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub id: ZoneId,
    pub centroid: NodeId,
    pub segment: Segment,
    pub transit_accessible: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub nodes: Vec<Node>,
    pub links: Vec<Link>,
    #[serde(skip)]
    out_links: Vec<Vec<LinkId>>,
}

#[derive(Clone, Copy, PartialEq)]
struct Frontier {
    cost: f64,
    node: u32,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Network {
    pub fn new(nodes: Vec<Node>, links: Vec<Link>) -> Result<Self> {
        for (i, n) in nodes.iter().enumerate() {
            if n.id.index() != i {
                return Err(Error::Construction(format!("node {} stored at index {i}", n.id)));
            }
        }
        for (i, l) in links.iter().enumerate() {
            if l.id.index() != i {
                return Err(Error::Construction(format!("link {} stored at index {i}", l.id)));
            }
            if l.from.index() >= nodes.len() || l.to.index() >= nodes.len() {
                return Err(Error::Construction(format!("link {} references a missing node", l.id)));
            }
            let positive = [l.length, l.free_speed, l.flow_capacity, l.storage_capacity]
                .iter()
                .all(|v| *v > 0.0 && v.is_finite());
            if !positive {
                return Err(Error::Construction(format!("link {} has non-positive attributes", l.id)));
            }
        }
        let mut out_links = vec![Vec::new(); nodes.len()];
        for l in &links {
            out_links[l.from.index()].push(l.id);
        }
        Ok(Network {
            nodes,
            links,
            out_links,
        })
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.index()]
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.index()]
    }

    pub fn out_links(&self, node: NodeId) -> &[LinkId] {
        &self.out_links[node.index()]
    }

    pub fn distance(&self, a: NodeId, b: NodeId) -> f64 {
        let (p, q) = (self.node(a), self.node(b));
        ((p.x - q.x).powi(2) + (p.y - q.y).powi(2)).sqrt()
    }

    /// Free-flow shortest-path tree from `origin`: (time to node, incoming link).
    pub fn shortest_path_tree(&self, origin: NodeId) -> (Vec<f64>, Vec<Option<LinkId>>) {
        let n = self.nodes.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut pred = vec![None; n];
        let mut heap = BinaryHeap::new();
        dist[origin.index()] = 0.0;
        heap.push(Frontier {
            cost: 0.0,
            node: origin.0,
        });
        while let Some(Frontier { cost, node }) = heap.pop() {
            if cost > dist[node as usize] {
                continue;
            }
            for &lid in &self.out_links[node as usize] {
                let link = &self.links[lid.index()];
                let next = cost + link.free_flow_time();
                let to = link.to.index();
                if next < dist[to] {
                    dist[to] = next;
                    pred[to] = Some(lid);
                    heap.push(Frontier {
                        cost: next,
                        node: link.to.0,
                    });
                }
            }
        }
        (dist, pred)
    }

    pub fn route(&self, from: NodeId, to: NodeId) -> Option<Vec<LinkId>> {
        let (dist, pred) = self.shortest_path_tree(from);
        trace_route(self, &dist, &pred, from, to)
    }

    fn reachable(&self, origin: NodeId, reverse: bool) -> Vec<bool> {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![origin];
        seen[origin.index()] = true;
        let mut incoming = vec![Vec::new(); self.nodes.len()];
        if reverse {
            for l in &self.links {
                incoming[l.to.index()].push(l.from);
            }
        }
        while let Some(n) = stack.pop() {
            let next: Vec<NodeId> = if reverse {
                incoming[n.index()].clone()
            } else {
                self.out_links[n.index()].iter().map(|l| self.links[l.index()].to).collect()
            };
            for m in next {
                if !seen[m.index()] {
                    seen[m.index()] = true;
                    stack.push(m);
                }
            }
        }
        seen
    }

    pub fn is_strongly_connected(&self) -> bool {
        if self.nodes.is_empty() {
            return true;
        }
        let root = NodeId(0);
        self.reachable(root, false).into_iter().all(|b| b) && self.reachable(root, true).into_iter().all(|b| b)
    }

    /// Restore the adjacency index after deserialization.
    pub fn reindex(&mut self) {
        let mut out_links = vec![Vec::new(); self.nodes.len()];
        for l in &self.links {
            out_links[l.from.index()].push(l.id);
        }
        self.out_links = out_links;
    }
}

pub(crate) fn trace_route(
    net: &Network,
    dist: &[f64],
    pred: &[Option<LinkId>],
    from: NodeId,
    to: NodeId,
) -> Option<Vec<LinkId>> {
    if !dist[to.index()].is_finite() {
        return None;
    }
    let mut route = Vec::new();
    let mut cur = to;
    while cur != from {
        let lid = pred[cur.index()]?;
        route.push(lid);
        cur = net.link(lid).from;
    }
    route.reverse();
    Some(route)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_positive_links() {
        let nodes = vec![
            Node { id: NodeId(0), x: 0.0, y: 0.0 },
            Node { id: NodeId(1), x: 1.0, y: 0.0 },
        ];
        let link = Link {
            id: LinkId(0),
            from: NodeId(0),
            to: NodeId(1),
            length: 0.0,
            free_speed: 10.0,
            flow_capacity: 100.0,
            storage_capacity: 1.0,
        };
        assert!(Network::new(nodes, vec![link]).is_err());
    }

    #[test]
    fn one_way_pair_is_not_strongly_connected() {
        let nodes = vec![
            Node { id: NodeId(0), x: 0.0, y: 0.0 },
            Node { id: NodeId(1), x: 1.0, y: 0.0 },
        ];
        let link = Link {
            id: LinkId(0),
            from: NodeId(0),
            to: NodeId(1),
            length: 1000.0,
            free_speed: 10.0,
            flow_capacity: 100.0,
            storage_capacity: 10.0,
        };
        let net = Network::new(nodes, vec![link]).unwrap();
        assert!(!net.is_strongly_connected());
        assert_eq!(net.route(NodeId(0), NodeId(1)), Some(vec![LinkId(0)]));
        assert_eq!(net.route(NodeId(1), NodeId(0)), None);
        assert_eq!(net.link(LinkId(0)).free_flow_secs(), 100);
    }
}
