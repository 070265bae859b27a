use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{CapacityPolicy, EngineConfig, World};
use crate::error::{Error, Result};
use crate::population::DayPlan;
use crate::types::{AgentId, LineId, LinkId, Mode, Seconds, StopId, ZoneId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Depart,
    LinkEnter,
    LinkLeave,
    Board,
    DenyBoard,
    Alight,
    Arrive,
    Stuck,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Depart => "depart",
            EventKind::LinkEnter => "link_enter",
            EventKind::LinkLeave => "link_leave",
            EventKind::Board => "board",
            EventKind::DenyBoard => "deny_board",
            EventKind::Alight => "alight",
            EventKind::Arrive => "arrive",
            EventKind::Stuck => "stuck",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Location {
    Zone(ZoneId),
    Link(LinkId),
    Stop(StopId),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Zone(z) => write!(f, "zone:{z}"),
            Location::Link(l) => write!(f, "link:{l}"),
            Location::Stop(s) => write!(f, "stop:{s}"),
        }
    }
}

/// A transit vehicle: one run of one line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VehicleRef {
    pub line: LineId,
    pub run: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub time: Seconds,
    pub agent: AgentId,
    pub kind: EventKind,
    pub location: Location,
    pub mode: Mode,
    /// Vehicle involved in board, deny_board and alight events. Not part of
    /// the printed record.
    pub vehicle: Option<VehicleRef>,
}

impl fmt::Display for EventRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{},{}",
            self.time,
            self.agent,
            self.kind.as_str(),
            self.location,
            self.mode
        )
    }
}

/// One leg as it actually happened. Durations in seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecutedLeg {
    pub mode: Mode,
    pub origin: ZoneId,
    pub destination: ZoneId,
    pub departure: Seconds,
    /// `None` when the leg ended stuck.
    pub arrival: Option<Seconds>,
    /// Walk to the boarding stop (transit only).
    pub access_s: Seconds,
    /// Wait at the first boarding stop, including waits caused by denied boarding.
    pub wait_s: Seconds,
    pub in_vehicle_s: Seconds,
    /// Waits at transfer stops.
    pub transfer_s: Seconds,
    pub egress_s: Seconds,
    pub distance_m: f64,
    pub denied_boardings: u32,
}

impl ExecutedLeg {
    pub fn is_stuck(&self) -> bool {
        self.arrival.is_none()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkHour {
    pub entries: u32,
    pub exits: u32,
    /// Summed time on the link of the vehicles that exited in this hour.
    pub travel_s: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExecutedDay {
    /// Per agent, the legs that were started, in plan order.
    pub legs: Vec<Vec<ExecutedLeg>>,
    /// Per link, one entry per clock hour of the day.
    pub link_hours: Vec<Vec<LinkHour>>,
    /// Vehicles still on each link when the day ended.
    pub on_link_at_end: Vec<u32>,
    /// Per line, boardings of each run.
    pub run_boardings: Vec<Vec<u32>>,
    /// Per line, seats of each run after the capacity policy.
    pub run_seats: Vec<Vec<u32>>,
    pub departures: u64,
    pub arrivals: u64,
    pub stuck: u64,
    pub denied_boardings: u64,
    pub events: Vec<EventRecord>,
}

impl ExecutedDay {
    pub fn event_log(&self) -> String {
        let mut s = String::with_capacity(self.events.len() * 32);
        s.push_str("time,agent,event_kind,location,mode\n");
        for e in &self.events {
            s.push_str(&e.to_string());
            s.push('\n');
        }
        s
    }

    /// Boardings per run never exceed the run's effective seats.
    pub fn capacity_respected(&self) -> bool {
        self.run_boardings
            .iter()
            .zip(&self.run_seats)
            .all(|(b, s)| b.iter().zip(s).all(|(b, s)| b <= s))
    }

    pub fn mode_counts(&self) -> [u64; Mode::COUNT] {
        let mut c = [0; Mode::COUNT];
        for leg in self.legs.iter().flatten() {
            c[leg.mode.index()] += 1;
        }
        c
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Ev {
    Depart(u32),
    TryExit(u32),
    Board(u32),
    Alight(u32),
    Arrive(u32),
    Stuck(u32),
}

struct LinkState {
    queue: VecDeque<(u32, Seconds, Seconds)>,
    on_link: u32,
    next_free: f64,
    pending: Option<Seconds>,
    waiters: Vec<u32>,
    headway: f64,
    hour_cap: u32,
    storage: u32,
    free_flow: Seconds,
}

#[derive(Clone, Copy, Default)]
struct Progress {
    leg: usize,
    route_pos: usize,
    segment: usize,
    run: usize,
    stop_arrival: Seconds,
    boarded_at: Seconds,
    active: bool,
}

struct Sim<'a> {
    world: &'a World,
    plans: &'a [DayPlan],
    cfg: &'a EngineConfig,
    record: bool,
    now: Seconds,
    seq: u64,
    heap: BinaryHeap<Reverse<(Seconds, u64, Ev)>>,
    links: Vec<LinkState>,
    progress: Vec<Progress>,
    out: ExecutedDay,
    n_hours: usize,
}

/// Run one simulated day.
///
/// Plans are executed on a single event timeline; ties at equal times are
/// broken by scheduling order, so the outcome depends only on the inputs.
pub fn execute_day(
    world: &World,
    plans: &[DayPlan],
    policy: &CapacityPolicy,
    cfg: &EngineConfig,
    record_events: bool,
) -> Result<ExecutedDay> {
    policy.validate()?;
    for (i, p) in plans.iter().enumerate() {
        p.validate().map_err(|e| Error::Invariant(format!("plan of agent {i}: {e}")))?;
    }
    let n_hours = (cfg.day_end_s as usize).div_ceil(3600) + 1;
    let links = world
        .network
        .links
        .iter()
        .map(|l| {
            let cap = policy.flow_capacity(l.flow_capacity);
            LinkState {
                queue: VecDeque::new(),
                on_link: 0,
                next_free: 0.0,
                pending: None,
                waiters: Vec::new(),
                headway: 3600.0 / cap,
                hour_cap: ((cap + 1e-9).floor() as u32).max(1),
                storage: policy.storage(l.storage_capacity),
                free_flow: l.free_flow_secs().max(1),
            }
        })
        .collect();
    let run_seats = world
        .schedule
        .lines
        .iter()
        .map(|l| l.runs.iter().map(|r| policy.effective_seats(r.seat_capacity)).collect())
        .collect();
    let out = ExecutedDay {
        legs: vec![Vec::new(); plans.len()],
        link_hours: vec![vec![LinkHour::default(); n_hours]; world.network.links.len()],
        on_link_at_end: Vec::new(),
        run_boardings: world.schedule.lines.iter().map(|l| vec![0; l.runs.len()]).collect(),
        run_seats,
        ..Default::default()
    };
    let mut sim = Sim {
        world,
        plans,
        cfg,
        record: record_events,
        now: 0,
        seq: 0,
        heap: BinaryHeap::new(),
        links,
        progress: vec![Progress::default(); plans.len()],
        out,
        n_hours,
    };
    for (a, plan) in plans.iter().enumerate() {
        if let Some(leg) = plan.legs.first() {
            sim.progress[a].active = true;
            sim.push(leg.departure, Ev::Depart(a as u32));
        }
    }
    sim.run();
    Ok(sim.out)
}

impl<'a> Sim<'a> {
    fn push(&mut self, t: Seconds, ev: Ev) {
        self.seq += 1;
        self.heap.push(Reverse((t, self.seq, ev)));
    }

    fn log(&mut self, agent: u32, kind: EventKind, location: Location) {
        self.log_vehicle(agent, kind, location, None);
    }

    fn log_vehicle(&mut self, agent: u32, kind: EventKind, location: Location, vehicle: Option<VehicleRef>) {
        if self.record {
            let mode = self.plans[agent as usize].legs[self.progress[agent as usize].leg].mode;
            self.out.events.push(EventRecord {
                time: self.now,
                agent: AgentId(agent),
                kind,
                location,
                mode,
                vehicle,
            });
        }
    }

    fn hour(&self, t: Seconds) -> usize {
        (t as usize / 3600).min(self.n_hours - 1)
    }

    fn run(&mut self) {
        while let Some(Reverse((t, _, ev))) = self.heap.pop() {
            if t > self.cfg.day_end_s {
                break;
            }
            self.now = t;
            match ev {
                Ev::Depart(a) => self.depart(a),
                Ev::TryExit(l) => self.try_exit(l),
                Ev::Board(a) => self.board(a),
                Ev::Alight(a) => self.alight(a),
                Ev::Arrive(a) => self.arrive(a),
                Ev::Stuck(a) => self.stuck(a),
            }
        }
        self.now = self.cfg.day_end_s;
        for a in 0..self.plans.len() as u32 {
            if self.progress[a as usize].active && self.out.legs[a as usize].len() > self.progress[a as usize].leg {
                self.stuck(a);
            } else if self.progress[a as usize].active {
                self.progress[a as usize].active = false;
            }
        }
        self.out.on_link_at_end = self.links.iter().map(|l| l.on_link).collect();
    }

    fn current(&mut self, a: u32) -> &mut ExecutedLeg {
        let leg = self.progress[a as usize].leg;
        &mut self.out.legs[a as usize][leg]
    }

    fn depart(&mut self, a: u32) {
        let world = self.world;
        let plans = self.plans;
        let p = self.progress[a as usize];
        let leg = &plans[a as usize].legs[p.leg];
        self.out.departures += 1;
        self.out.legs[a as usize].push(ExecutedLeg {
            mode: leg.mode,
            origin: leg.origin,
            destination: leg.destination,
            departure: self.now,
            arrival: None,
            access_s: 0,
            wait_s: 0,
            in_vehicle_s: 0,
            transfer_s: 0,
            egress_s: 0,
            distance_m: 0.0,
            denied_boardings: 0,
        });
        self.log(a, EventKind::Depart, Location::Zone(leg.origin));
        let (o, d) = (leg.origin, leg.destination);
        if o == d {
            self.push(self.now, Ev::Arrive(a));
            return;
        }
        match leg.mode {
            m if m.uses_road() => match world.routes.get(o, d) {
                Some(route) if !route.links.is_empty() => {
                    self.current(a).distance_m = route.length_m;
                    self.progress[a as usize].route_pos = 0;
                    self.enter_link(a, route.links[0]);
                }
                _ => self.push(self.now, Ev::Stuck(a)),
            },
            Mode::Transit => {
                let path = world.transit.get(o, d).filter(|_| world.zones[o.index()].transit_accessible);
                match path {
                    Some(path) => {
                        let access = world.walk_secs(path.access_m);
                        let leg = self.current(a);
                        leg.access_s = access;
                        leg.distance_m = world.beeline_m(o, d);
                        let pr = &mut self.progress[a as usize];
                        pr.segment = 0;
                        pr.stop_arrival = self.now + access;
                        self.wait_for_run(a, None);
                    }
                    None => self.push(self.now, Ev::Stuck(a)),
                }
            }
            m => {
                let beeline = world.beeline_m(o, d);
                let secs = world.choice.teleport_secs(m, beeline).expect("fixed-speed mode");
                self.current(a).distance_m = beeline * world.choice.beeline_factor;
                self.push(self.now + secs.ceil() as Seconds, Ev::Arrive(a));
            }
        }
    }

    fn path(&self, a: u32) -> &'a crate::network::TransitPath {
        let plans = self.plans;
        let leg = &plans[a as usize].legs[self.progress[a as usize].leg];
        self.world
            .transit
            .get(leg.origin, leg.destination)
            .expect("transit leg in progress has a path")
    }

    /// Schedule boarding on the next run at or after `after` (or the stop
    /// arrival time), abandoning once the wait would exceed the limit.
    fn wait_for_run(&mut self, a: u32, after_run: Option<usize>) {
        let seg = self.path(a).segments[self.progress[a as usize].segment];
        let world = self.world;
        let line = world.schedule.line(seg.line);
        let p = self.progress[a as usize];
        let run = match after_run {
            Some(r) => Some(r + 1).filter(|&r| r < line.runs.len()),
            None => line.next_run_at(seg.board, p.stop_arrival),
        };
        let deadline = p.stop_arrival.saturating_add(self.cfg.max_wait_s);
        match run.map(|r| (r, line.departure_at(r, seg.board))) {
            Some((r, t)) if t <= deadline => {
                self.progress[a as usize].run = r;
                self.push(t, Ev::Board(a));
            }
            Some(_) => self.push(deadline.max(self.now), Ev::Stuck(a)),
            None => self.push(p.stop_arrival.max(self.now), Ev::Stuck(a)),
        }
    }

    fn board(&mut self, a: u32) {
        let seg = self.path(a).segments[self.progress[a as usize].segment];
        let world = self.world;
        let line = world.schedule.line(seg.line);
        let stop = Location::Stop(line.stops[seg.board]);
        let r = self.progress[a as usize].run;
        let li = seg.line.index();
        if self.out.run_boardings[li][r] < self.out.run_seats[li][r] {
            self.out.run_boardings[li][r] += 1;
            self.log_vehicle(a, EventKind::Board, stop, Some(VehicleRef { line: seg.line, run: r as u32 }));
            let p = &mut self.progress[a as usize];
            p.boarded_at = self.now;
            let waited = self.now - p.stop_arrival;
            let first = p.segment == 0;
            let leg = self.current(a);
            if first {
                leg.wait_s += waited;
            } else {
                leg.transfer_s += waited;
            }
            self.push(line.departure_at(r, seg.alight), Ev::Alight(a));
        } else {
            self.out.denied_boardings += 1;
            self.current(a).denied_boardings += 1;
            self.log_vehicle(a, EventKind::DenyBoard, stop, Some(VehicleRef { line: seg.line, run: r as u32 }));
            self.wait_for_run(a, Some(r));
        }
    }

    fn alight(&mut self, a: u32) {
        let path = self.path(a);
        let n_segments = path.segments.len();
        let egress_m = path.egress_m;
        let seg = path.segments[self.progress[a as usize].segment];
        let stop = self.world.schedule.line(seg.line).stops[seg.alight];
        let vehicle = VehicleRef {
            line: seg.line,
            run: self.progress[a as usize].run as u32,
        };
        self.log_vehicle(a, EventKind::Alight, Location::Stop(stop), Some(vehicle));
        let boarded = self.progress[a as usize].boarded_at;
        self.current(a).in_vehicle_s += self.now - boarded;
        let p = &mut self.progress[a as usize];
        p.segment += 1;
        if p.segment < n_segments {
            p.stop_arrival = self.now;
            self.wait_for_run(a, None);
        } else {
            let egress = self.world.walk_secs(egress_m);
            self.current(a).egress_s = egress;
            self.push(self.now + egress, Ev::Arrive(a));
        }
    }

    fn arrive(&mut self, a: u32) {
        let dest = self.plans[a as usize].legs[self.progress[a as usize].leg].destination;
        self.log(a, EventKind::Arrive, Location::Zone(dest));
        self.out.arrivals += 1;
        let now = self.now;
        let leg = self.current(a);
        leg.arrival = Some(now);
        if leg.mode.uses_road() || leg.mode.is_teleported() {
            leg.in_vehicle_s = now - leg.departure;
        }
        let p = &mut self.progress[a as usize];
        p.leg += 1;
        match self.plans[a as usize].legs.get(p.leg) {
            Some(next) => self.push(next.departure.max(now), Ev::Depart(a)),
            None => p.active = false,
        }
    }

    fn stuck(&mut self, a: u32) {
        let p = self.progress[a as usize];
        if !p.active {
            return;
        }
        let leg = &self.plans[a as usize].legs[p.leg];
        let loc = Location::Zone(leg.destination);
        self.log(a, EventKind::Stuck, loc);
        self.out.stuck += 1;
        self.progress[a as usize].active = false;
    }

    fn enter_link(&mut self, a: u32, link: LinkId) {
        self.log(a, EventKind::LinkEnter, Location::Link(link));
        let h = self.hour(self.now);
        self.out.link_hours[link.index()][h].entries += 1;
        let now = self.now;
        let st = &mut self.links[link.index()];
        st.on_link += 1;
        st.queue.push_back((a, now + st.free_flow, now));
        if st.queue.len() == 1 {
            let t = (now + st.free_flow).max(st.next_free.ceil() as Seconds);
            self.schedule_exit(link.index(), t);
        }
    }

    fn schedule_exit(&mut self, l: usize, t: Seconds) {
        let st = &mut self.links[l];
        if st.pending.is_some_and(|p| p <= t) {
            return;
        }
        st.pending = Some(t);
        self.push(t, Ev::TryExit(l as u32));
    }

    fn try_exit(&mut self, l: u32) {
        let l = l as usize;
        let now = self.now;
        if self.links[l].pending != Some(now) {
            return;
        }
        self.links[l].pending = None;
        let Some(&(a, ready, entered)) = self.links[l].queue.front() else {
            return;
        };
        let st = &self.links[l];
        let free_at = st.next_free.ceil() as Seconds;
        if ready > now || free_at > now {
            self.schedule_exit(l, ready.max(free_at));
            return;
        }
        let h = self.hour(now);
        if self.out.link_hours[l][h].exits >= st.hour_cap {
            self.schedule_exit(l, (h as Seconds + 1) * 3600);
            return;
        }
        let (world, plans) = (self.world, self.plans);
        let leg = &plans[a as usize].legs[self.progress[a as usize].leg];
        let route = &world
            .routes
            .get(leg.origin, leg.destination)
            .expect("vehicle on a link has a route")
            .links;
        let pos = self.progress[a as usize].route_pos;
        let next = route.get(pos + 1).copied();
        if let Some(next) = next {
            let down = &self.links[next.index()];
            let push_through = ready + self.cfg.stuck_time_s;
            if down.on_link >= down.storage && now < push_through {
                if !self.links[next.index()].waiters.contains(&(l as u32)) {
                    self.links[next.index()].waiters.push(l as u32);
                }
                self.schedule_exit(l, push_through);
                return;
            }
        }

        let st = &mut self.links[l];
        st.queue.pop_front();
        st.on_link -= 1;
        st.next_free = now as f64 + st.headway;
        let waiters = std::mem::take(&mut st.waiters);
        let bin = &mut self.out.link_hours[l][h];
        bin.exits += 1;
        bin.travel_s += u64::from(now - entered);
        self.log(a, EventKind::LinkLeave, Location::Link(LinkId(l as u32)));
        for w in waiters {
            self.schedule_exit(w as usize, now);
        }
        match next {
            Some(next) => {
                self.progress[a as usize].route_pos += 1;
                self.enter_link(a, next);
            }
            None => self.push(now, Ev::Arrive(a)),
        }
        let st = &self.links[l];
        if let Some(&(_, ready, _)) = st.queue.front() {
            let t = ready.max(st.next_free.ceil() as Seconds);
            self.schedule_exit(l, t);
        }
    }
}
