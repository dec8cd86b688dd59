//! Discrete-event model of the software-defined communication plane: lookup
//! tables, flow routing over an emulated switch graph, packet transport,
//! acknowledgement-based failure detection and failover orchestration.
//!
//! Times are integer nanoseconds so event ordering never depends on float
//! rounding.

mod graph;
mod tables;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::Discretizer;

pub use graph::{Edge, LinkGraph, Node};
pub use tables::{Code, CommTables};

pub type Nanos = u64;

pub fn ns(seconds: f64) -> Nanos {
    (seconds * 1e9).round() as Nanos
}

pub fn secs(t: Nanos) -> f64 {
    t as f64 * 1e-9
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("ViSC is disabled for turbine {0}")]
    ViscDisabled(usize),
    #[error("no communication link to turbine {0}")]
    NoLink(usize),
    #[error("turbine {0} is not in the address table")]
    UnknownTurbine(usize),
    #[error("no backup controller configured for turbine {0}")]
    NoBackupConfigured(usize),
    #[error("illegal table code {0}")]
    IllegalCode(String),
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("no edge between {0}")]
    UnknownEdge(String),
    #[error("edge {0} must have positive latency")]
    InvalidLatency(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub a: String,
    pub b: String,
    pub latency_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CommConfig {
    pub sdn_enabled: bool,
    pub failover_enabled: bool,
    pub discretizer: Discretizer,
    pub edge_latency_s: f64,
    pub guard_s: f64,
    /// Route measurements away from the command path when possible.
    pub independent_routes: bool,
    /// Uniform extra delay per packet, seeded.
    pub jitter_s: f64,
    /// Replaces the default switch graph when given.
    pub edges: Option<Vec<EdgeSpec>>,
}

impl Default for CommConfig {
    fn default() -> Self {
        Self {
            sdn_enabled: true,
            failover_enabled: true,
            discretizer: Discretizer::Tustin,
            edge_latency_s: 1e-4,
            guard_s: 0.04,
            independent_routes: false,
            jitter_s: 0.0,
            edges: None,
        }
    }
}

impl CommConfig {
    /// The default graph: the SDC unit and the farm controller behind four
    /// switches; every turbine is dual-homed to `s0` and `s1`.
    pub fn build_graph(&self, turbines: usize) -> Result<LinkGraph, NetError> {
        let lat = ns(self.edge_latency_s);
        let mut g = LinkGraph::default();
        match &self.edges {
            Some(specs) => {
                for e in specs {
                    let a: Node = e.a.parse()?;
                    let b: Node = e.b.parse()?;
                    g.add_edge(a, b, e.latency_s.map_or(lat, ns))?;
                }
            }
            None => {
                let s = Node::Switch;
                for (a, b) in [
                    (Node::Sdc, s(0)),
                    (Node::Sdc, s(1)),
                    (s(0), s(1)),
                    (Node::Wfcc, s(2)),
                    (Node::Wfcc, s(3)),
                    (s(2), s(0)),
                    (s(3), s(1)),
                ] {
                    g.add_edge(a, b, lat)?;
                }
                for j in 0..turbines as u16 {
                    g.add_edge(Node::Turbine(j), s(0), lat)?;
                    g.add_edge(Node::Turbine(j), s(1), lat)?;
                }
            }
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowKind {
    Measurement,
    ControlCommand,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PacketKind {
    Measurement,
    ControlCommand,
    WfccCommand,
    Ak,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Flow {
    pub src: Node,
    pub dst: Node,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Packet<P> {
    pub flow: Flow,
    pub kind: PacketKind,
    pub turbine: usize,
    pub seq: u64,
    pub sent_at: Nanos,
    pub deliver_at: Nanos,
    path: Vec<usize>,
    pub payload: P,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DetectorState {
    pub ak: bool,
    pub last_rx: Nanos,
    pub dr_armed_at: Option<Nanos>,
    /// DR already fired for the present outage.
    fired: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailoverReason {
    MasterControllerFailure,
    NoPath,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Detection {
    None,
    Rerouted,
    /// DR fired and routing cannot help; the caller decides on failover.
    Failover(FailoverReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct NetStats {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub dr_count: u64,
    pub failover_count: u64,
    pub routes_installed: u64,
    pub routes_torn: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetEvent {
    pub t: Nanos,
    pub kind: &'static str,
    pub turbine: Option<usize>,
    pub detail: String,
}

/// The whole communication plane of one run.
#[derive(Debug, Clone)]
pub struct CommPlane<P> {
    cfg: CommConfig,
    ts: Nanos,
    guard: Nanos,
    pub tables: CommTables,
    graph: LinkGraph,
    routes: BTreeMap<(usize, FlowKind), Vec<usize>>,
    queue: BinaryHeap<Reverse<(Nanos, u64, Node)>>,
    in_flight: BTreeMap<u64, Packet<P>>,
    detectors: BTreeMap<usize, DetectorState>,
    backups: BTreeSet<usize>,
    seq: u64,
    stats: NetStats,
    log: Vec<NetEvent>,
    rng: ChaCha8Rng,
}

impl<P: Clone> CommPlane<P> {
    pub fn new(cfg: CommConfig, graph: LinkGraph, ts: f64, seed: u64) -> Self {
        Self {
            ts: ns(ts),
            guard: ns(cfg.guard_s),
            cfg,
            tables: CommTables::default(),
            graph,
            routes: BTreeMap::new(),
            queue: BinaryHeap::new(),
            in_flight: BTreeMap::new(),
            detectors: BTreeMap::new(),
            backups: BTreeSet::new(),
            seq: 0,
            stats: NetStats::default(),
            log: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c0de),
        }
    }

    pub fn config(&self) -> &CommConfig {
        &self.cfg
    }

    pub fn graph(&self) -> &LinkGraph {
        &self.graph
    }

    pub fn stats(&self) -> NetStats {
        self.stats
    }

    pub fn log(&self) -> &[NetEvent] {
        &self.log
    }

    pub fn detector(&self, turbine: usize) -> Option<&DetectorState> {
        self.detectors.get(&turbine)
    }

    pub fn route(&self, turbine: usize, kind: FlowKind) -> Option<&[usize]> {
        self.routes.get(&(turbine, kind)).map(Vec::as_slice)
    }

    pub fn active_routes(&self) -> usize {
        self.routes.len()
    }

    pub fn backup_active(&self, turbine: usize) -> bool {
        self.backups.contains(&turbine)
    }

    fn note(&mut self, t: Nanos, kind: &'static str, turbine: Option<usize>, detail: String) {
        self.log.push(NetEvent {
            t,
            kind,
            turbine,
            detail,
        });
    }

    pub fn register(&mut self, turbine: usize, visc_enabled: bool) {
        let link = self
            .graph
            .shortest_path(Node::Sdc, Node::Turbine(turbine as u16))
            .is_some();
        self.tables
            .register(turbine, format!("wt{turbine}"), visc_enabled, link);
    }

    fn install(&mut self, turbine: usize, kind: FlowKind, path: Vec<usize>) {
        if self.routes.insert((turbine, kind), path).is_some() {
            self.stats.routes_torn += 1;
        }
        self.stats.routes_installed += 1;
    }

    fn tear_down(&mut self, turbine: usize) {
        for kind in [FlowKind::Measurement, FlowKind::ControlCommand] {
            if self.routes.remove(&(turbine, kind)).is_some() {
                self.stats.routes_torn += 1;
            }
        }
    }

    /// Tears down every remaining route, e.g. at the end of a run.
    pub fn tear_down_all(&mut self) {
        let turbines: BTreeSet<usize> = self.routes.keys().map(|k| k.0).collect();
        for t in turbines {
            self.tear_down(t);
        }
    }

    /// Installs both flows of `turbine` on the best available paths.
    fn route_flows(&mut self, turbine: usize) -> bool {
        let wt = Node::Turbine(turbine as u16);
        let Some(cmd) = self.graph.shortest_path(Node::Sdc, wt) else {
            return false;
        };
        let meas = if self.cfg.independent_routes {
            let mut g = self.graph.clone();
            for &e in &cmd {
                g.set_up(e, false, 0);
            }
            g.shortest_path(wt, Node::Sdc).unwrap_or_else(|| cmd.clone())
        } else {
            cmd.iter().rev().copied().collect()
        };
        self.install(turbine, FlowKind::ControlCommand, cmd);
        self.install(turbine, FlowKind::Measurement, meas);
        true
    }

    fn reset_detector(&mut self, turbine: usize, now: Nanos) {
        self.detectors.insert(
            turbine,
            DetectorState {
                ak: true,
                last_rx: now,
                dr_armed_at: None,
                fired: false,
            },
        );
    }

    /// WFCC request to run `turbine` as a remotely controlled ViSC.
    pub fn request_visc(&mut self, turbine: usize, now: Nanos) -> Result<(), NetError> {
        if !self.tables.t1.contains_key(&turbine) {
            return Err(NetError::UnknownTurbine(turbine));
        }
        if !self.tables.visc_enabled(turbine) {
            return Err(NetError::ViscDisabled(turbine));
        }
        if !self.tables.t3[&turbine].lo() {
            return Err(NetError::NoLink(turbine));
        }
        if !self.route_flows(turbine) {
            self.tear_down(turbine);
            self.tables.set_t3(turbine, Code::OFF);
            if self.tables.in_visc(turbine) && !self.backups.contains(&turbine) {
                self.tables.set_t2(turbine, Code::READY);
            }
            return Err(NetError::NoLink(turbine));
        }
        self.tables.set_t2(turbine, Code::ACTIVE);
        self.tables.set_t3(turbine, Code::ACTIVE);
        self.reset_detector(turbine, now);
        let path = self.describe(turbine);
        self.note(now, "visc_request", Some(turbine), path);
        Ok(())
    }

    /// Returns `turbine` to local grid-following control.
    pub fn release(&mut self, turbine: usize, now: Nanos) {
        self.tear_down(turbine);
        if let Some(c) = self.tables.t2.get(&turbine).copied() {
            self.tables.set_t2(turbine, Code::new(false, c.lo()).expect("legal"));
        }
        if let Some(c) = self.tables.t3.get(&turbine).copied() {
            self.tables.set_t3(turbine, Code::new(false, c.lo()).expect("legal"));
        }
        self.backups.remove(&turbine);
        self.detectors.remove(&turbine);
        self.note(now, "visc_release", Some(turbine), String::new());
    }

    fn describe(&self, turbine: usize) -> String {
        self.route(turbine, FlowKind::ControlCommand)
            .map(|p| {
                let mut at = Node::Sdc;
                let mut s = at.to_string();
                for &e in p {
                    let edge = self.graph.edge(e);
                    at = if edge.a == at { edge.b } else { edge.a };
                    s.push('>');
                    s.push_str(&at.to_string());
                }
                s
            })
            .unwrap_or_default()
    }

    /// Queues a packet on the installed route of `(turbine, kind)`.
    /// Returns the sequence number, or `None` if no route exists.
    pub fn send(&mut self, turbine: usize, kind: FlowKind, payload: P, now: Nanos) -> Option<u64> {
        self.stats.sent += 1;
        let Some(path) = self.routes.get(&(turbine, kind)).cloned() else {
            self.stats.dropped += 1;
            return None;
        };
        let wt = Node::Turbine(turbine as u16);
        let (flow, pk) = match kind {
            FlowKind::Measurement => (Flow { src: wt, dst: Node::Sdc }, PacketKind::Measurement),
            FlowKind::ControlCommand => {
                (Flow { src: Node::Sdc, dst: wt }, PacketKind::ControlCommand)
            }
        };
        let jitter = if self.cfg.jitter_s > 0.0 {
            self.rng.random_range(0..=ns(self.cfg.jitter_s))
        } else {
            0
        };
        let deliver_at = now + self.graph.path_latency(&path) + jitter;
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Reverse((deliver_at, seq, flow.dst)));
        self.in_flight.insert(
            seq,
            Packet {
                flow,
                kind: pk,
                turbine,
                seq,
                sent_at: now,
                deliver_at,
                path,
                payload,
            },
        );
        Some(seq)
    }

    /// Delivers every packet due by `now` in `(delivery time, seq)` order;
    /// packets whose path had a down edge while in flight are dropped.
    pub fn transport_step(&mut self, now: Nanos) -> Vec<Packet<P>> {
        let mut out = Vec::new();
        while let Some(&Reverse((at, seq, _))) = self.queue.peek() {
            if at > now {
                break;
            }
            self.queue.pop();
            let pkt = self.in_flight.remove(&seq).expect("queued packet is in flight");
            let lost = pkt
                .path
                .iter()
                .any(|&e| self.graph.edge(e).was_down(pkt.sent_at, pkt.deliver_at));
            if lost {
                self.stats.dropped += 1;
                continue;
            }
            self.stats.delivered += 1;
            if pkt.kind == PacketKind::ControlCommand {
                if let Some(d) = self.detectors.get_mut(&pkt.turbine) {
                    d.last_rx = pkt.deliver_at;
                }
            }
            out.push(pkt);
        }
        out
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight.len()
    }

    pub fn set_link(&mut self, a: Node, b: Node, up: bool, now: Nanos) -> Result<(), NetError> {
        let e = self
            .graph
            .find(a, b)
            .ok_or_else(|| NetError::UnknownEdge(format!("{a}-{b}")))?;
        self.graph.set_up(e, up, now);
        self.note(
            now,
            if up { "link_up" } else { "link_down" },
            None,
            format!("{a}-{b}"),
        );
        Ok(())
    }

    /// Acknowledge bookkeeping and the dynamic-routing trigger for one
    /// turbine, polled once per controller sample.
    pub fn poll(&mut self, turbine: usize, now: Nanos) -> Detection {
        if !self.tables.in_visc(turbine) || !self.tables.comm_on(turbine) {
            return Detection::None;
        }
        let (ts, guard) = (self.ts, self.guard);
        let Some(d) = self.detectors.get_mut(&turbine) else {
            return Detection::None;
        };
        d.ak = now.saturating_sub(d.last_rx) <= ts;
        if d.ak {
            d.dr_armed_at = None;
            d.fired = false;
            return Detection::None;
        }
        let armed = *d.dr_armed_at.get_or_insert(d.last_rx + ts);
        if d.fired || !self.cfg.sdn_enabled || now < armed + guard {
            return Detection::None;
        }
        d.fired = true;
        self.stats.dr_count += 1;
        self.note(
            now,
            "dr_fired",
            Some(turbine),
            format!("since_missed={:.6}", secs(now - armed)),
        );
        let intact = [FlowKind::Measurement, FlowKind::ControlCommand]
            .iter()
            .all(|&k| self.route(turbine, k).is_some_and(|p| self.graph.path_up(p)));
        if intact {
            return Detection::Failover(FailoverReason::MasterControllerFailure);
        }
        self.tear_down(turbine);
        if self.route_flows(turbine) {
            self.reset_detector(turbine, now);
            let path = self.describe(turbine);
            self.note(now, "rerouted", Some(turbine), path);
            Detection::Rerouted
        } else {
            self.tables.set_t3(turbine, Code::OFF);
            self.note(now, "no_path", Some(turbine), String::new());
            Detection::Failover(FailoverReason::NoPath)
        }
    }

    /// Activates the backup controller of `turbine`.
    pub fn failover(
        &mut self,
        turbine: usize,
        reason: FailoverReason,
        now: Nanos,
    ) -> Result<(), NetError> {
        if !self.cfg.failover_enabled {
            return Err(NetError::NoBackupConfigured(turbine));
        }
        if !self.backups.insert(turbine) {
            return Ok(());
        }
        self.stats.failover_count += 1;
        let detail = match reason {
            FailoverReason::MasterControllerFailure => "master_controller_failure",
            FailoverReason::NoPath => "no_path",
        };
        self.note(now, "failover", Some(turbine), detail.into());
        if reason == FailoverReason::MasterControllerFailure {
            self.tear_down(turbine);
            self.request_visc(turbine, now)?;
        }
        Ok(())
    }

    /// Appends an event from outside the plane (e.g. a scripted failure).
    pub fn record(&mut self, now: Nanos, kind: &'static str, turbine: Option<usize>, detail: String) {
        self.note(now, kind, turbine, detail);
    }
}
