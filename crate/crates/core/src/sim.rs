//! One simulation run: wires the scheduler, medium, energy ledger, traffic
//! sources and routing agents together, and produces the metrics report and
//! the event trace.
//!
//! Trace lines are `time node event id detail…`, space separated, with time
//! printed to the nanosecond and `-` in place of an absent node or id.

use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::sync::Arc;

use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::aodv::AodvNode;
use crate::energy::{pj_to_joules, Class, Debit, Direction, EnergyLedger, EnergyParams};
use crate::engine::{rng_stream, EngineError, Scheduler};
use crate::maodv::MaodvNode;
use crate::metrics::{EnergySample, LedgerError, MetricsReport, PacketEvent, PacketLedger};
use crate::proto::{
    Action, Data, DataId, DropCause, Frame, Hello, Outbox, Packet, ProtocolParams, RoutingAgent, Timer, ADDR, RREQ_BASE,
};
use crate::radio::{Medium, Miss, RadioParams, Topology};
use crate::traffic::FlowSpec;
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ProtocolKind {
    Aodv,
    Maodv,
}

impl ProtocolKind {
    pub const BOTH: [ProtocolKind; 2] = [ProtocolKind::Aodv, ProtocolKind::Maodv];
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProtocolKind::Aodv => "aodv",
            ProtocolKind::Maodv => "maodv",
        })
    }
}

impl FromStr for ProtocolKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "aodv" => Ok(ProtocolKind::Aodv),
            "maodv" => Ok(ProtocolKind::Maodv),
            _ => Err(format!("unknown protocol {s:?} (expected aodv or maodv)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid setup: {0}")]
    Setup(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("fault at node {node}, t={time:.9}: {msg}")]
    Fault { time: f64, node: NodeId, msg: String },
}

/// Everything a run needs, already resolved: mobility is generated and
/// flows are concrete.
#[derive(Debug, Clone)]
pub struct SimSetup {
    pub protocol: ProtocolKind,
    pub params: ProtocolParams,
    pub radio: RadioParams,
    pub energy: EnergyParams,
    pub topology: Topology,
    pub flows: Vec<FlowSpec>,
    /// Scripted failures: node forced dead at the given time.
    pub kills: Vec<(f64, NodeId)>,
    pub duration: f64,
    pub seed: u64,
    pub energy_sample_interval: f64,
    /// Keep the trace text, not just its digest.
    pub keep_trace: bool,
}

impl SimSetup {
    pub fn node_count(&self) -> usize {
        self.topology.node_count()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Setup(m));
        let n = self.node_count();
        if n < 2 {
            return bad(format!("node_count must be at least 2, got {n}"));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad(format!("duration must be positive, got {}", self.duration));
        }
        if !(self.energy_sample_interval > 0.0) {
            return bad(format!("energy_sample_interval must be positive, got {}", self.energy_sample_interval));
        }
        self.params.validate().map_err(|e| SimError::Setup(e.to_string()))?;
        self.radio.validate().map_err(|e| SimError::Setup(e.to_string()))?;
        self.energy.validate().map_err(|e| SimError::Setup(e.to_string()))?;
        for (i, f) in self.flows.iter().enumerate() {
            f.validate(n).map_err(|e| SimError::Setup(format!("flow {i}: {e}")))?;
        }
        for &(t, node) in &self.kills {
            if node.index() >= n || !(t >= 0.0) {
                return bad(format!("kill of node {node} at {t} is out of bounds"));
            }
        }
        Ok(())
    }

    /// How long an M-AODV destination gathers RREQ copies.
    pub fn collect_window(&self) -> f64 {
        let d = self.params.net_diameter as usize;
        2.0 * d as f64 * self.radio.tx_duration(RREQ_BASE + ADDR * (d + 1))
    }
}

/// A delivered packet's traversal, for loop and source-route checks.
#[derive(Debug, Clone, PartialEq)]
pub struct DeliveredPath {
    pub id: DataId,
    pub visited: Vec<NodeId>,
    pub source_route: Vec<NodeId>,
}

#[derive(Debug)]
pub struct RunOutput {
    pub report: MetricsReport,
    pub ledger: PacketLedger,
    pub energy: EnergyLedger,
    pub trace_digest: String,
    pub trace: Option<String>,
    pub trace_lines: u64,
    pub repairs: u64,
    pub delivered_paths: Vec<DeliveredPath>,
    pub events: u64,
}

#[derive(Debug, Clone)]
enum SimEvent {
    Rx { to: NodeId, frame: Arc<Frame> },
    Timer { node: NodeId, timer: Timer },
    Liveness { node: NodeId, neighbor: NodeId },
    Generate { flow: usize, seq: u32 },
    HelloTick,
    EnergySample,
    Kill(NodeId),
    Waypoint { node: NodeId, leg: usize },
    Link { a: NodeId, b: NodeId, up: bool },
}

struct Trace {
    hasher: Sha256,
    text: Option<String>,
    lines: u64,
    buf: String,
}

impl Trace {
    fn new(keep: bool) -> Self {
        Trace {
            hasher: Sha256::new(),
            text: keep.then(String::new),
            lines: 0,
            buf: String::new(),
        }
    }

    fn line(&mut self, t: f64, node: Option<NodeId>, event: &str, id: &str, detail: fmt::Arguments<'_>) {
        self.buf.clear();
        let _ = write!(self.buf, "{t:.9} ");
        match node {
            Some(n) => {
                let _ = write!(self.buf, "{n}");
            }
            None => self.buf.push('-'),
        }
        let id = if id.is_empty() { "-" } else { id };
        let _ = write!(self.buf, " {event} {id}");
        let start = self.buf.len();
        let _ = write!(self.buf, " {detail}");
        if self.buf.len() == start + 1 {
            self.buf.pop();
        }
        self.buf.push('\n');
        self.hasher.update(self.buf.as_bytes());
        if let Some(t) = &mut self.text {
            t.push_str(&self.buf);
        }
        self.lines += 1;
    }
}

struct World {
    setup: SimSetup,
    medium: Medium,
    energy: EnergyLedger,
    agents: Vec<Box<dyn RoutingAgent>>,
    ledger: PacketLedger,
    trace: Trace,
    channel: ChaCha12Rng,
    samples: Vec<EnergySample>,
    delivered_paths: Vec<DeliveredPath>,
}

/// Runs one simulation to completion.
pub fn run(setup: SimSetup) -> Result<RunOutput, SimError> {
    setup.validate()?;
    let n = setup.node_count();
    let window = setup.collect_window();
    let agents: Vec<Box<dyn RoutingAgent>> = (0..n as u32)
        .map(|i| -> Box<dyn RoutingAgent> {
            match setup.protocol {
                ProtocolKind::Aodv => Box::new(AodvNode::new(NodeId(i), setup.params.clone())),
                ProtocolKind::Maodv => Box::new(MaodvNode::new(NodeId(i), setup.params.clone(), window)),
            }
        })
        .collect();
    let mut world = World {
        medium: Medium::new(setup.radio.clone(), setup.topology.clone()),
        energy: EnergyLedger::new(setup.energy.clone(), n),
        agents,
        ledger: PacketLedger::default(),
        trace: Trace::new(setup.keep_trace),
        channel: rng_stream(setup.seed, "channel"),
        samples: Vec::new(),
        delivered_paths: Vec::new(),
        setup,
    };
    let mut sched: Scheduler<SimEvent> = Scheduler::new();
    world.prime(&mut sched)?;
    let duration = world.setup.duration;
    let events = sched.run_until(duration, |s, t, ev| world.handle(s, t, ev))?;
    world.sample(duration);

    let (net, routing) = world.energy.totals();
    debug_assert_eq!(world.samples.last().map(|s| s.network_j), Some(pj_to_joules(net)));
    let _ = routing;
    let repairs = world.agents.iter().map(|a| a.repairs_started()).sum();
    let report = MetricsReport::finalize(&world.ledger, duration, world.samples);
    Ok(RunOutput {
        report,
        ledger: world.ledger,
        energy: world.energy,
        trace_digest: hex::encode(world.trace.hasher.finalize()),
        trace: world.trace.text,
        trace_lines: world.trace.lines,
        repairs,
        delivered_paths: world.delivered_paths,
        events,
    })
}

impl World {
    fn prime(&mut self, sched: &mut Scheduler<SimEvent>) -> Result<(), SimError> {
        let s = &self.setup;
        self.trace.line(
            0.0,
            None,
            "run",
            "-",
            format_args!("protocol={} nodes={} duration={} seed={}", s.protocol, s.node_count(), s.duration, s.seed),
        );
        match &s.topology {
            Topology::Geometric(schedules) => {
                for sch in schedules {
                    self.trace.line(
                        0.0,
                        Some(sch.node),
                        "place",
                        "-",
                        format_args!("{:.6} {:.6}", sch.initial.x, sch.initial.y),
                    );
                    for (leg, l) in sch.legs.iter().enumerate() {
                        if l.depart_time <= s.duration {
                            sched.schedule(l.depart_time, SimEvent::Waypoint { node: sch.node, leg })?;
                        }
                    }
                }
            }
            Topology::Explicit(links) => {
                for (a, b, init, changes) in links.all_links() {
                    let state = if init { "up" } else { "down" };
                    self.trace.line(0.0, None, "link", "-", format_args!("{a} {b} {state}"));
                    for &(at, up) in changes {
                        if at <= s.duration {
                            sched.schedule(at, SimEvent::Link { a, b, up })?;
                        }
                    }
                }
            }
        }
        for (k, f) in s.flows.iter().enumerate() {
            self.trace.line(
                0.0,
                Some(f.src),
                "flow",
                &format!("f{k}"),
                format_args!(
                    "dest={} payload={} interval={} start={:.9} stop={}",
                    f.dest, f.payload, f.interval, f.start, f.stop
                ),
            );
            if f.packet_count() > 0 && f.start <= s.duration {
                sched.schedule(f.start, SimEvent::Generate { flow: k, seq: 0 })?;
            }
        }
        for &(t, node) in &s.kills {
            if t <= s.duration {
                sched.schedule(t, SimEvent::Kill(node))?;
            }
        }
        sched.schedule(s.params.hello_interval, SimEvent::HelloTick)?;
        let step = s.energy_sample_interval;
        let mut k = 0u64;
        while (k as f64) * step < s.duration {
            sched.schedule(k as f64 * step, SimEvent::EnergySample)?;
            k += 1;
        }
        Ok(())
    }

    fn sample(&mut self, t: f64) {
        let (net, routing) = self.energy.totals();
        self.samples.push(EnergySample {
            t,
            network_j: pj_to_joules(net),
            routing_j: pj_to_joules(routing),
        });
    }

    fn alive(&self, n: NodeId) -> bool {
        self.energy.is_alive(n)
    }

    fn handle(&mut self, sched: &mut Scheduler<SimEvent>, t: f64, ev: SimEvent) -> Result<(), SimError> {
        match ev {
            SimEvent::Rx { to, frame } => self.on_rx(sched, t, to, &frame),
            SimEvent::Timer { node, timer } => {
                if !self.alive(node) {
                    return Ok(());
                }
                let mut out = Outbox::default();
                self.agents[node.index()].timer(t, timer, &mut out);
                self.execute(sched, t, node, out)
            }
            SimEvent::Liveness { node, neighbor } => {
                if !self.alive(node) {
                    return Ok(());
                }
                let agent = &mut self.agents[node.index()];
                let Some(deadline) = agent.neighbors().deadline(neighbor) else {
                    return Ok(());
                };
                if deadline > t {
                    sched.schedule(deadline, SimEvent::Liveness { node, neighbor })?;
                    return Ok(());
                }
                agent.neighbors_mut().forget(neighbor);
                self.trace.line(t, Some(node), "neighbor_lost", "-", format_args!("{neighbor}"));
                let mut out = Outbox::default();
                self.agents[node.index()].neighbor_lost(t, neighbor, &mut out);
                self.execute(sched, t, node, out)
            }
            SimEvent::Generate { flow, seq } => self.on_generate(sched, t, flow, seq),
            SimEvent::HelloTick => {
                for i in 0..self.agents.len() {
                    let node = NodeId(i as u32);
                    if self.alive(node) && self.agents[i].wants_hello(t) {
                        let hello = Packet::Hello(Hello {
                            sender: node,
                            sender_seq: self.agents[i].seq(),
                        });
                        self.transmit(sched, t, node, None, hello)?;
                    }
                }
                let next = t + self.setup.params.hello_interval;
                if next <= self.setup.duration {
                    sched.schedule(next, SimEvent::HelloTick)?;
                }
                Ok(())
            }
            SimEvent::EnergySample => {
                self.sample(t);
                Ok(())
            }
            SimEvent::Kill(node) => {
                if self.alive(node) {
                    self.energy.kill(node, t);
                    self.on_death(t, node)?;
                }
                Ok(())
            }
            SimEvent::Waypoint { node, leg } => {
                if let Topology::Geometric(s) = &self.setup.topology {
                    let l = &s[node.index()].legs[leg];
                    self.trace.line(
                        t,
                        Some(node),
                        "waypoint",
                        "-",
                        format_args!("{:.6} {:.6} {:.6} {:.6}", l.end_pos.x, l.end_pos.y, l.speed, l.pause_after),
                    );
                }
                Ok(())
            }
            SimEvent::Link { a, b, up } => {
                let ev = if up { "link_up" } else { "link_down" };
                self.trace.line(t, None, ev, "-", format_args!("{a} {b}"));
                Ok(())
            }
        }
    }

    fn on_generate(&mut self, sched: &mut Scheduler<SimEvent>, t: f64, flow: usize, seq: u32) -> Result<(), SimError> {
        let f = self.setup.flows[flow].clone();
        let next = seq as usize + 1;
        if next < f.packet_count() {
            let at = f.start + next as f64 * f.interval;
            if at <= self.setup.duration {
                sched.schedule(at, SimEvent::Generate { flow, seq: seq + 1 })?;
            }
        }
        let id = DataId { flow: flow as u32, seq };
        self.ledger.record(PacketEvent::Sent { id, payload: f.payload, at: t })?;
        self.trace
            .line(t, Some(f.src), "gen", &id.to_string(), format_args!("dest={} bytes={}", f.dest, f.payload));
        let data = Data {
            id,
            origin: f.src,
            dest: f.dest,
            payload_size: f.payload,
            sent_at: t,
            source_route: Vec::new(),
            visited: vec![f.src],
        };
        if !self.alive(f.src) {
            return self.drop_data(t, f.src, data, DropCause::DeadNode);
        }
        let mut out = Outbox::default();
        self.agents[f.src.index()].originate(t, data, &mut out);
        self.execute(sched, t, f.src, out)
    }

    fn on_rx(&mut self, sched: &mut Scheduler<SimEvent>, t: f64, to: NodeId, frame: &Frame) -> Result<(), SimError> {
        let packet = &frame.packet;
        if !self.alive(to) {
            if let Packet::Data(d) = packet {
                return self.drop_data(t, to, d.clone(), DropCause::DeadNode);
            }
            return Ok(());
        }
        let duration = self.setup.radio.tx_duration(packet.wire_size());
        let label = packet.label();
        self.trace
            .line(t, Some(to), "rx", &label, format_args!("{} from={}", packet.kind(), frame.sender));
        if let Debit::Died = self.energy.debit(to, Direction::Rx, duration, packet.class(), t) {
            // the battery gave out while receiving: the frame is not processed
            self.on_death(t, to)?;
            if let Packet::Data(d) = packet {
                return self.drop_data(t, to, d.clone(), DropCause::DeadNode);
            }
            return Ok(());
        }
        let window = self.setup.params.liveness_window();
        if self.agents[to.index()].neighbors_mut().heard(frame.sender, t + window) {
            sched.schedule(t + window, SimEvent::Liveness { node: to, neighbor: frame.sender })?;
        }
        let mut out = Outbox::default();
        self.agents[to.index()].receive(t, frame, &mut out);
        self.execute(sched, t, to, out)
    }

    fn execute(&mut self, sched: &mut Scheduler<SimEvent>, t: f64, node: NodeId, mut out: Outbox) -> Result<(), SimError> {
        for a in out.take() {
            match a {
                Action::Broadcast(p) => self.transmit(sched, t, node, None, p)?,
                Action::Unicast { to, packet } => self.transmit(sched, t, node, Some(to), packet)?,
                Action::SetTimer { at, timer } => {
                    sched.schedule(at.max(t), SimEvent::Timer { node, timer })?;
                }
                Action::Deliver(d) => self.deliver(t, node, d)?,
                Action::Drop { data, cause } => self.drop_data(t, node, data, cause)?,
                Action::Note(n) => self.trace.line(t, Some(node), n.event, &n.id, format_args!("{}", n.detail)),
                Action::Fault(msg) => return Err(SimError::Fault { time: t, node, msg }),
            }
        }
        Ok(())
    }

    fn transmit(
        &mut self,
        sched: &mut Scheduler<SimEvent>,
        t: f64,
        sender: NodeId,
        to: Option<NodeId>,
        packet: Packet,
    ) -> Result<(), SimError> {
        if !self.alive(sender) {
            if let Packet::Data(d) = packet {
                return self.drop_data(t, sender, d, DropCause::DeadNode);
            }
            return Ok(());
        }
        let bytes = packet.wire_size();
        let class = packet.class();
        let label = packet.label();
        let dest = to.map_or_else(|| "*".to_string(), |n| n.to_string());
        self.trace
            .line(t, Some(sender), "tx", &label, format_args!("{} {} to={}", packet.kind(), bytes, dest));
        self.ledger.record(match class {
            Class::Control => PacketEvent::ControlTx,
            Class::Data => PacketEvent::DataTx,
        })?;
        let died = matches!(
            self.energy.debit(sender, Direction::Tx, self.setup.radio.tx_duration(bytes), class, t),
            Debit::Died
        );
        let frame = Arc::new(Frame {
            sender,
            next_hop: to,
            packet,
        });
        let energy = &self.energy;
        let alive = |n: NodeId| energy.is_alive(n);
        match to {
            None => {
                for r in self.medium.broadcast(sender, bytes, t, alive, &mut self.channel) {
                    sched.schedule(
                        r.at,
                        SimEvent::Rx {
                            to: r.receiver,
                            frame: Arc::clone(&frame),
                        },
                    )?;
                }
            }
            Some(to) => match self.medium.unicast(sender, to, bytes, t, alive, &mut self.channel) {
                Ok(r) => {
                    sched.schedule(r.at, SimEvent::Rx { to, frame: Arc::clone(&frame) })?;
                }
                Err(miss) => {
                    let (cause, ev) = match miss {
                        Miss::Unreachable => (DropCause::LinkBreak, "unreachable"),
                        Miss::Lost => (DropCause::ChannelLoss, "lost"),
                    };
                    match &frame.packet {
                        Packet::Data(d) => self.drop_data(t, sender, d.clone(), cause)?,
                        p => self.trace.line(t, Some(sender), ev, &label, format_args!("{} to={to}", p.kind())),
                    }
                }
            },
        }
        if died {
            self.on_death(t, sender)?;
        }
        Ok(())
    }

    fn deliver(&mut self, t: f64, node: NodeId, d: Data) -> Result<(), SimError> {
        let fault = |msg: String| Err(SimError::Fault { time: t, node, msg });
        if d.dest != node {
            return fault(format!("{} delivered at {node} but addressed to {}", d.id, d.dest));
        }
        let mut sorted = d.visited.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != d.visited.len() {
            return fault(format!("{} revisited a node: {:?}", d.id, d.visited));
        }
        if self.setup.protocol == ProtocolKind::Maodv && d.visited != d.source_route {
            return fault(format!("{} strayed from its source route", d.id));
        }
        let hops = d.visited.len().saturating_sub(1) as u32;
        self.ledger.record(PacketEvent::Delivered { id: d.id, at: t, hops })?;
        self.trace.line(
            t,
            Some(node),
            "recv",
            &d.id.to_string(),
            format_args!("delay={:.9} hops={hops}", t - d.sent_at),
        );
        self.delivered_paths.push(DeliveredPath {
            id: d.id,
            visited: d.visited,
            source_route: d.source_route,
        });
        Ok(())
    }

    fn drop_data(&mut self, t: f64, node: NodeId, d: Data, cause: DropCause) -> Result<(), SimError> {
        self.ledger.record(PacketEvent::Dropped { id: d.id, cause })?;
        self.trace.line(t, Some(node), "drop", &d.id.to_string(), format_args!("{cause}"));
        Ok(())
    }

    fn on_death(&mut self, t: f64, node: NodeId) -> Result<(), SimError> {
        self.trace.line(t, Some(node), "death", "-", format_args!(""));
        for d in self.agents[node.index()].drain_buffers() {
            self.drop_data(t, node, d, DropCause::DeadNode)?;
        }
        Ok(())
    }
}
