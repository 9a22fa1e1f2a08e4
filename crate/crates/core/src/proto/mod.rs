//! Protocol substrate shared by AODV and M-AODV: packet formats, routing
//! table, neighbor liveness, and the interface through which a routing agent
//! talks to the simulator.

mod packet;
mod table;

use std::collections::VecDeque;
use std::fmt;

use thiserror::Error;

pub use packet::{
    fresher, Data, DataId, Frame, Hello, Packet, Rerr, Rrep, Rreq, RreqId, SeqNo, ADDR, DATA_HEADER, HELLO_SIZE,
    RERR_BASE, RREP_BASE, RREQ_BASE,
};
pub use table::{NeighborTable, RoutingTable, RoutingTableEntry, RreqCache};

use crate::NodeId;

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("{0} must be positive")]
    NotPositive(&'static str),
    #[error("need 0 < s0 < n0, got n0={n0} s0={s0}")]
    Threshold { n0: u32, s0: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolParams {
    pub rreq_retries: u32,
    pub hello_interval: f64,
    pub allowed_hello_loss: u32,
    pub route_lifetime: f64,
    pub rreq_id_cache_ttl: f64,
    /// How long an originator waits for a reply before retrying.
    pub rreq_timeout: f64,
    /// Per-destination buffer at a node waiting for a route.
    pub queue_capacity: usize,
    /// M-AODV: target number of disjoint routes.
    pub n0: u32,
    /// M-AODV: replenish when valid routes drop to this many.
    pub s0: u32,
    /// M-AODV: extra hops over a node's best seen copy still forwarded.
    pub rreq_slack: u32,
    /// M-AODV: most copies of one discovery a node forwards.
    pub rreq_copy_cap: u32,
    /// M-AODV: diameter guess (hops) sizing the destination's collect window.
    pub net_diameter: u32,
    /// M-AODV: use degree sums when ordering equal-length candidates.
    pub degree_tiebreak: bool,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams {
            rreq_retries: 2,
            hello_interval: 1.0,
            allowed_hello_loss: 2,
            route_lifetime: 10.0,
            rreq_id_cache_ttl: 6.0,
            rreq_timeout: 1.0,
            queue_capacity: 50,
            n0: 3,
            s0: 1,
            rreq_slack: 1,
            rreq_copy_cap: 8,
            net_diameter: 10,
            degree_tiebreak: true,
        }
    }
}

impl ProtocolParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        let pos = |v: f64, name| if v > 0.0 && v.is_finite() { Ok(()) } else { Err(ParamError::NotPositive(name)) };
        if self.rreq_retries == 0 {
            return Err(ParamError::NotPositive("rreq_retries"));
        }
        pos(self.hello_interval, "hello_interval")?;
        if self.allowed_hello_loss == 0 {
            return Err(ParamError::NotPositive("allowed_hello_loss"));
        }
        pos(self.route_lifetime, "route_lifetime")?;
        pos(self.rreq_id_cache_ttl, "rreq_id_cache_ttl")?;
        pos(self.rreq_timeout, "rreq_timeout")?;
        if self.queue_capacity == 0 {
            return Err(ParamError::NotPositive("queue_capacity"));
        }
        if self.rreq_copy_cap == 0 {
            return Err(ParamError::NotPositive("rreq_copy_cap"));
        }
        if self.net_diameter == 0 {
            return Err(ParamError::NotPositive("net_diameter"));
        }
        if !(self.s0 > 0 && self.s0 < self.n0) {
            return Err(ParamError::Threshold { n0: self.n0, s0: self.s0 });
        }
        Ok(())
    }

    /// Silence after which a neighbor is declared lost.
    pub fn liveness_window(&self) -> f64 {
        self.allowed_hello_loss as f64 * self.hello_interval
    }
}

/// Why a data packet never reached its destination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DropCause {
    /// Discovery exhausted, repair failed, or no usable entry.
    NoRoute,
    QueueOverflow,
    /// Sent to a next hop that was no longer reachable.
    LinkBreak,
    /// Sender or holder ran out of energy.
    DeadNode,
    /// Random per-frame channel loss.
    ChannelLoss,
    /// Would have gone back to a node it already visited.
    Loop,
}

impl DropCause {
    pub const ALL: [DropCause; 6] = [
        DropCause::NoRoute,
        DropCause::QueueOverflow,
        DropCause::LinkBreak,
        DropCause::DeadNode,
        DropCause::ChannelLoss,
        DropCause::Loop,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DropCause::NoRoute => "no_route",
            DropCause::QueueOverflow => "queue_overflow",
            DropCause::LinkBreak => "link_break",
            DropCause::DeadNode => "dead_node",
            DropCause::ChannelLoss => "channel_loss",
            DropCause::Loop => "loop",
        }
    }
}

impl fmt::Display for DropCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Timer {
    Hello,
    Liveness(NodeId),
    Discovery { dest: NodeId, token: u32 },
    Repair { dest: NodeId, token: u32 },
    Collect(RreqId),
}

/// A protocol state transition worth a trace line.
#[derive(Debug, Clone, PartialEq)]
pub struct Note {
    pub event: &'static str,
    pub id: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Broadcast(Packet),
    Unicast { to: NodeId, packet: Packet },
    SetTimer { at: f64, timer: Timer },
    Deliver(Data),
    Drop { data: Data, cause: DropCause },
    Note(Note),
    /// Internal state the agent cannot make sense of; aborts the run.
    Fault(String),
}

/// Collects what a handler wants done.
#[derive(Debug, Default)]
pub struct Outbox {
    pub actions: Vec<Action>,
}

impl Outbox {
    pub fn broadcast(&mut self, p: Packet) {
        self.actions.push(Action::Broadcast(p));
    }

    pub fn unicast(&mut self, to: NodeId, p: Packet) {
        self.actions.push(Action::Unicast { to, packet: p });
    }

    pub fn timer(&mut self, at: f64, timer: Timer) {
        self.actions.push(Action::SetTimer { at, timer });
    }

    pub fn deliver(&mut self, d: Data) {
        self.actions.push(Action::Deliver(d));
    }

    pub fn drop_data(&mut self, d: Data, cause: DropCause) {
        self.actions.push(Action::Drop { data: d, cause });
    }

    pub fn note(&mut self, event: &'static str, id: impl Into<String>, detail: impl Into<String>) {
        self.actions.push(Action::Note(Note {
            event,
            id: id.into(),
            detail: detail.into(),
        }));
    }

    pub fn fault(&mut self, msg: impl Into<String>) {
        self.actions.push(Action::Fault(msg.into()));
    }

    pub fn take(&mut self) -> Vec<Action> {
        std::mem::take(&mut self.actions)
    }

    pub fn count_notes(&self, event: &str) -> usize {
        self.actions
            .iter()
            .filter(|a| matches!(a, Action::Note(n) if n.event == event))
            .count()
    }
}

/// A node's routing logic. The simulator feeds it events and executes the
/// actions it leaves in the outbox.
pub trait RoutingAgent: Send {
    fn id(&self) -> NodeId;
    /// Own sequence number, carried in Hellos.
    fn seq(&self) -> SeqNo;
    fn neighbors(&self) -> &NeighborTable;
    fn neighbors_mut(&mut self) -> &mut NeighborTable;
    /// A datagram generated locally by the application.
    fn originate(&mut self, now: f64, data: Data, out: &mut Outbox);
    /// A frame addressed to this node, or a broadcast it heard.
    fn receive(&mut self, now: f64, frame: &Frame, out: &mut Outbox);
    fn timer(&mut self, now: f64, timer: Timer, out: &mut Outbox);
    /// The neighbor's liveness deadline passed without news.
    fn neighbor_lost(&mut self, now: f64, neighbor: NodeId, out: &mut Outbox);
    /// Whether the node currently sits on a route that needs Hellos.
    fn wants_hello(&self, now: f64) -> bool;
    /// Drains packets still buffered (at end of run or on death).
    fn drain_buffers(&mut self) -> Vec<Data>;
    /// Count of local repairs started so far.
    fn repairs_started(&self) -> u64 {
        0
    }
}

/// Data waiting for a route to one destination, bounded.
#[derive(Debug, Clone, Default)]
pub struct DataQueue {
    items: VecDeque<Data>,
}

impl DataQueue {
    /// Returns the packet back if the queue is full.
    pub fn push(&mut self, d: Data, capacity: usize) -> Result<(), Data> {
        if self.items.len() >= capacity {
            return Err(d);
        }
        self.items.push_back(d);
        Ok(())
    }

    pub fn drain(&mut self) -> impl Iterator<Item = Data> + '_ {
        self.items.drain(..)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Route the next hop would close a loop: the packet has already been there.
pub fn revisits(data: &Data, next: NodeId) -> bool {
    data.visited.contains(&next)
}
