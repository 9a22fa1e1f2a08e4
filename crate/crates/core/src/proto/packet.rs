use std::fmt;

use crate::energy::Class;
use crate::NodeId;

pub type SeqNo = u32;

/// Identifies one route discovery: the originator plus its local counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RreqId {
    pub origin: NodeId,
    pub counter: u32,
}

impl fmt::Display for RreqId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "q{}.{}", self.origin, self.counter)
    }
}

/// Identifies one application datagram: flow index plus per-flow sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DataId {
    pub flow: u32,
    pub seq: u32,
}

impl fmt::Display for DataId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "d{}.{}", self.flow, self.seq)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rreq {
    pub id: RreqId,
    pub dest: NodeId,
    pub origin_seq: SeqNo,
    pub dest_seq_known: Option<SeqNo>,
    pub hop_count: u32,
    /// Nodes traversed so far, origin first. Only carried by M-AODV.
    pub route_record: Vec<NodeId>,
    /// Set when an intermediate node floods to patch its own broken route.
    pub repair: bool,
    /// Intermediate nodes the discovery must steer around (M-AODV
    /// replenishment keeps new routes disjoint from the surviving ones).
    pub avoid: Vec<NodeId>,
    /// How many new disjoint routes the originator wants (M-AODV).
    pub want: u32,
}

impl Rreq {
    pub fn origin(&self) -> NodeId {
        self.id.origin
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rrep {
    /// Node that asked for the route.
    pub origin: NodeId,
    pub dest: NodeId,
    pub dest_seq: SeqNo,
    pub hop_count: u32,
    /// Every collected path, origin first (M-AODV); empty for AODV.
    pub path_set: Vec<Vec<NodeId>>,
    pub lifetime: f64,
    pub rreq: RreqId,
    pub want: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rerr {
    /// (upstream, downstream) of the link that failed.
    pub broken_link: (NodeId, NodeId),
    pub unreachable: Vec<(NodeId, SeqNo)>,
    /// M-AODV: the route prefix from the source to the upstream end.
    pub route_to_source: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hello {
    pub sender: NodeId,
    pub sender_seq: SeqNo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Data {
    pub id: DataId,
    pub origin: NodeId,
    pub dest: NodeId,
    pub payload_size: usize,
    pub sent_at: f64,
    /// Full route chosen by the source (M-AODV only).
    pub source_route: Vec<NodeId>,
    /// Nodes the packet has been at, in order. Bookkeeping, not on the wire.
    pub visited: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Packet {
    Rreq(Rreq),
    Rrep(Rrep),
    Rerr(Rerr),
    Hello(Hello),
    Data(Data),
}

pub const RREQ_BASE: usize = 24;
pub const RREP_BASE: usize = 20;
pub const RERR_BASE: usize = 12;
pub const HELLO_SIZE: usize = 20;
pub const DATA_HEADER: usize = 20;
pub const ADDR: usize = 4;

impl Packet {
    pub fn kind(&self) -> &'static str {
        match self {
            Packet::Rreq(_) => "RREQ",
            Packet::Rrep(_) => "RREP",
            Packet::Rerr(_) => "RERR",
            Packet::Hello(_) => "HELLO",
            Packet::Data(_) => "DATA",
        }
    }

    pub fn class(&self) -> Class {
        match self {
            Packet::Data(_) => Class::Data,
            _ => Class::Control,
        }
    }

    pub fn is_control(&self) -> bool {
        self.class() == Class::Control
    }

    /// Bytes on the air.
    pub fn wire_size(&self) -> usize {
        match self {
            Packet::Rreq(r) => RREQ_BASE + ADDR * (r.route_record.len() + r.avoid.len()),
            Packet::Rrep(r) => RREP_BASE + ADDR * r.path_set.iter().map(Vec::len).sum::<usize>(),
            Packet::Rerr(r) => RERR_BASE + 2 * ADDR * r.unreachable.len() + ADDR * r.route_to_source.len(),
            Packet::Hello(_) => HELLO_SIZE,
            Packet::Data(d) => DATA_HEADER + d.payload_size + ADDR * d.source_route.len(),
        }
    }

    /// Short identifier for trace lines.
    pub fn label(&self) -> String {
        match self {
            Packet::Rreq(r) => r.id.to_string(),
            Packet::Rrep(r) => format!("p{}.{}", r.rreq.origin, r.rreq.counter),
            Packet::Rerr(r) => format!("e{}-{}", r.broken_link.0, r.broken_link.1),
            Packet::Hello(h) => format!("h{}.{}", h.sender, h.sender_seq),
            Packet::Data(d) => d.id.to_string(),
        }
    }
}

/// `a` is strictly newer than `b` under 32-bit circular comparison.
pub fn fresher(a: SeqNo, b: SeqNo) -> bool {
    (a.wrapping_sub(b) as i32) > 0
}

/// A packet on the air, with link-layer addressing.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub sender: NodeId,
    /// `None` for broadcast.
    pub next_hop: Option<NodeId>,
    pub packet: Packet,
}

impl Frame {
    pub fn is_for(&self, node: NodeId) -> bool {
        self.next_hop.is_none_or(|n| n == node)
    }
}
