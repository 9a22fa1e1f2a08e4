//! Deterministic discrete-event simulator for mobile ad hoc networks,
//! running single-path AODV and multipath M-AODV over the same mobility,
//! radio, traffic and energy models so the two can be compared run for run.

use std::fmt;

pub mod aodv;
pub mod energy;
pub mod engine;
pub mod maodv;
pub mod metrics;
pub mod mobility;
pub mod proto;
pub mod radio;
pub mod scenario;
pub mod sim;
pub mod trace;
pub mod traffic;

/// Node address. Nodes are numbered densely from zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
