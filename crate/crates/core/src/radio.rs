//! Unit-disk broadcast medium.
//!
//! Reachability is decided once per frame at send time. There is no MAC:
//! transmissions never collide or queue. Besides the geometric disk model an
//! explicit link graph with scripted up/down changes is supported, which is
//! what the hand-built protocol scenarios use.

use std::collections::BTreeMap;

use rand::Rng;
use thiserror::Error;

use crate::mobility::{Point, Schedule};
use crate::NodeId;

#[derive(Debug, Error, PartialEq)]
pub enum RadioError {
    #[error("range must be positive, got {0}")]
    Range(f64),
    #[error("bandwidth must be positive, got {0}")]
    Bandwidth(f64),
    #[error("propagation delay must be >= 0, got {0}")]
    Propagation(f64),
    #[error("loss probability must lie in [0, 1], got {0}")]
    Loss(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadioParams {
    /// meters
    pub range: f64,
    /// bits per second
    pub bandwidth: f64,
    /// seconds per meter
    pub propagation_delay: f64,
    pub loss_prob: f64,
}

impl Default for RadioParams {
    fn default() -> Self {
        RadioParams {
            range: 250.0,
            bandwidth: 2e6,
            propagation_delay: 0.0,
            loss_prob: 0.0,
        }
    }
}

impl RadioParams {
    pub fn validate(&self) -> Result<(), RadioError> {
        if !(self.range > 0.0 && self.range.is_finite()) {
            return Err(RadioError::Range(self.range));
        }
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(RadioError::Bandwidth(self.bandwidth));
        }
        if !(self.propagation_delay >= 0.0 && self.propagation_delay.is_finite()) {
            return Err(RadioError::Propagation(self.propagation_delay));
        }
        if !(0.0..=1.0).contains(&self.loss_prob) {
            return Err(RadioError::Loss(self.loss_prob));
        }
        Ok(())
    }

    pub fn tx_duration(&self, bytes: usize) -> f64 {
        bytes as f64 * 8.0 / self.bandwidth
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkChange {
    pub at: f64,
    pub a: NodeId,
    pub b: NodeId,
    pub up: bool,
}

fn pair(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Who can hear whom, as a function of time.
#[derive(Debug, Clone)]
pub enum Topology {
    Geometric(Vec<Schedule>),
    Explicit(ExplicitLinks),
}

/// A static link graph edited by time-stamped up/down changes.
#[derive(Debug, Clone, Default)]
pub struct ExplicitLinks {
    node_count: usize,
    // per unordered pair: initial state, then changes in time order
    links: BTreeMap<(NodeId, NodeId), (bool, Vec<(f64, bool)>)>,
}

impl ExplicitLinks {
    pub fn new(node_count: usize) -> Self {
        ExplicitLinks {
            node_count,
            links: BTreeMap::new(),
        }
    }

    pub fn add_link(&mut self, a: NodeId, b: NodeId) {
        self.links.entry(pair(a, b)).or_insert((false, Vec::new())).0 = true;
    }

    pub fn add_change(&mut self, c: LinkChange) {
        let e = self.links.entry(pair(c.a, c.b)).or_insert((false, Vec::new()));
        let pos = e.1.partition_point(|(t, _)| *t <= c.at);
        e.1.insert(pos, (c.at, c.up));
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn is_up(&self, a: NodeId, b: NodeId, t: f64) -> bool {
        match self.links.get(&pair(a, b)) {
            None => false,
            Some((init, changes)) => {
                let idx = changes.partition_point(|(ct, _)| *ct <= t);
                if idx == 0 {
                    *init
                } else {
                    changes[idx - 1].1
                }
            }
        }
    }

    /// Every pair ever mentioned, with its initial state and changes.
    pub fn all_links(&self) -> impl Iterator<Item = (NodeId, NodeId, bool, &[(f64, bool)])> + '_ {
        self.links.iter().map(|(&(a, b), (init, ch))| (a, b, *init, ch.as_slice()))
    }

    pub fn change_times(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.links.values().flat_map(|(_, c)| c.iter().map(|x| x.0)).collect();
        v.sort_by(f64::total_cmp);
        v
    }
}

impl Topology {
    pub fn node_count(&self) -> usize {
        match self {
            Topology::Geometric(s) => s.len(),
            Topology::Explicit(e) => e.node_count(),
        }
    }

    pub fn position(&self, node: NodeId, t: f64) -> Option<Point> {
        match self {
            Topology::Geometric(s) => Some(s[node.index()].position_at(t)),
            Topology::Explicit(_) => None,
        }
    }

    /// Distance used for propagation delay; explicit links count as 0 m.
    fn distance(&self, a: NodeId, b: NodeId, t: f64) -> f64 {
        match self {
            Topology::Geometric(s) => s[a.index()].position_at(t).dist(s[b.index()].position_at(t)),
            Topology::Explicit(_) => 0.0,
        }
    }
}

/// A scheduled reception produced by a transmission.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reception {
    pub receiver: NodeId,
    pub at: f64,
}

/// Why a unicast frame did not arrive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Miss {
    /// Addressee out of range or dead at send time.
    Unreachable,
    /// Removed by the per-frame loss draw.
    Lost,
}

/// The shared channel. Liveness of nodes is supplied by the caller.
#[derive(Debug, Clone)]
pub struct Medium {
    pub params: RadioParams,
    pub topology: Topology,
}

impl Medium {
    pub fn new(params: RadioParams, topology: Topology) -> Self {
        Medium { params, topology }
    }

    pub fn node_count(&self) -> usize {
        self.topology.node_count()
    }

    pub fn in_range(&self, a: NodeId, b: NodeId, t: f64) -> bool {
        if a == b {
            return false;
        }
        match &self.topology {
            Topology::Geometric(_) => self.topology.distance(a, b, t) <= self.params.range,
            Topology::Explicit(links) => links.is_up(a, b, t),
        }
    }

    /// Alive nodes within range of `node` at time `t`, in id order.
    pub fn neighbors(&self, node: NodeId, t: f64, alive: impl Fn(NodeId) -> bool) -> Vec<NodeId> {
        match &self.topology {
            Topology::Geometric(s) => {
                let here = s[node.index()].position_at(t);
                s.iter()
                    .filter(|o| o.node != node && alive(o.node))
                    .filter(|o| here.dist(o.position_at(t)) <= self.params.range)
                    .map(|o| o.node)
                    .collect()
            }
            Topology::Explicit(links) => (0..links.node_count() as u32)
                .map(NodeId)
                .filter(|&o| o != node && alive(o) && links.is_up(node, o, t))
                .collect(),
        }
    }

    /// Reception of a frame addressed to `to` alone. Other nodes in range
    /// do not take part, so they draw no loss sample and pay no energy.
    pub fn unicast<R: Rng>(
        &self,
        sender: NodeId,
        to: NodeId,
        bytes: usize,
        t: f64,
        alive: impl Fn(NodeId) -> bool,
        rng: &mut R,
    ) -> Result<Reception, Miss> {
        if !alive(to) || !self.in_range(sender, to, t) {
            return Err(Miss::Unreachable);
        }
        if self.params.loss_prob > 0.0 && rng.random::<f64>() < self.params.loss_prob {
            return Err(Miss::Lost);
        }
        Ok(Reception {
            receiver: to,
            at: t + self.params.tx_duration(bytes) + self.params.propagation_delay * self.topology.distance(sender, to, t),
        })
    }

    /// Receptions of a `bytes`-long frame sent by `sender` at `t`. Each
    /// in-range alive node hears it once at `t + tx + propagation`, unless the
    /// per-frame loss draw removes it.
    pub fn broadcast<R: Rng>(
        &self,
        sender: NodeId,
        bytes: usize,
        t: f64,
        alive: impl Fn(NodeId) -> bool,
        rng: &mut R,
    ) -> Vec<Reception> {
        let tx = self.params.tx_duration(bytes);
        self.neighbors(sender, t, alive)
            .into_iter()
            .filter(|_| self.params.loss_prob == 0.0 || rng.random::<f64>() >= self.params.loss_prob)
            .map(|r| Reception {
                receiver: r,
                at: t + tx + self.params.propagation_delay * self.topology.distance(sender, r, t),
            })
            .collect()
    }
}
