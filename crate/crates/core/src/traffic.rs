//! Constant-bit-rate datagram sources.

use rand::seq::index::sample;
use rand::Rng;
use thiserror::Error;

use crate::NodeId;

#[derive(Debug, Error, PartialEq)]
pub enum TrafficError {
    #[error("flow source and destination are both {0}")]
    SelfFlow(NodeId),
    #[error("flow {field} must be positive, got {value}")]
    NotPositive { field: &'static str, value: f64 },
    #[error("flow start {start} must be non-negative and finite")]
    BadStart { start: f64 },
    #[error("flow endpoint {node} is outside a {count}-node network")]
    UnknownNode { node: NodeId, count: usize },
    #[error("{want} flows requested but only {have} distinct ordered pairs exist")]
    TooManyFlows { want: usize, have: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSpec {
    pub src: NodeId,
    pub dest: NodeId,
    pub payload: usize,
    pub interval: f64,
    pub start: f64,
    pub stop: f64,
}

impl FlowSpec {
    pub fn validate(&self, node_count: usize) -> Result<(), TrafficError> {
        if self.src == self.dest {
            return Err(TrafficError::SelfFlow(self.src));
        }
        for node in [self.src, self.dest] {
            if node.index() >= node_count {
                return Err(TrafficError::UnknownNode { node, count: node_count });
            }
        }
        if self.payload == 0 {
            return Err(TrafficError::NotPositive { field: "payload", value: 0.0 });
        }
        if !(self.interval > 0.0 && self.interval.is_finite()) {
            return Err(TrafficError::NotPositive { field: "interval", value: self.interval });
        }
        if !(self.start >= 0.0 && self.start.is_finite()) {
            return Err(TrafficError::BadStart { start: self.start });
        }
        Ok(())
    }

    /// Number of packets the source emits: one at `start` and one every
    /// `interval` after it, the last one no later than `stop`.
    pub fn packet_count(&self) -> usize {
        if self.stop <= self.start {
            return 0;
        }
        // the epsilon keeps 119/0.25 from landing just under an integer
        ((self.stop - self.start) / self.interval + 1e-9).floor() as usize + 1
    }

    pub fn send_times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.packet_count()).map(move |k| self.start + k as f64 * self.interval)
    }

    /// Offered load in kb/s.
    pub fn offered_kbps(&self) -> f64 {
        self.payload as f64 * 8.0 / self.interval / 1000.0
    }
}

/// Parameters of the seeded flow-pair generator.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowGen {
    pub count: usize,
    pub payload: usize,
    pub interval: f64,
}

impl Default for FlowGen {
    fn default() -> Self {
        FlowGen {
            count: 5,
            payload: 512,
            interval: 0.25,
        }
    }
}

impl FlowGen {
    /// Draws `count` distinct ordered (src, dest) pairs. Each flow starts at
    /// a uniform time in [1, 2) s so sources do not fire in lockstep, and
    /// runs to the end of the simulation.
    pub fn generate<R: Rng>(&self, node_count: usize, duration: f64, rng: &mut R) -> Result<Vec<FlowSpec>, TrafficError> {
        let pairs = node_count * node_count.saturating_sub(1);
        if self.count > pairs {
            return Err(TrafficError::TooManyFlows { want: self.count, have: pairs });
        }
        let mut flows = Vec::with_capacity(self.count);
        for k in sample(rng, pairs, self.count).into_vec() {
            let src = k / (node_count - 1);
            let mut dest = k % (node_count - 1);
            if dest >= src {
                dest += 1;
            }
            flows.push(FlowSpec {
                src: NodeId(src as u32),
                dest: NodeId(dest as u32),
                payload: self.payload,
                interval: self.interval,
                start: 1.0 + rng.random::<f64>(),
                stop: duration,
            });
        }
        Ok(flows)
    }
}
