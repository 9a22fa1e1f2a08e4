//! Per-node energy ledger.
//!
//! Amounts are kept as integer picojoules so that the ledger identities
//! (initial = remaining + debits, control + data = tx + rx) hold exactly.

use thiserror::Error;

use crate::NodeId;

const PJ_PER_J: f64 = 1e12;

fn to_pj(joules: f64) -> u64 {
    (joules * PJ_PER_J).round().max(0.0) as u64
}

pub fn pj_to_joules(pj: u64) -> f64 {
    pj as f64 / PJ_PER_J
}

#[derive(Debug, Error, PartialEq)]
pub enum EnergyError {
    #[error("need p_tx > p_rx > 0, got p_tx={0} p_rx={1}")]
    Power(f64, f64),
    #[error("initial energy must be positive, got {0}")]
    Initial(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyParams {
    /// watts
    pub p_tx: f64,
    /// watts
    pub p_rx: f64,
    /// joules
    pub initial: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        EnergyParams {
            p_tx: 0.660,
            p_rx: 0.395,
            initial: 10.0,
        }
    }
}

impl EnergyParams {
    pub fn validate(&self) -> Result<(), EnergyError> {
        if !(self.p_rx > 0.0 && self.p_tx > self.p_rx && self.p_tx.is_finite()) {
            return Err(EnergyError::Power(self.p_tx, self.p_rx));
        }
        if !(self.initial > 0.0 && self.initial.is_finite()) {
            return Err(EnergyError::Initial(self.initial));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Tx,
    Rx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Class {
    Control,
    Data,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EnergyState {
    pub initial: u64,
    pub remaining: u64,
    pub consumed_tx: u64,
    pub consumed_rx: u64,
    pub consumed_control: u64,
    pub consumed_data: u64,
    pub alive: bool,
}

impl EnergyState {
    pub fn consumed(&self) -> u64 {
        self.consumed_tx + self.consumed_rx
    }

    pub fn remaining_joules(&self) -> f64 {
        pj_to_joules(self.remaining)
    }
}

/// Outcome of a single debit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Debit {
    /// Node still alive; joules remaining.
    Ok(f64),
    /// This debit exhausted the battery.
    Died,
    /// Node was already dead; nothing charged.
    AlreadyDead,
}

#[derive(Debug, Clone)]
pub struct EnergyLedger {
    params: EnergyParams,
    nodes: Vec<EnergyState>,
    deaths: Vec<(NodeId, f64)>,
}

impl EnergyLedger {
    pub fn new(params: EnergyParams, node_count: usize) -> Self {
        let init = to_pj(params.initial);
        let nodes = vec![
            EnergyState {
                initial: init,
                remaining: init,
                alive: true,
                ..Default::default()
            };
            node_count
        ];
        EnergyLedger {
            params,
            nodes,
            deaths: Vec::new(),
        }
    }

    pub fn params(&self) -> &EnergyParams {
        &self.params
    }

    pub fn state(&self, node: NodeId) -> &EnergyState {
        &self.nodes[node.index()]
    }

    pub fn states(&self) -> &[EnergyState] {
        &self.nodes
    }

    pub fn is_alive(&self, node: NodeId) -> bool {
        self.nodes[node.index()].alive
    }

    pub fn deaths(&self) -> &[(NodeId, f64)] {
        &self.deaths
    }

    /// Charges `power(direction) × duration`, clamped to what is left.
    pub fn debit(&mut self, node: NodeId, dir: Direction, duration: f64, class: Class, now: f64) -> Debit {
        let s = &mut self.nodes[node.index()];
        if !s.alive {
            return Debit::AlreadyDead;
        }
        let power = match dir {
            Direction::Tx => self.params.p_tx,
            Direction::Rx => self.params.p_rx,
        };
        let amount = to_pj(power * duration.max(0.0)).min(s.remaining);
        s.remaining -= amount;
        match dir {
            Direction::Tx => s.consumed_tx += amount,
            Direction::Rx => s.consumed_rx += amount,
        }
        match class {
            Class::Control => s.consumed_control += amount,
            Class::Data => s.consumed_data += amount,
        }
        if s.remaining == 0 {
            s.alive = false;
            self.deaths.push((node, now));
            Debit::Died
        } else {
            Debit::Ok(pj_to_joules(s.remaining))
        }
    }

    /// Forced depletion, for scripted failures. Charged as nothing.
    pub fn kill(&mut self, node: NodeId, now: f64) {
        let s = &mut self.nodes[node.index()];
        if s.alive {
            s.alive = false;
            self.deaths.push((node, now));
        }
    }

    /// (network consumed, routing consumed) in picojoules.
    pub fn totals(&self) -> (u64, u64) {
        self.nodes
            .iter()
            .fold((0, 0), |(n, r), s| (n + s.consumed(), r + s.consumed_control))
    }

    /// Checks the closure identities on every node.
    pub fn ledger_closes(&self) -> bool {
        self.nodes.iter().all(|s| {
            s.initial == s.remaining + s.consumed()
                && s.consumed_control + s.consumed_data == s.consumed_tx + s.consumed_rx
        })
    }
}
