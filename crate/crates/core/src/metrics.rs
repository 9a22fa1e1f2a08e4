//! Per-run packet ledger and the derived QoS measurements.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::proto::{DataId, DropCause};

#[derive(Debug, Error, PartialEq)]
pub enum LedgerError {
    #[error("packet {0} was sent twice")]
    DuplicateSend(DataId),
    #[error("packet {0} was never sent")]
    Unknown(DataId),
    #[error("packet {0} delivered twice")]
    DuplicateDelivery(DataId),
    #[error("packet {id} already finished as {was}, now {now}")]
    AlreadyFinished { id: DataId, was: String, now: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    Delivered { at: f64, hops: u32 },
    Dropped(DropCause),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataRecord {
    pub payload: usize,
    pub sent_at: f64,
    pub outcome: Option<Outcome>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PacketEvent {
    Sent { id: DataId, payload: usize, at: f64 },
    Delivered { id: DataId, at: f64, hops: u32 },
    Dropped { id: DataId, cause: DropCause },
    /// One hop-wise transmission of a control frame.
    ControlTx,
    DataTx,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PacketLedger {
    pub records: BTreeMap<DataId, DataRecord>,
    pub control_transmissions: u64,
    pub data_transmissions: u64,
}

impl PacketLedger {
    pub fn record(&mut self, ev: PacketEvent) -> Result<(), LedgerError> {
        match ev {
            PacketEvent::Sent { id, payload, at } => {
                if self.records.contains_key(&id) {
                    return Err(LedgerError::DuplicateSend(id));
                }
                self.records.insert(
                    id,
                    DataRecord {
                        payload,
                        sent_at: at,
                        outcome: None,
                    },
                );
            }
            PacketEvent::Delivered { id, at, hops } => self.finish(id, Outcome::Delivered { at, hops })?,
            PacketEvent::Dropped { id, cause } => self.finish(id, Outcome::Dropped(cause))?,
            PacketEvent::ControlTx => self.control_transmissions += 1,
            PacketEvent::DataTx => self.data_transmissions += 1,
        }
        Ok(())
    }

    fn finish(&mut self, id: DataId, outcome: Outcome) -> Result<(), LedgerError> {
        let r = self.records.get_mut(&id).ok_or(LedgerError::Unknown(id))?;
        match (r.outcome, outcome) {
            (None, _) => {
                r.outcome = Some(outcome);
                Ok(())
            }
            (Some(Outcome::Delivered { .. }), Outcome::Delivered { .. }) => Err(LedgerError::DuplicateDelivery(id)),
            (Some(was), now) => Err(LedgerError::AlreadyFinished {
                id,
                was: describe(was),
                now: describe(now),
            }),
        }
    }

    pub fn sent(&self) -> u64 {
        self.records.len() as u64
    }

    pub fn delivered(&self) -> impl Iterator<Item = (&DataId, &DataRecord, f64, u32)> {
        self.records.iter().filter_map(|(id, r)| match r.outcome {
            Some(Outcome::Delivered { at, hops }) => Some((id, r, at, hops)),
            _ => None,
        })
    }

    pub fn drops(&self) -> BTreeMap<DropCause, u64> {
        let mut m: BTreeMap<DropCause, u64> = DropCause::ALL.iter().map(|&c| (c, 0)).collect();
        for r in self.records.values() {
            if let Some(Outcome::Dropped(c)) = r.outcome {
                *m.entry(c).or_default() += 1;
            }
        }
        m
    }

    pub fn in_flight(&self) -> u64 {
        self.records.values().filter(|r| r.outcome.is_none()).count() as u64
    }
}

fn describe(o: Outcome) -> String {
    match o {
        Outcome::Delivered { .. } => "delivered".into(),
        Outcome::Dropped(c) => format!("dropped:{c}"),
    }
}

/// Network and routing (control) energy consumed so far, in joules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergySample {
    pub t: f64,
    pub network_j: f64,
    pub routing_j: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub duration: f64,
    pub sent: u64,
    pub delivered: u64,
    pub in_flight: u64,
    pub drop_breakdown: BTreeMap<DropCause, u64>,
    pub control_transmissions: u64,
    pub data_transmissions: u64,
    /// Delivered payload, kb/s over the whole run.
    pub throughput_kbps: f64,
    /// `None` when nothing was delivered.
    pub avg_delay: Option<f64>,
    pub pdr: f64,
    pub loss_ratio: f64,
    /// Control transmissions per delivered packet; `None` when nothing was delivered.
    pub nrl: Option<f64>,
    pub energy_series: Vec<EnergySample>,
    pub network_energy_j: f64,
    pub routing_energy_j: f64,
}

impl MetricsReport {
    pub fn finalize(ledger: &PacketLedger, duration: f64, energy_series: Vec<EnergySample>) -> Self {
        let sent = ledger.sent();
        let mut delivered = 0u64;
        let mut bytes = 0u64;
        let mut delay_sum = 0.0;
        for (_, r, at, _) in ledger.delivered() {
            delivered += 1;
            bytes += r.payload as u64;
            delay_sum += at - r.sent_at;
        }
        let in_flight = ledger.in_flight();
        let drop_breakdown = ledger.drops();
        let ratio = |n: u64| if sent == 0 { 0.0 } else { n as f64 / sent as f64 };
        let (network_energy_j, routing_energy_j) =
            energy_series.last().map_or((0.0, 0.0), |s| (s.network_j, s.routing_j));
        MetricsReport {
            duration,
            sent,
            delivered,
            in_flight,
            control_transmissions: ledger.control_transmissions,
            data_transmissions: ledger.data_transmissions,
            throughput_kbps: bytes as f64 * 8.0 / duration / 1000.0,
            avg_delay: (delivered > 0).then(|| delay_sum / delivered as f64),
            pdr: ratio(delivered),
            loss_ratio: ratio(sent - delivered - in_flight),
            nrl: (delivered > 0).then(|| ledger.control_transmissions as f64 / delivered as f64),
            drop_breakdown,
            energy_series,
            network_energy_j,
            routing_energy_j,
        }
    }

    pub fn dropped(&self) -> u64 {
        self.drop_breakdown.values().sum()
    }

    /// sent = delivered + dropped + in flight.
    pub fn conserves(&self) -> bool {
        self.sent == self.delivered + self.dropped() + self.in_flight
    }

    /// Column names matching [`MetricsReport::csv_values`].
    pub fn csv_fields() -> Vec<String> {
        let mut v: Vec<String> = [
            "sent",
            "delivered",
            "in_flight",
            "throughput_kbps",
            "avg_delay_s",
            "pdr",
            "loss_ratio",
            "nrl",
            "control_tx",
            "data_tx",
            "network_energy_j",
            "routing_energy_j",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        v.extend(DropCause::ALL.iter().map(|c| format!("drop_{c}")));
        v
    }

    pub fn csv_values(&self) -> Vec<String> {
        let opt = |o: Option<f64>| o.map_or_else(|| "NA".to_string(), fmt_f);
        let mut v = vec![
            self.sent.to_string(),
            self.delivered.to_string(),
            self.in_flight.to_string(),
            fmt_f(self.throughput_kbps),
            opt(self.avg_delay),
            fmt_f(self.pdr),
            fmt_f(self.loss_ratio),
            opt(self.nrl),
            self.control_transmissions.to_string(),
            self.data_transmissions.to_string(),
            fmt_f(self.network_energy_j),
            fmt_f(self.routing_energy_j),
        ];
        v.extend(DropCause::ALL.iter().map(|c| self.drop_breakdown.get(c).copied().unwrap_or(0).to_string()));
        v
    }
}

/// Shortest exact round-trip formatting for CSV cells.
pub fn fmt_f(x: f64) -> String {
    format!("{x}")
}
