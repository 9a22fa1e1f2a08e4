use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::packet::{fresher, RreqId, SeqNo};
use crate::NodeId;

#[derive(Debug, Clone, PartialEq)]
pub struct RoutingTableEntry {
    pub dest: NodeId,
    pub next_hop: NodeId,
    pub hop_count: u32,
    pub dest_seq: Option<SeqNo>,
    /// Upstream neighbors that forward through this entry (precursors).
    pub active_neighbors: BTreeSet<NodeId>,
    pub expires_at: f64,
    /// Cleared by a link break or RERR; the sequence number is kept.
    pub valid: bool,
    /// Carried data since it was installed; such entries keep Hellos going.
    pub in_use: bool,
}

impl RoutingTableEntry {
    pub fn usable(&self, now: f64) -> bool {
        self.valid && now < self.expires_at
    }
}

/// Per-node forwarding state keyed by destination.
#[derive(Debug, Clone, Default)]
pub struct RoutingTable {
    entries: BTreeMap<NodeId, RoutingTableEntry>,
}

impl RoutingTable {
    pub fn get(&self, dest: NodeId) -> Option<&RoutingTableEntry> {
        self.entries.get(&dest)
    }

    pub fn get_mut(&mut self, dest: NodeId) -> Option<&mut RoutingTableEntry> {
        self.entries.get_mut(&dest)
    }

    /// Entry only if it may be used to forward at `now`.
    pub fn lookup(&self, dest: NodeId, now: f64) -> Option<&RoutingTableEntry> {
        self.entries.get(&dest).filter(|e| e.usable(now))
    }

    pub fn known_seq(&self, dest: NodeId) -> Option<SeqNo> {
        self.entries.get(&dest).and_then(|e| e.dest_seq)
    }

    /// Installs or updates a route using the usual freshness rules: take the
    /// offer when its sequence number is newer, or equal with fewer hops, or
    /// when the current entry is unusable or has no sequence number.
    /// Returns whether the table changed.
    pub fn offer(
        &mut self,
        dest: NodeId,
        next_hop: NodeId,
        hop_count: u32,
        seq: Option<SeqNo>,
        expires_at: f64,
        now: f64,
    ) -> bool {
        match self.entries.get_mut(&dest) {
            None => {
                self.entries.insert(
                    dest,
                    RoutingTableEntry {
                        dest,
                        next_hop,
                        hop_count,
                        dest_seq: seq,
                        active_neighbors: BTreeSet::new(),
                        expires_at,
                        valid: true,
                        in_use: false,
                    },
                );
                true
            }
            Some(e) => {
                let take = match (seq, e.dest_seq) {
                    (_, None) => true,
                    (None, Some(_)) => !e.usable(now),
                    (Some(new), Some(old)) => {
                        fresher(new, old) || (new == old && (!e.usable(now) || hop_count < e.hop_count))
                    }
                };
                if take {
                    if e.next_hop != next_hop {
                        e.active_neighbors.clear();
                        e.in_use = false;
                    }
                    e.next_hop = next_hop;
                    e.hop_count = hop_count;
                    if seq.is_some() {
                        e.dest_seq = seq;
                    }
                    e.valid = true;
                    e.expires_at = e.expires_at.max(expires_at);
                    if !e.usable(now) {
                        e.expires_at = expires_at;
                    }
                    true
                } else if e.next_hop == next_hop && e.hop_count == hop_count && e.valid {
                    e.expires_at = e.expires_at.max(expires_at);
                    false
                } else {
                    false
                }
            }
        }
    }

    pub fn refresh(&mut self, dest: NodeId, until: f64) {
        if let Some(e) = self.entries.get_mut(&dest) {
            if e.valid {
                e.expires_at = e.expires_at.max(until);
            }
        }
    }

    /// Invalidates every usable entry whose next hop is `via`; returns them.
    pub fn invalidate_via(&mut self, via: NodeId, now: f64) -> Vec<RoutingTableEntry> {
        let mut out = Vec::new();
        for e in self.entries.values_mut() {
            if e.next_hop == via && e.usable(now) {
                e.valid = false;
                out.push(e.clone());
            }
        }
        out
    }

    pub fn invalidate(&mut self, dest: NodeId) -> Option<RoutingTableEntry> {
        let e = self.entries.get_mut(&dest)?;
        if !e.valid {
            return None;
        }
        e.valid = false;
        Some(e.clone())
    }

    /// True when some usable entry has carried data, i.e. the node sits on
    /// an active route.
    pub fn has_active_route(&self, now: f64) -> bool {
        self.entries.values().any(|e| e.in_use && e.usable(now))
    }

    pub fn is_next_hop_of_active(&self, neighbor: NodeId, now: f64) -> bool {
        self.entries
            .values()
            .any(|e| e.next_hop == neighbor && e.in_use && e.usable(now))
    }

    pub fn entries(&self) -> impl Iterator<Item = &RoutingTableEntry> {
        self.entries.values()
    }
}

/// Liveness deadlines of one-hop neighbors.
#[derive(Debug, Clone, Default)]
pub struct NeighborTable {
    deadline: BTreeMap<NodeId, f64>,
}

impl NeighborTable {
    /// Pushes the neighbor's deadline to `until`; returns true if the
    /// neighbor was not tracked before.
    pub fn heard(&mut self, neighbor: NodeId, until: f64) -> bool {
        match self.deadline.get_mut(&neighbor) {
            Some(d) => {
                *d = d.max(until);
                false
            }
            None => {
                self.deadline.insert(neighbor, until);
                true
            }
        }
    }

    pub fn deadline(&self, neighbor: NodeId) -> Option<f64> {
        self.deadline.get(&neighbor).copied()
    }

    pub fn is_fresh(&self, neighbor: NodeId, now: f64) -> bool {
        self.deadline.get(&neighbor).is_some_and(|&d| now < d)
    }

    pub fn forget(&mut self, neighbor: NodeId) {
        self.deadline.remove(&neighbor);
    }
}

/// Recently seen discovery ids.
#[derive(Debug, Clone, Default)]
pub struct RreqCache {
    seen: HashMap<RreqId, f64>,
}

impl RreqCache {
    /// Records `id` and returns true if it had not been seen in its window.
    pub fn first_sighting(&mut self, id: RreqId, now: f64, ttl: f64) -> bool {
        if self.seen.len() > 4096 {
            self.seen.retain(|_, &mut exp| exp > now);
        }
        match self.seen.get(&id) {
            Some(&exp) if exp > now => false,
            _ => {
                self.seen.insert(id, now + ttl);
                true
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresher_offer_wins() {
        let mut t = RoutingTable::default();
        assert!(t.offer(NodeId(9), NodeId(1), 3, Some(4), 10.0, 0.0));
        assert!(!t.offer(NodeId(9), NodeId(2), 2, Some(3), 10.0, 0.0));
        assert!(t.offer(NodeId(9), NodeId(2), 2, Some(4), 10.0, 0.0));
        assert_eq!(t.get(NodeId(9)).unwrap().next_hop, NodeId(2));
        assert!(t.offer(NodeId(9), NodeId(3), 5, Some(5), 10.0, 0.0));
        assert_eq!(t.get(NodeId(9)).unwrap().hop_count, 5);
    }

    #[test]
    fn expired_entries_are_not_usable() {
        let mut t = RoutingTable::default();
        t.offer(NodeId(2), NodeId(1), 1, Some(1), 5.0, 0.0);
        assert!(t.lookup(NodeId(2), 4.9).is_some());
        assert!(t.lookup(NodeId(2), 5.0).is_none());
        // stale entry can be replaced even by an equal sequence number
        assert!(t.offer(NodeId(2), NodeId(3), 4, Some(1), 12.0, 6.0));
        assert_eq!(t.lookup(NodeId(2), 6.0).unwrap().next_hop, NodeId(3));
    }

    #[test]
    fn invalidate_by_next_hop_keeps_seq() {
        let mut t = RoutingTable::default();
        t.offer(NodeId(5), NodeId(1), 2, Some(7), 10.0, 0.0);
        t.offer(NodeId(6), NodeId(2), 2, Some(7), 10.0, 0.0);
        let gone = t.invalidate_via(NodeId(1), 1.0);
        assert_eq!(gone.len(), 1);
        assert!(t.lookup(NodeId(5), 1.0).is_none());
        assert_eq!(t.known_seq(NodeId(5)), Some(7));
        assert!(t.lookup(NodeId(6), 1.0).is_some());
    }

    #[test]
    fn hello_deadline() {
        let mut n = NeighborTable::default();
        assert!(n.heard(NodeId(1), 12.0));
        assert!(n.is_fresh(NodeId(1), 11.99));
        assert!(!n.is_fresh(NodeId(1), 12.0));
        assert!(!n.heard(NodeId(1), 11.0));
        assert_eq!(n.deadline(NodeId(1)), Some(12.0));
    }

    #[test]
    fn rreq_dedup_window() {
        let mut c = RreqCache::default();
        let id = RreqId { origin: NodeId(0), counter: 1 };
        assert!(c.first_sighting(id, 0.0, 6.0));
        assert!(!c.first_sighting(id, 5.0, 6.0));
        assert!(c.first_sighting(id, 6.5, 6.0));
    }
}
