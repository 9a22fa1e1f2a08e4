//! Single-path AODV: flooded RREQ, unicast RREP along the reverse path,
//! hop-by-hop table forwarding, local repair at intermediate nodes, and RERR
//! propagation to precursors.

use std::collections::{BTreeMap, BTreeSet};

use crate::proto::{
    fresher, revisits, Data, DataQueue, DropCause, Frame, NeighborTable, Outbox, Packet, ProtocolParams, Rerr, Rrep,
    Rreq, RreqCache, RreqId, RoutingAgent, RoutingTable, SeqNo, Timer,
};
use crate::NodeId;

/// A discovery the node launched as a traffic source.
#[derive(Debug, Clone)]
pub struct PendingDiscovery {
    pub dest: NodeId,
    pub attempts_left: u32,
    pub buffered: DataQueue,
    pub timeout_at: f64,
    token: u32,
}

/// A local repair in progress at an intermediate node.
#[derive(Debug, Clone)]
struct Repair {
    buffered: DataQueue,
    precursors: BTreeSet<NodeId>,
    token: u32,
}

#[derive(Debug, Clone)]
pub struct AodvNode {
    me: NodeId,
    params: ProtocolParams,
    seq: SeqNo,
    rreq_counter: u32,
    token: u32,
    table: RoutingTable,
    neighbors: NeighborTable,
    seen: RreqCache,
    pending: BTreeMap<NodeId, PendingDiscovery>,
    repairs: BTreeMap<NodeId, Repair>,
    /// Destinations this node originates traffic for.
    sources: BTreeSet<NodeId>,
    /// Recently delivered traffic keeps the sink on an active route.
    sink_until: f64,
    repairs_started: u64,
}

impl AodvNode {
    pub fn new(me: NodeId, params: ProtocolParams) -> Self {
        AodvNode {
            me,
            params,
            seq: 0,
            rreq_counter: 0,
            token: 0,
            table: RoutingTable::default(),
            neighbors: NeighborTable::default(),
            seen: RreqCache::default(),
            pending: BTreeMap::new(),
            repairs: BTreeMap::new(),
            sources: BTreeSet::new(),
            sink_until: f64::NEG_INFINITY,
            repairs_started: 0,
        }
    }

    pub fn table(&self) -> &RoutingTable {
        &self.table
    }

    pub fn pending(&self, dest: NodeId) -> Option<&PendingDiscovery> {
        self.pending.get(&dest)
    }

    fn next_token(&mut self) -> u32 {
        self.token += 1;
        self.token
    }

    fn flood(&mut self, dest: NodeId, repair: bool, out: &mut Outbox) -> RreqId {
        self.seq = self.seq.wrapping_add(1);
        self.rreq_counter += 1;
        let id = RreqId {
            origin: self.me,
            counter: self.rreq_counter,
        };
        let known = self.table.known_seq(dest);
        let dest_seq_known = if repair {
            // a repair asks for something strictly newer than the broken route
            Some(known.map_or(1, |s| s.wrapping_add(1)))
        } else {
            known
        };
        self.seen.first_sighting(id, f64::NEG_INFINITY, f64::INFINITY);
        out.broadcast(Packet::Rreq(Rreq {
            id,
            dest,
            origin_seq: self.seq,
            dest_seq_known,
            hop_count: 0,
            route_record: Vec::new(),
            repair,
            avoid: Vec::new(),
            want: 1,
        }));
        id
    }

    fn start_discovery(&mut self, now: f64, dest: NodeId, first: Data, out: &mut Outbox) {
        let token = self.next_token();
        let mut buffered = DataQueue::default();
        let _ = buffered.push(first, self.params.queue_capacity);
        let id = self.flood(dest, false, out);
        let timeout_at = now + self.params.rreq_timeout;
        out.note("discovery", id.to_string(), format!("start dest={dest}"));
        out.timer(timeout_at, Timer::Discovery { dest, token });
        self.pending.insert(
            dest,
            PendingDiscovery {
                dest,
                attempts_left: self.params.rreq_retries,
                buffered,
                timeout_at,
                token,
            },
        );
    }

    /// Hands a packet to the next hop of a usable entry, or drops it.
    fn forward(&mut self, now: f64, prev: Option<NodeId>, data: Data, out: &mut Outbox) {
        let dest = data.dest;
        let until = now + self.params.route_lifetime;
        let next = match self.table.get_mut(dest) {
            Some(e) if e.usable(now) => {
                if let Some(p) = prev {
                    e.active_neighbors.insert(p);
                }
                e.in_use = true;
                e.expires_at = e.expires_at.max(until);
                e.next_hop
            }
            _ => {
                if let Some(r) = self.repairs.get_mut(&dest) {
                    if let Err(d) = r.buffered.push(data, self.params.queue_capacity) {
                        out.drop_data(d, DropCause::QueueOverflow);
                    }
                    return;
                }
                let seq = self.table.known_seq(dest).unwrap_or(0);
                out.drop_data(data, DropCause::NoRoute);
                if let Some(p) = prev {
                    out.unicast(
                        p,
                        Packet::Rerr(Rerr {
                            broken_link: (self.me, dest),
                            unreachable: vec![(dest, seq)],
                            route_to_source: Vec::new(),
                        }),
                    );
                }
                return;
            }
        };
        if revisits(&data, next) {
            out.drop_data(data, DropCause::Loop);
            return;
        }
        self.table.refresh(next, until);
        out.unicast(next, Packet::Data(data));
    }

    fn handle_rreq(&mut self, now: f64, prev: NodeId, rreq: &Rreq, out: &mut Outbox) {
        if rreq.origin() == self.me || !self.seen.first_sighting(rreq.id, now, self.params.rreq_id_cache_ttl) {
            return;
        }
        let hops = rreq.hop_count + 1;
        let lifetime = now + self.params.route_lifetime;
        self.table.offer(rreq.origin(), prev, hops, Some(rreq.origin_seq), lifetime, now);
        self.table.offer(prev, prev, 1, None, lifetime, now);

        if rreq.dest == self.me {
            if let Some(k) = rreq.dest_seq_known {
                if fresher(k, self.seq) {
                    self.seq = k;
                }
            }
            self.seq = self.seq.wrapping_add(1);
            out.note("rrep", rreq.id.to_string(), format!("dest reply to={}", rreq.origin()));
            out.unicast(
                prev,
                Packet::Rrep(Rrep {
                    origin: rreq.origin(),
                    dest: self.me,
                    dest_seq: self.seq,
                    hop_count: 0,
                    path_set: Vec::new(),
                    lifetime: self.params.route_lifetime,
                    rreq: rreq.id,
                    want: 1,
                }),
            );
            return;
        }

        if let Some(e) = self.table.lookup(rreq.dest, now) {
            let fresh_enough = match (e.dest_seq, rreq.dest_seq_known) {
                (Some(have), Some(want)) => !fresher(want, have),
                (Some(_), None) => true,
                (None, _) => false,
            };
            if fresh_enough && e.next_hop != prev {
                let rrep = Rrep {
                    origin: rreq.origin(),
                    dest: rreq.dest,
                    dest_seq: e.dest_seq.unwrap_or(0),
                    hop_count: e.hop_count,
                    path_set: Vec::new(),
                    lifetime: e.expires_at - now,
                    rreq: rreq.id,
                    want: 1,
                };
                if let Some(e) = self.table.get_mut(rreq.dest) {
                    e.active_neighbors.insert(prev);
                }
                out.note("rrep", rreq.id.to_string(), format!("intermediate reply to={}", rreq.origin()));
                out.unicast(prev, Packet::Rrep(rrep));
                return;
            }
        }

        let mut fwd = rreq.clone();
        fwd.hop_count = hops;
        if let Some(k) = self.table.known_seq(rreq.dest) {
            if fwd.dest_seq_known.is_none_or(|s| fresher(k, s)) {
                fwd.dest_seq_known = Some(k);
            }
        }
        out.broadcast(Packet::Rreq(fwd));
    }

    fn handle_rrep(&mut self, now: f64, prev: NodeId, rrep: &Rrep, out: &mut Outbox) {
        let hops = rrep.hop_count + 1;
        self.table
            .offer(rrep.dest, prev, hops, Some(rrep.dest_seq), now + rrep.lifetime.max(0.0), now);
        self.table.offer(prev, prev, 1, None, now + self.params.route_lifetime, now);

        if rrep.origin == self.me {
            if let Some(p) = self.pending.remove(&rrep.dest) {
                out.note("discovery_ok", rrep.rreq.to_string(), format!("dest={} hops={hops}", rrep.dest));
                let mut q = p.buffered;
                for d in q.drain() {
                    self.forward(now, None, d, out);
                }
            } else if let Some(mut r) = self.repairs.remove(&rrep.dest) {
                out.note("repair_ok", rrep.dest.to_string(), format!("hops={hops}"));
                if let Some(e) = self.table.get_mut(rrep.dest) {
                    e.active_neighbors.extend(r.precursors.iter().copied());
                }
                let held: Vec<Data> = r.buffered.drain().collect();
                for d in held {
                    self.forward(now, None, d, out);
                }
            }
            return;
        }

        let Some(rev) = self.table.lookup(rrep.origin, now) else {
            return;
        };
        let toward_origin = rev.next_hop;
        if let Some(e) = self.table.get_mut(rrep.dest) {
            e.active_neighbors.insert(toward_origin);
        }
        if let Some(e) = self.table.get_mut(rrep.origin) {
            e.active_neighbors.insert(prev);
        }
        let mut fwd = rrep.clone();
        fwd.hop_count = hops;
        out.unicast(toward_origin, Packet::Rrep(fwd));
    }

    fn handle_rerr(&mut self, _now: f64, prev: NodeId, rerr: &Rerr, out: &mut Outbox) {
        let mut propagate: BTreeMap<NodeId, Vec<(NodeId, SeqNo)>> = BTreeMap::new();
        for &(dest, seq) in &rerr.unreachable {
            let Some(e) = self.table.get(dest) else { continue };
            if e.next_hop != prev || !e.valid {
                continue;
            }
            let precursors = e.active_neighbors.clone();
            self.table.invalidate(dest);
            if let Some(e) = self.table.get_mut(dest) {
                if fresher(seq, e.dest_seq.unwrap_or(0)) {
                    e.dest_seq = Some(seq);
                }
            }
            if self.sources.contains(&dest) {
                out.note("rerr", dest.to_string(), "at source".to_string());
            }
            for p in precursors {
                propagate.entry(p).or_default().push((dest, seq));
            }
        }
        for (p, dests) in propagate {
            out.unicast(
                p,
                Packet::Rerr(Rerr {
                    broken_link: rerr.broken_link,
                    unreachable: dests,
                    route_to_source: Vec::new(),
                }),
            );
        }
    }

    fn handle_data(&mut self, now: f64, prev: NodeId, mut data: Data, out: &mut Outbox) {
        data.visited.push(self.me);
        let lifetime = now + self.params.route_lifetime;
        let hops_back = data.visited.len() as u32 - 1;
        self.table.offer(data.origin, prev, hops_back, None, lifetime, now);
        self.table.refresh(data.origin, lifetime);
        self.table.refresh(prev, lifetime);
        if data.dest == self.me {
            self.sink_until = lifetime;
            out.deliver(data);
            return;
        }
        self.forward(now, Some(prev), data, out);
    }

    fn local_repair(&mut self, now: f64, dest: NodeId, precursors: BTreeSet<NodeId>, out: &mut Outbox) {
        self.repairs_started += 1;
        let token = self.next_token();
        let id = self.flood(dest, true, out);
        out.note("repair", dest.to_string(), format!("start rreq={id}"));
        out.timer(now + 2.0 * self.params.hello_interval, Timer::Repair { dest, token });
        self.repairs.insert(
            dest,
            Repair {
                buffered: DataQueue::default(),
                precursors,
                token,
            },
        );
    }

    fn send_rerr(&self, dest: NodeId, precursors: &BTreeSet<NodeId>, broken: (NodeId, NodeId), out: &mut Outbox) {
        let seq = self.table.known_seq(dest).unwrap_or(0).wrapping_add(1);
        for &p in precursors {
            out.unicast(
                p,
                Packet::Rerr(Rerr {
                    broken_link: broken,
                    unreachable: vec![(dest, seq)],
                    route_to_source: Vec::new(),
                }),
            );
        }
    }
}

impl RoutingAgent for AodvNode {
    fn id(&self) -> NodeId {
        self.me
    }

    fn seq(&self) -> SeqNo {
        self.seq
    }

    fn neighbors(&self) -> &NeighborTable {
        &self.neighbors
    }

    fn neighbors_mut(&mut self) -> &mut NeighborTable {
        &mut self.neighbors
    }

    fn originate(&mut self, now: f64, data: Data, out: &mut Outbox) {
        let dest = data.dest;
        if dest == self.me {
            out.deliver(data);
            return;
        }
        self.sources.insert(dest);
        if self.table.lookup(dest, now).is_some() {
            self.forward(now, None, data, out);
            return;
        }
        if let Some(p) = self.pending.get_mut(&dest) {
            if let Err(d) = p.buffered.push(data, self.params.queue_capacity) {
                out.drop_data(d, DropCause::QueueOverflow);
            }
            return;
        }
        self.start_discovery(now, dest, data, out);
    }

    fn receive(&mut self, now: f64, frame: &Frame, out: &mut Outbox) {
        let prev = frame.sender;
        match &frame.packet {
            Packet::Rreq(r) => self.handle_rreq(now, prev, r, out),
            Packet::Rrep(r) => self.handle_rrep(now, prev, r, out),
            Packet::Rerr(r) => self.handle_rerr(now, prev, r, out),
            Packet::Hello(_) => {}
            Packet::Data(d) => self.handle_data(now, prev, d.clone(), out),
        }
    }

    fn timer(&mut self, now: f64, timer: Timer, out: &mut Outbox) {
        match timer {
            Timer::Discovery { dest, token } => {
                let Some(p) = self.pending.get(&dest) else { return };
                if p.token != token {
                    return;
                }
                if p.attempts_left > 0 {
                    let token = self.next_token();
                    let id = self.flood(dest, false, out);
                    let p = self.pending.get_mut(&dest).expect("checked");
                    p.attempts_left -= 1;
                    p.token = token;
                    p.timeout_at = now + self.params.rreq_timeout;
                    out.note("discovery_retry", id.to_string(), format!("dest={dest} left={}", p.attempts_left));
                    out.timer(p.timeout_at, Timer::Discovery { dest, token });
                } else {
                    let mut p = self.pending.remove(&dest).expect("checked");
                    out.note("discovery_fail", dest.to_string(), format!("dropped={}", p.buffered.len()));
                    for d in p.buffered.drain() {
                        out.drop_data(d, DropCause::NoRoute);
                    }
                }
            }
            Timer::Repair { dest, token } => {
                let Some(r) = self.repairs.get(&dest) else { return };
                if r.token != token {
                    return;
                }
                let mut r = self.repairs.remove(&dest).expect("checked");
                out.note("repair_fail", dest.to_string(), format!("dropped={}", r.buffered.len()));
                for d in r.buffered.drain() {
                    out.drop_data(d, DropCause::NoRoute);
                }
                self.send_rerr(dest, &r.precursors, (self.me, dest), out);
            }
            _ => {}
        }
    }

    fn neighbor_lost(&mut self, now: f64, neighbor: NodeId, out: &mut Outbox) {
        let broken: Vec<_> = self
            .table
            .invalidate_via(neighbor, now)
            .into_iter()
            .filter(|e| e.in_use)
            .collect();
        if broken.is_empty() {
            return;
        }
        out.note("link_break", format!("{}-{}", self.me, neighbor), format!("routes={}", broken.len()));
        for e in broken {
            if self.sources.contains(&e.dest) {
                // the repair point would be the source itself: rediscover
                // when the next packet arrives
                continue;
            }
            if self.repairs.contains_key(&e.dest) {
                continue;
            }
            self.local_repair(now, e.dest, e.active_neighbors, out);
        }
    }

    fn wants_hello(&self, now: f64) -> bool {
        now < self.sink_until || self.table.has_active_route(now)
    }

    fn drain_buffers(&mut self) -> Vec<Data> {
        let mut out = Vec::new();
        for p in self.pending.values_mut() {
            out.extend(p.buffered.drain());
        }
        for r in self.repairs.values_mut() {
            out.extend(r.buffered.drain());
        }
        out
    }

    fn repairs_started(&self) -> u64 {
        self.repairs_started
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proto::{Action, DataId};

    fn data(origin: u32, dest: u32, seq: u32) -> Data {
        Data {
            id: DataId { flow: 0, seq },
            origin: NodeId(origin),
            dest: NodeId(dest),
            payload_size: 512,
            sent_at: 0.0,
            source_route: Vec::new(),
            visited: vec![NodeId(origin)],
        }
    }

    fn rreq_from(out: &Outbox) -> Rreq {
        out.actions
            .iter()
            .find_map(|a| match a {
                Action::Broadcast(Packet::Rreq(r)) => Some(r.clone()),
                _ => None,
            })
            .expect("rreq broadcast")
    }

    #[test]
    fn local_destination_is_delivered() {
        let mut n = AodvNode::new(NodeId(0), ProtocolParams::default());
        let mut out = Outbox::default();
        n.originate(0.0, data(0, 0, 0), &mut out);
        assert!(matches!(out.actions[..], [Action::Deliver(_)]));
    }

    #[test]
    fn discovery_then_retries_then_failure() {
        let p = ProtocolParams::default();
        let mut n = AodvNode::new(NodeId(0), p.clone());
        let mut out = Outbox::default();
        n.originate(0.0, data(0, 5, 0), &mut out);
        n.originate(0.1, data(0, 5, 1), &mut out);
        let floods = |o: &Outbox| o.actions.iter().filter(|a| matches!(a, Action::Broadcast(Packet::Rreq(_)))).count();
        assert_eq!(floods(&out), 1);
        let mut t = 0.0;
        let mut total = 1;
        for _ in 0..=p.rreq_retries {
            t += p.rreq_timeout;
            let token = n.pending(NodeId(5)).map(|d| d.token);
            let mut o = Outbox::default();
            if let Some(token) = token {
                n.timer(t, Timer::Discovery { dest: NodeId(5), token }, &mut o);
            }
            total += floods(&o);
            if o.count_notes("discovery_fail") == 1 {
                let drops = o.actions.iter().filter(|a| matches!(a, Action::Drop { cause: DropCause::NoRoute, .. })).count();
                assert_eq!(drops, 2);
            }
        }
        assert_eq!(total, p.rreq_retries as usize + 1);
        assert!(n.pending(NodeId(5)).is_none());
    }

    #[test]
    fn duplicate_rreq_is_dropped() {
        let mut src = AodvNode::new(NodeId(0), ProtocolParams::default());
        let mut out = Outbox::default();
        src.originate(0.0, data(0, 9, 0), &mut out);
        let rreq = rreq_from(&out);
        let mut mid = AodvNode::new(NodeId(1), ProtocolParams::default());
        let frame = Frame { sender: NodeId(0), next_hop: None, packet: Packet::Rreq(rreq) };
        let mut o1 = Outbox::default();
        mid.receive(0.001, &frame, &mut o1);
        assert_eq!(o1.actions.len(), 1);
        let mut o2 = Outbox::default();
        mid.receive(0.002, &frame, &mut o2);
        assert!(o2.actions.is_empty());
    }

    #[test]
    fn destination_replies_with_incremented_seq() {
        let mut src = AodvNode::new(NodeId(0), ProtocolParams::default());
        let mut out = Outbox::default();
        src.originate(0.0, data(0, 1, 0), &mut out);
        let rreq = rreq_from(&out);
        let mut dst = AodvNode::new(NodeId(1), ProtocolParams::default());
        let before = dst.seq();
        let mut o = Outbox::default();
        dst.receive(0.001, &Frame { sender: NodeId(0), next_hop: None, packet: Packet::Rreq(rreq) }, &mut o);
        let rrep = o
            .actions
            .iter()
            .find_map(|a| match a {
                Action::Unicast { to, packet: Packet::Rrep(r) } => Some((*to, r.clone())),
                _ => None,
            })
            .unwrap();
        assert_eq!(rrep.0, NodeId(0));
        assert!(fresher(rrep.1.dest_seq, before));
        // source installs the route and flushes
        let mut o = Outbox::default();
        src.receive(0.002, &Frame { sender: NodeId(1), next_hop: Some(NodeId(0)), packet: Packet::Rrep(rrep.1) }, &mut o);
        assert!(o.actions.iter().any(|a| matches!(a, Action::Unicast { to: NodeId(1), packet: Packet::Data(_) })));
        assert_eq!(src.table().lookup(NodeId(1), 0.002).unwrap().hop_count, 1);
    }

    #[test]
    fn expired_entry_drops_and_reports() {
        let mut n = AodvNode::new(NodeId(1), ProtocolParams::default());
        n.table.offer(NodeId(3), NodeId(2), 1, Some(4), 5.0, 0.0);
        let mut o = Outbox::default();
        let mut d = data(0, 3, 0);
        d.visited = vec![NodeId(0)];
        n.receive(6.0, &Frame { sender: NodeId(0), next_hop: Some(NodeId(1)), packet: Packet::Data(d) }, &mut o);
        assert!(o.actions.iter().any(|a| matches!(a, Action::Drop { cause: DropCause::NoRoute, .. })));
        assert!(o.actions.iter().any(|a| matches!(a, Action::Unicast { to: NodeId(0), packet: Packet::Rerr(_) })));
    }

    #[test]
    fn break_at_intermediate_starts_one_repair() {
        let mut n = AodvNode::new(NodeId(1), ProtocolParams::default());
        n.table.offer(NodeId(3), NodeId(2), 2, Some(4), 50.0, 0.0);
        let mut o = Outbox::default();
        n.receive(1.0, &Frame { sender: NodeId(0), next_hop: Some(NodeId(1)), packet: Packet::Data(data(0, 3, 0)) }, &mut o);
        let mut o = Outbox::default();
        n.neighbor_lost(3.0, NodeId(2), &mut o);
        assert_eq!(o.count_notes("repair"), 1);
        assert_eq!(n.repairs_started(), 1);
        // data arriving during repair is held
        let mut o2 = Outbox::default();
        n.receive(3.1, &Frame { sender: NodeId(0), next_hop: Some(NodeId(1)), packet: Packet::Data(data(0, 3, 1)) }, &mut o2);
        assert!(o2.actions.is_empty());
        // repair timeout: held data dropped, RERR to the precursor
        let token = n.repairs[&NodeId(3)].token;
        let mut o3 = Outbox::default();
        n.timer(5.0, Timer::Repair { dest: NodeId(3), token }, &mut o3);
        assert_eq!(o3.count_notes("repair_fail"), 1);
        assert!(o3.actions.iter().any(|a| matches!(a, Action::Drop { cause: DropCause::NoRoute, .. })));
        assert!(o3.actions.iter().any(|a| matches!(a, Action::Unicast { to: NodeId(0), packet: Packet::Rerr(_) })));
    }

    #[test]
    fn break_at_source_skips_repair() {
        let mut n = AodvNode::new(NodeId(0), ProtocolParams::default());
        n.table.offer(NodeId(3), NodeId(1), 2, Some(4), 50.0, 0.0);
        let mut o = Outbox::default();
        n.originate(1.0, data(0, 3, 0), &mut o);
        let mut o = Outbox::default();
        n.neighbor_lost(3.0, NodeId(1), &mut o);
        assert_eq!(o.count_notes("repair"), 0);
        assert_eq!(n.repairs_started(), 0);
        // next packet triggers a fresh discovery
        let mut o = Outbox::default();
        n.originate(3.1, data(0, 3, 1), &mut o);
        assert_eq!(o.count_notes("discovery"), 1);
    }

    #[test]
    fn idle_node_sends_no_hello() {
        let n = AodvNode::new(NodeId(0), ProtocolParams::default());
        assert!(!n.wants_hello(0.0));
    }
}
