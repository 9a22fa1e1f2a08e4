//! M-AODV: multipath AODV with source-managed node-disjoint routes.
//!
//! Discovery floods RREQ copies that accumulate a route record; nodes keep
//! forwarding duplicates as long as the copy is loop-free, within
//! `rreq_slack` hops of the best copy they have seen, and under
//! `rreq_copy_cap` copies. The destination collects every arriving record
//! for a short window and answers with a single broadcast RREP carrying the
//! whole path set, which is relayed by nodes lying on some carried path.
//!
//! The source picks up to `n0` node-disjoint routes, sends data source-routed
//! along the primary, and on a route error switches to the next valid route.
//! When valid routes fall to `s0` a replenishment discovery runs alongside the
//! data transfer. There is no local repair.
//!
//! Nodes on a selected route keep Hellos going while the route is alive, so
//! spare routes are monitored too. Every relay of the RREP runs the same
//! deterministic selection on the same path set, which is how intermediate
//! nodes know whether they sit on a selected route without extra signalling.

mod cache;
mod select;

use std::collections::{BTreeMap, HashMap};

pub use cache::{CachedRoute, PathCache, RouteStatus};
pub use select::{degree_sum, disjoint, intermediates, select_disjoint, select_disjoint_with, union_degrees};

use crate::proto::{
    Data, DataQueue, DropCause, Frame, NeighborTable, Outbox, Packet, ProtocolParams, Rerr, Rrep, Rreq, RreqCache,
    RreqId, RoutingAgent, RoutingTable, SeqNo, Timer,
};
use crate::NodeId;

/// Per-discovery forwarding state at an intermediate node.
#[derive(Debug, Clone)]
struct CopyState {
    best_hops: u32,
    forwarded: u32,
    expires: f64,
}

/// Paths gathered at the destination for one discovery.
#[derive(Debug, Clone)]
pub struct DiscoverySession {
    pub origin: NodeId,
    pub collected_paths: Vec<Vec<NodeId>>,
    pub collect_deadline: f64,
    pub best_hops: u32,
    pub want: u32,
}

/// Membership of this node in a selected route.
#[derive(Debug, Clone)]
struct Membership {
    dest: NodeId,
    path: Vec<NodeId>,
    pos: usize,
    expires_at: f64,
}

impl Membership {
    fn predecessor(&self) -> Option<NodeId> {
        self.pos.checked_sub(1).map(|i| self.path[i])
    }

    fn successor(&self) -> Option<NodeId> {
        self.path.get(self.pos + 1).copied()
    }
}

#[derive(Debug, Clone)]
struct SourceDiscovery {
    token: u32,
    attempts_left: u32,
    /// Blocking discoveries hold data; replenishment runs beside the transfer.
    blocking: bool,
    ids: Vec<RreqId>,
}

/// Source-side state toward one destination.
#[derive(Debug, Clone)]
struct Flow {
    cache: PathCache,
    discovery: Option<SourceDiscovery>,
    buffered: DataQueue,
    last_used: f64,
}

#[derive(Debug, Clone)]
pub struct MaodvNode {
    me: NodeId,
    params: ProtocolParams,
    collect_window: f64,
    seq: SeqNo,
    rreq_counter: u32,
    token: u32,
    neighbors: NeighborTable,
    table: RoutingTable,
    copies: HashMap<RreqId, CopyState>,
    sessions: BTreeMap<RreqId, DiscoverySession>,
    rrep_seen: RreqCache,
    memberships: Vec<Membership>,
    flows: BTreeMap<NodeId, Flow>,
}

impl MaodvNode {
    /// `collect_window` is how long the destination gathers RREQ copies
    /// after the first one arrives.
    pub fn new(me: NodeId, params: ProtocolParams, collect_window: f64) -> Self {
        MaodvNode {
            me,
            params,
            collect_window,
            seq: 0,
            rreq_counter: 0,
            token: 0,
            neighbors: NeighborTable::default(),
            table: RoutingTable::default(),
            copies: HashMap::new(),
            sessions: BTreeMap::new(),
            rrep_seen: RreqCache::default(),
            memberships: Vec::new(),
            flows: BTreeMap::new(),
        }
    }

    pub fn cache(&self, dest: NodeId) -> Option<&PathCache> {
        self.flows.get(&dest).map(|f| &f.cache)
    }

    pub fn session(&self, id: RreqId) -> Option<&DiscoverySession> {
        self.sessions.get(&id)
    }

    pub fn table(&self) -> &RoutingTable {
        &self.table
    }

    pub fn member_paths(&self) -> Vec<Vec<NodeId>> {
        self.memberships.iter().map(|m| m.path.clone()).collect()
    }

    fn next_token(&mut self) -> u32 {
        self.token += 1;
        self.token
    }

    fn flow(&mut self, dest: NodeId) -> &mut Flow {
        let (n0, s0) = (self.params.n0, self.params.s0);
        self.flows.entry(dest).or_insert_with(|| Flow {
            cache: PathCache::new(dest, n0, s0),
            discovery: None,
            buffered: DataQueue::default(),
            last_used: f64::NEG_INFINITY,
        })
    }

    fn flood(&mut self, dest: NodeId, avoid: Vec<NodeId>, want: u32, out: &mut Outbox) -> RreqId {
        self.seq = self.seq.wrapping_add(1);
        self.rreq_counter += 1;
        let id = RreqId {
            origin: self.me,
            counter: self.rreq_counter,
        };
        out.broadcast(Packet::Rreq(Rreq {
            id,
            dest,
            origin_seq: self.seq,
            dest_seq_known: self.table.known_seq(dest),
            hop_count: 0,
            route_record: vec![self.me],
            repair: false,
            avoid,
            want,
        }));
        id
    }

    fn start_discovery(&mut self, now: f64, dest: NodeId, blocking: bool, out: &mut Outbox) {
        let (avoid, want) = {
            let f = self.flow(dest);
            let valid = f.cache.valid_count() as u32;
            (f.cache.busy_nodes(), f.cache.n0.saturating_sub(valid).max(1))
        };
        let token = self.next_token();
        let id = self.flood(dest, avoid, want, out);
        let attempts_left = if blocking { self.params.rreq_retries } else { 0 };
        out.note(
            if blocking { "discovery" } else { "replenish" },
            id.to_string(),
            format!("start dest={dest} want={want}"),
        );
        out.timer(now + self.params.rreq_timeout, Timer::Discovery { dest, token });
        self.flow(dest).discovery = Some(SourceDiscovery {
            token,
            attempts_left,
            blocking,
            ids: vec![id],
        });
    }

    /// Sends along the primary, failing over locally when the first hop is
    /// already known to be gone. Hands the packet back if no route is usable.
    fn send_on_primary(&mut self, now: f64, mut data: Data, out: &mut Outbox) -> Result<(), Data> {
        loop {
            let me = self.me;
            let Some(route) = self.flows.get(&data.dest).and_then(|f| f.cache.primary()).map(|r| r.nodes.clone())
            else {
                return Err(data);
            };
            let next = route[1];
            if self.neighbors.is_fresh(next, now) {
                if let Some(f) = self.flows.get_mut(&data.dest) {
                    f.last_used = now;
                }
                data.source_route = route;
                out.unicast(next, Packet::Data(data));
                return Ok(());
            }
            self.route_broken(now, data.dest, (me, next), out);
        }
    }

    /// Source reaction to a dead link on some cached route.
    fn route_broken(&mut self, now: f64, dest: NodeId, link: (NodeId, NodeId), out: &mut Outbox) {
        let Some(f) = self.flows.get_mut(&dest) else { return };
        let (n, primary_hit) = f.cache.invalidate_link(link.0, link.1);
        if n == 0 {
            return;
        }
        let valid = f.cache.valid_count();
        out.note("route_break", format!("{}-{}", link.0, link.1), format!("dest={dest} invalidated={n} valid={valid}"));
        if primary_hit {
            if let Some(p) = f.cache.primary() {
                out.note("failover", dest.to_string(), fmt_path(&p.nodes));
            }
        }
        let s0 = f.cache.s0 as usize;
        match (&mut f.discovery, valid) {
            (Some(d), 0) => {
                if !d.blocking {
                    d.blocking = true;
                    d.attempts_left = self.params.rreq_retries;
                }
            }
            (None, 0) => {
                if !f.buffered.is_empty() || now - f.last_used < self.params.route_lifetime {
                    self.start_discovery(now, dest, true, out);
                }
            }
            (None, v) if v <= s0 => self.start_discovery(now, dest, false, out),
            _ => {}
        }
    }

    fn flush(&mut self, now: f64, dest: NodeId, out: &mut Outbox) {
        let held: Vec<Data> = match self.flows.get_mut(&dest) {
            Some(f) => f.buffered.drain().collect(),
            None => return,
        };
        let mut back = Vec::new();
        for d in held {
            if let Err(d) = self.send_on_primary(now, d, out) {
                back.push(d);
            }
        }
        if !back.is_empty() {
            let cap = self.params.queue_capacity;
            let f = self.flow(dest);
            for d in back {
                if let Err(d) = f.buffered.push(d, cap) {
                    out.drop_data(d, DropCause::QueueOverflow);
                }
            }
        }
    }

    fn handle_rreq(&mut self, now: f64, prev: NodeId, rreq: &Rreq, out: &mut Outbox) {
        if rreq.origin() == self.me
            || rreq.route_record.contains(&self.me)
            || rreq.avoid.contains(&self.me)
            || rreq.route_record.last() != Some(&prev)
        {
            return;
        }
        let hops = rreq.route_record.len() as u32;
        if rreq.dest == self.me {
            self.collect(now, rreq, hops, out);
            return;
        }
        let ttl = self.params.rreq_id_cache_ttl;
        let st = match self.copies.get_mut(&rreq.id) {
            Some(s) if s.expires > now => s,
            _ => {
                if self.copies.len() > 1024 {
                    self.copies.retain(|_, s| s.expires > now);
                }
                self.table.offer(
                    rreq.origin(),
                    prev,
                    hops,
                    Some(rreq.origin_seq),
                    now + self.params.route_lifetime,
                    now,
                );
                self.copies.insert(
                    rreq.id,
                    CopyState {
                        best_hops: hops,
                        forwarded: 0,
                        expires: now + ttl,
                    },
                );
                self.copies.get_mut(&rreq.id).expect("just inserted")
            }
        };
        if hops > st.best_hops + self.params.rreq_slack || st.forwarded >= self.params.rreq_copy_cap {
            return;
        }
        st.best_hops = st.best_hops.min(hops);
        st.forwarded += 1;
        let mut fwd = rreq.clone();
        fwd.hop_count = hops;
        fwd.route_record.push(self.me);
        out.broadcast(Packet::Rreq(fwd));
    }

    fn collect(&mut self, now: f64, rreq: &Rreq, hops: u32, out: &mut Outbox) {
        let mut path = rreq.route_record.clone();
        path.push(self.me);
        match self.sessions.get_mut(&rreq.id) {
            Some(s) => {
                if now > s.collect_deadline || hops > s.best_hops + self.params.rreq_slack {
                    return;
                }
                if !s.collected_paths.contains(&path) {
                    s.collected_paths.push(path);
                }
            }
            None => {
                let deadline = now + self.collect_window;
                self.sessions.insert(
                    rreq.id,
                    DiscoverySession {
                        origin: rreq.origin(),
                        collected_paths: vec![path],
                        collect_deadline: deadline,
                        best_hops: hops,
                        want: rreq.want,
                    },
                );
                if let Some(k) = rreq.dest_seq_known {
                    if crate::proto::fresher(k, self.seq) {
                        self.seq = k;
                    }
                }
                out.timer(deadline, Timer::Collect(rreq.id));
            }
        }
    }

    fn emit_rrep(&mut self, now: f64, id: RreqId, out: &mut Outbox) {
        let Some(s) = self.sessions.get(&id) else { return };
        if s.collected_paths.is_empty() {
            return;
        }
        let mut paths = s.collected_paths.clone();
        paths.sort();
        self.seq = self.seq.wrapping_add(1);
        let rrep = Rrep {
            origin: s.origin,
            dest: self.me,
            dest_seq: self.seq,
            hop_count: 0,
            path_set: paths,
            lifetime: self.params.route_lifetime,
            rreq: id,
            want: s.want,
        };
        let listed: Vec<String> = rrep.path_set.iter().map(|p| fmt_path(p)).collect();
        out.note("pathset", id.to_string(), format!("paths={} {}", rrep.path_set.len(), listed.join(" ")));
        self.rrep_seen.first_sighting(id, now, self.params.rreq_id_cache_ttl);
        self.install_from_rrep(now, &rrep);
        // sessions are single-shot; late copies of this discovery are ignored
        if let Some(s) = self.sessions.get_mut(&id) {
            s.collected_paths.clear();
            s.collect_deadline = f64::NEG_INFINITY;
        }
        out.broadcast(Packet::Rrep(rrep));
    }

    /// Table entries for every carried path through this node, plus
    /// membership in the routes the source is going to select.
    fn install_from_rrep(&mut self, now: f64, rrep: &Rrep) {
        let until = now + rrep.lifetime;
        for p in &rrep.path_set {
            let Some(pos) = p.iter().position(|&n| n == self.me) else { continue };
            if let Some(&succ) = p.get(pos + 1) {
                let hops = (p.len() - 1 - pos) as u32;
                self.table.offer(rrep.dest, succ, hops, Some(rrep.dest_seq), until, now);
            }
            if pos > 0 {
                self.table.offer(rrep.origin, p[pos - 1], pos as u32, None, until, now);
            }
        }
        let chosen = select_disjoint(&rrep.path_set, rrep.want as usize, self.params.degree_tiebreak);
        for p in chosen {
            let Some(pos) = p.iter().position(|&n| n == self.me) else { continue };
            if pos == 0 {
                continue;
            }
            self.memberships.retain(|m| m.path != p);
            self.memberships.push(Membership {
                dest: rrep.dest,
                path: p,
                pos,
                expires_at: until,
            });
        }
    }

    fn handle_rrep(&mut self, now: f64, rrep: &Rrep, out: &mut Outbox) {
        if !self.rrep_seen.first_sighting(rrep.rreq, now, self.params.rreq_id_cache_ttl) {
            return;
        }
        if rrep.origin == self.me {
            self.accept_paths(now, rrep, out);
            return;
        }
        if !rrep.path_set.iter().any(|p| p.contains(&self.me)) {
            return;
        }
        self.install_from_rrep(now, rrep);
        let mut fwd = rrep.clone();
        fwd.hop_count += 1;
        out.broadcast(Packet::Rrep(fwd));
    }

    fn accept_paths(&mut self, now: f64, rrep: &Rrep, out: &mut Outbox) {
        let dest = rrep.dest;
        let tiebreak = self.params.degree_tiebreak;
        let Some(f) = self.flows.get_mut(&dest) else { return };
        let ours = f.discovery.as_ref().is_some_and(|d| d.ids.contains(&rrep.rreq));
        if !ours {
            return;
        }
        f.discovery = None;
        let keep: Vec<Vec<NodeId>> = f.cache.valid_routes().map(|r| r.nodes.clone()).collect();
        let chosen = select_disjoint_with(&rrep.path_set, &keep, rrep.want as usize, tiebreak);
        let degrees = union_degrees(&rrep.path_set);
        let detail = chosen
            .iter()
            .map(|p| format!("{}:{}", fmt_path(p), degree_sum(p, &degrees)))
            .collect::<Vec<_>>()
            .join(" ");
        let added = f.cache.merge(chosen);
        debug_assert!(f.cache.invariant_holds());
        out.note(
            "select",
            rrep.rreq.to_string(),
            format!("dest={dest} collected={} added={added} {detail}", rrep.path_set.len()),
        );
        self.table
            .offer(dest, rrep.path_set[0].get(1).copied().unwrap_or(dest), 1, Some(rrep.dest_seq), now + rrep.lifetime, now);
        self.flush(now, dest, out);
    }

    fn handle_rerr(&mut self, now: f64, rerr: &Rerr, out: &mut Outbox) {
        let prefix = &rerr.route_to_source;
        let Some(pos) = prefix.iter().position(|&n| n == self.me) else { return };
        let (a, b) = rerr.broken_link;
        let dests: Vec<NodeId> = rerr.unreachable.iter().map(|u| u.0).collect();
        self.memberships
            .retain(|m| !(m.path.windows(2).any(|w| w[0] == a && w[1] == b) && dests.contains(&m.dest)));
        if pos == 0 {
            for d in dests {
                self.route_broken(now, d, rerr.broken_link, out);
            }
            return;
        }
        out.unicast(prefix[pos - 1], Packet::Rerr(rerr.clone()));
    }

    fn handle_data(&mut self, now: f64, mut data: Data, out: &mut Outbox) {
        data.visited.push(self.me);
        let Some(pos) = data.source_route.iter().position(|&n| n == self.me) else {
            out.fault(format!("{} received {} but is not on its source route {}", self.me, data.id, fmt_path(&data.source_route)));
            return;
        };
        let until = now + self.params.route_lifetime;
        for m in self.memberships.iter_mut().filter(|m| m.path == data.source_route) {
            m.expires_at = m.expires_at.max(until);
        }
        if pos + 1 == data.source_route.len() {
            out.deliver(data);
            return;
        }
        if pos == 0 {
            out.drop_data(data, DropCause::Loop);
            return;
        }
        let next = data.source_route[pos + 1];
        if self.neighbors.is_fresh(next, now) {
            out.unicast(next, Packet::Data(data));
            return;
        }
        let prefix = data.source_route[..=pos].to_vec();
        let rerr = Rerr {
            broken_link: (self.me, next),
            unreachable: vec![(data.dest, 0)],
            route_to_source: prefix,
        };
        self.memberships.retain(|m| m.path != data.source_route);
        out.note("link_break", format!("{}-{}", self.me, next), format!("dest={}", data.dest));
        out.drop_data(data, DropCause::LinkBreak);
        out.unicast(rerr.route_to_source[pos - 1], Packet::Rerr(rerr));
    }

    fn live_memberships(&self, now: f64) -> impl Iterator<Item = &Membership> {
        self.memberships.iter().filter(move |m| m.expires_at > now)
    }
}

fn fmt_path(p: &[NodeId]) -> String {
    p.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(",")
}

impl RoutingAgent for MaodvNode {
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
        let lifetime = self.params.route_lifetime;
        let cap = self.params.queue_capacity;
        {
            let f = self.flow(dest);
            if now - f.last_used > lifetime && f.discovery.is_none() && f.cache.valid_count() > 0 {
                // routes idle for a whole lifetime are no longer maintained
                f.cache.invalidate_all();
            }
        }
        let Err(data) = self.send_on_primary(now, data, out) else {
            return;
        };
        let f = self.flow(dest);
        f.last_used = now;
        if let Err(d) = f.buffered.push(data, cap) {
            out.drop_data(d, DropCause::QueueOverflow);
        }
        let retries = self.params.rreq_retries;
        match &mut self.flow(dest).discovery {
            None => self.start_discovery(now, dest, true, out),
            Some(d) if !d.blocking => {
                d.blocking = true;
                d.attempts_left = retries;
            }
            Some(_) => {}
        }
    }

    fn receive(&mut self, now: f64, frame: &Frame, out: &mut Outbox) {
        let prev = frame.sender;
        match &frame.packet {
            Packet::Rreq(r) => self.handle_rreq(now, prev, r, out),
            Packet::Rrep(r) => self.handle_rrep(now, r, out),
            Packet::Rerr(r) => self.handle_rerr(now, r, out),
            Packet::Hello(_) => {
                let until = now + self.params.route_lifetime;
                for m in self.memberships.iter_mut() {
                    if m.predecessor() == Some(prev) && m.expires_at > now {
                        m.expires_at = m.expires_at.max(until);
                    }
                }
            }
            Packet::Data(d) => self.handle_data(now, d.clone(), out),
        }
    }

    fn timer(&mut self, now: f64, timer: Timer, out: &mut Outbox) {
        match timer {
            Timer::Collect(id) => self.emit_rrep(now, id, out),
            Timer::Discovery { dest, token } => {
                let Some(f) = self.flows.get(&dest) else { return };
                let Some(d) = &f.discovery else { return };
                if d.token != token {
                    return;
                }
                if d.attempts_left > 0 {
                    let (avoid, want) = {
                        let valid = f.cache.valid_count() as u32;
                        (f.cache.busy_nodes(), f.cache.n0.saturating_sub(valid).max(1))
                    };
                    let token = self.next_token();
                    let id = self.flood(dest, avoid, want, out);
                    let d = self.flows.get_mut(&dest).and_then(|f| f.discovery.as_mut()).expect("checked");
                    d.attempts_left -= 1;
                    d.token = token;
                    d.ids.push(id);
                    out.note("discovery_retry", id.to_string(), format!("dest={dest} left={}", d.attempts_left));
                    out.timer(now + self.params.rreq_timeout, Timer::Discovery { dest, token });
                    return;
                }
                let f = self.flows.get_mut(&dest).expect("checked");
                let blocking = f.discovery.take().is_some_and(|d| d.blocking);
                if blocking || f.cache.valid_count() == 0 {
                    out.note("discovery_fail", dest.to_string(), format!("dropped={}", f.buffered.len()));
                    for d in f.buffered.drain() {
                        out.drop_data(d, DropCause::NoRoute);
                    }
                } else {
                    out.note("replenish_fail", dest.to_string(), String::new());
                }
            }
            _ => {}
        }
    }

    fn neighbor_lost(&mut self, now: f64, neighbor: NodeId, out: &mut Outbox) {
        self.table.invalidate_via(neighbor, now);
        let broken: Vec<Membership> = self
            .memberships
            .iter()
            .filter(|m| m.successor() == Some(neighbor) && m.expires_at > now)
            .cloned()
            .collect();
        self.memberships
            .retain(|m| m.successor() != Some(neighbor) && m.predecessor() != Some(neighbor));
        for m in broken {
            out.note("link_break", format!("{}-{}", self.me, neighbor), format!("dest={}", m.dest));
            out.unicast(
                m.path[m.pos - 1],
                Packet::Rerr(Rerr {
                    broken_link: (self.me, neighbor),
                    unreachable: vec![(m.dest, 0)],
                    route_to_source: m.path[..=m.pos].to_vec(),
                }),
            );
        }
        let dests: Vec<NodeId> = self
            .flows
            .iter()
            .filter(|(_, f)| f.cache.valid_routes().any(|r| r.nodes.get(1) == Some(&neighbor)))
            .map(|(d, _)| *d)
            .collect();
        for d in dests {
            out.note("link_break", format!("{}-{}", self.me, neighbor), format!("dest={d}"));
            self.route_broken(now, d, (self.me, neighbor), out);
        }
    }

    fn wants_hello(&self, now: f64) -> bool {
        self.live_memberships(now).next().is_some()
            || self
                .flows
                .values()
                .any(|f| f.cache.valid_count() > 0 && now - f.last_used < self.params.route_lifetime)
    }

    fn drain_buffers(&mut self) -> Vec<Data> {
        self.flows.values_mut().flat_map(|f| f.buffered.drain().collect::<Vec<_>>()).collect()
    }
}
