use super::select::{disjoint, intermediates};
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RouteStatus {
    Valid,
    Invalid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CachedRoute {
    pub nodes: Vec<NodeId>,
    pub status: RouteStatus,
}

impl CachedRoute {
    pub fn is_valid(&self) -> bool {
        self.status == RouteStatus::Valid
    }

    /// Whether `a` is immediately followed by `b` on this route.
    pub fn uses_link(&self, a: NodeId, b: NodeId) -> bool {
        self.nodes.windows(2).any(|w| w[0] == a && w[1] == b)
    }
}

/// Source-held set of node-disjoint routes toward one destination.
#[derive(Debug, Clone, PartialEq)]
pub struct PathCache {
    pub dest: NodeId,
    pub routes: Vec<CachedRoute>,
    pub primary_index: usize,
    pub n0: u32,
    pub s0: u32,
}

impl PathCache {
    pub fn new(dest: NodeId, n0: u32, s0: u32) -> Self {
        PathCache {
            dest,
            routes: Vec::new(),
            primary_index: 0,
            n0,
            s0,
        }
    }

    pub fn valid_count(&self) -> usize {
        self.routes.iter().filter(|r| r.is_valid()).count()
    }

    pub fn primary(&self) -> Option<&CachedRoute> {
        self.routes.get(self.primary_index).filter(|r| r.is_valid())
    }

    pub fn valid_routes(&self) -> impl Iterator<Item = &CachedRoute> {
        self.routes.iter().filter(|r| r.is_valid())
    }

    fn repoint(&mut self) {
        if self.primary().is_none() {
            if let Some(i) = self.routes.iter().position(|r| r.is_valid()) {
                self.primary_index = i;
            }
        }
    }

    /// Adds routes that keep the valid set disjoint and within `n0`; the
    /// rest are ignored. Returns how many were added.
    pub fn merge(&mut self, candidates: Vec<Vec<NodeId>>) -> usize {
        // invalid routes are history; drop them so indices stay small
        let primary = self.primary().cloned();
        self.routes.retain(|r| r.is_valid());
        self.primary_index = primary
            .and_then(|p| self.routes.iter().position(|r| *r == p))
            .unwrap_or(0);
        let mut added = 0;
        for c in candidates {
            if self.valid_count() >= self.n0 as usize {
                break;
            }
            if c.first() == Some(&self.dest) || c.last() != Some(&self.dest) {
                continue;
            }
            if self.routes.iter().any(|r| r.nodes == c || !disjoint(&r.nodes, &c)) {
                continue;
            }
            self.routes.push(CachedRoute {
                nodes: c,
                status: RouteStatus::Valid,
            });
            added += 1;
        }
        self.repoint();
        added
    }

    /// Marks every route using link `a → b` invalid. Returns the number of
    /// routes invalidated and whether the primary was among them.
    pub fn invalidate_link(&mut self, a: NodeId, b: NodeId) -> (usize, bool) {
        let mut n = 0;
        let mut primary_hit = false;
        for (i, r) in self.routes.iter_mut().enumerate() {
            if r.is_valid() && (r.uses_link(a, b) || r.uses_link(b, a)) {
                r.status = RouteStatus::Invalid;
                n += 1;
                primary_hit |= i == self.primary_index;
            }
        }
        if primary_hit {
            // next valid route in selection order becomes primary
            let len = self.routes.len();
            if let Some(i) = (1..=len)
                .map(|k| (self.primary_index + k) % len)
                .find(|&i| self.routes[i].is_valid())
            {
                self.primary_index = i;
            }
        }
        (n, primary_hit)
    }

    pub fn invalidate_all(&mut self) {
        for r in &mut self.routes {
            r.status = RouteStatus::Invalid;
        }
    }

    /// Intermediate nodes of every valid route.
    pub fn busy_nodes(&self) -> Vec<NodeId> {
        let mut v: Vec<NodeId> = self.valid_routes().flat_map(|r| intermediates(&r.nodes).to_vec()).collect();
        v.sort();
        v.dedup();
        v
    }

    /// Valid routes are pairwise disjoint and the primary is valid when any is.
    pub fn invariant_holds(&self) -> bool {
        let valid: Vec<&CachedRoute> = self.valid_routes().collect();
        let pairwise = valid
            .iter()
            .enumerate()
            .all(|(i, a)| valid[i + 1..].iter().all(|b| disjoint(&a.nodes, &b.nodes)));
        let primary_ok = valid.is_empty() || self.primary().is_some();
        pairwise && primary_ok && valid.len() <= self.n0 as usize
    }
}
