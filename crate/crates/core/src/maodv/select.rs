//! Greedy node-disjoint route selection.

use std::collections::BTreeMap;

use crate::NodeId;

/// Degree of each node in the graph formed by the union of `paths`.
pub fn union_degrees(paths: &[Vec<NodeId>]) -> BTreeMap<NodeId, usize> {
    let mut deg = BTreeMap::new();
    for (a, b) in union_edges(paths.iter().map(Vec::as_slice)) {
        *deg.entry(a).or_insert(0) += 1;
        *deg.entry(b).or_insert(0) += 1;
    }
    deg
}

fn union_edges<'a>(paths: impl Iterator<Item = &'a [NodeId]>) -> impl Iterator<Item = (NodeId, NodeId)> {
    let mut edges: Vec<u64> = Vec::new();
    for p in paths {
        for w in p.windows(2) {
            let (a, b) = if w[0] < w[1] { (w[0], w[1]) } else { (w[1], w[0]) };
            edges.push(u64::from(a.0) << 32 | u64::from(b.0));
        }
    }
    edges.sort_unstable();
    edges.dedup();
    edges.into_iter().map(|e| (NodeId((e >> 32) as u32), NodeId(e as u32)))
}

/// Union-graph degrees for selection: indexed by node id when ids are
/// small, which they are in any simulated network.
enum Degrees {
    Dense(Vec<usize>),
    Sparse(BTreeMap<NodeId, usize>),
}

impl Degrees {
    fn of(paths: &[&Vec<NodeId>]) -> Self {
        let max = paths.iter().flat_map(|p| p.iter()).map(|n| n.0).max().unwrap_or(0);
        if max >= 1 << 16 {
            let owned: Vec<Vec<NodeId>> = paths.iter().map(|p| (*p).clone()).collect();
            return Degrees::Sparse(union_degrees(&owned));
        }
        let mut deg = vec![0; max as usize + 1];
        for (a, b) in union_edges(paths.iter().map(|p| p.as_slice())) {
            deg[a.0 as usize] += 1;
            deg[b.0 as usize] += 1;
        }
        Degrees::Dense(deg)
    }

    fn get(&self, n: &NodeId) -> usize {
        match self {
            Degrees::Dense(d) => d.get(n.0 as usize).copied().unwrap_or(0),
            Degrees::Sparse(m) => m.get(n).copied().unwrap_or(0),
        }
    }
}

/// Sum of union-graph degrees over a path's intermediate nodes.
pub fn degree_sum(path: &[NodeId], degrees: &BTreeMap<NodeId, usize>) -> usize {
    intermediates(path).iter().map(|n| degrees.get(n).copied().unwrap_or(0)).sum()
}

pub fn intermediates(path: &[NodeId]) -> &[NodeId] {
    if path.len() <= 2 {
        &[]
    } else {
        &path[1..path.len() - 1]
    }
}

/// True when the two routes share no intermediate node.
pub fn disjoint(a: &[NodeId], b: &[NodeId]) -> bool {
    let ia = intermediates(a);
    intermediates(b).iter().all(|n| !ia.contains(n))
}

fn is_simple(path: &[NodeId]) -> bool {
    // paths are short; a quadratic scan beats building a set
    path.iter().enumerate().all(|(i, n)| !path[..i].contains(n))
}

/// Picks up to `n0` pairwise node-disjoint routes.
///
/// Candidates are ordered by hop count, then (when `degree_tiebreak` is set)
/// by the sum of their intermediate nodes' degrees in the union graph, then
/// lexicographically by node id. Walking that order, a candidate is taken
/// when it shares no intermediate node with anything already taken. The
/// first route returned is the primary.
///
/// Paths with repeated nodes or with endpoints different from the first
/// path are ignored. The result does not depend on the input order.
pub fn select_disjoint(paths: &[Vec<NodeId>], n0: usize, degree_tiebreak: bool) -> Vec<Vec<NodeId>> {
    select_disjoint_with(paths, &[], n0, degree_tiebreak)
}

/// Like [`select_disjoint`], but every pick must also be disjoint from the
/// routes in `keep`, and at most `n0` new routes are returned.
pub fn select_disjoint_with(
    paths: &[Vec<NodeId>],
    keep: &[Vec<NodeId>],
    n0: usize,
    degree_tiebreak: bool,
) -> Vec<Vec<NodeId>> {
    let mut cands: Vec<&Vec<NodeId>> = paths.iter().filter(|p| p.len() >= 2 && is_simple(p)).collect();
    let Some(endpoints) = cands
        .iter()
        .map(|p| (p[0], p[p.len() - 1]))
        .min()
    else {
        return Vec::new();
    };
    cands.retain(|p| (p[0], p[p.len() - 1]) == endpoints);
    let degrees = degree_tiebreak.then(|| Degrees::of(&cands));
    let mut keyed: Vec<(usize, usize, &Vec<NodeId>)> = cands
        .iter()
        .map(|p| {
            let ds = degrees.as_ref().map_or(0, |d| intermediates(p).iter().map(|n| d.get(n)).sum());
            (p.len(), ds, *p)
        })
        .collect();
    keyed.sort_unstable();
    // equal paths have equal keys, so duplicates are now adjacent
    keyed.dedup_by(|a, b| a.2 == b.2);

    let mut used: Vec<NodeId> = keep.iter().flat_map(|r| intermediates(r).iter().copied()).collect();
    let mut out = Vec::new();
    for (_, _, p) in keyed {
        if out.len() >= n0 {
            break;
        }
        let mid = intermediates(p);
        if mid.iter().any(|n| used.contains(n)) {
            continue;
        }
        // a direct route has no intermediates and is disjoint from everything,
        // but two copies of it would be the same route
        if mid.is_empty() && (out.iter().any(|r: &Vec<NodeId>| r == p) || keep.iter().any(|r| r == p)) {
            continue;
        }
        used.extend(mid.iter().copied());
        out.push(p.clone());
    }
    out
}
