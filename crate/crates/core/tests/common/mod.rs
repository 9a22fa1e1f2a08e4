#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::PathBuf;

use manet_core::scenario::{Scenario, TopologySpec};
use manet_core::sim::{self, ProtocolKind, RunOutput};
use manet_core::trace::TraceLine;
use manet_core::NodeId;

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

pub fn load(name: &str) -> Scenario {
    let p = scenario_path(name);
    let text = std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    Scenario::parse(&text).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

pub fn run(sc: &Scenario, protocol: ProtocolKind) -> RunOutput {
    let mut sc = sc.clone();
    sc.protocol = protocol;
    sim::run(sc.build(true).expect("scenario builds")).expect("run succeeds")
}

pub fn trace_lines(out: &RunOutput) -> Vec<TraceLine> {
    let text = out.trace.as_deref().expect("trace kept");
    text.lines().map(|l| TraceLine::parse(l).expect("trace line parses")).collect()
}

pub fn parse_path(s: &str) -> Vec<NodeId> {
    s.split(',').map(|n| NodeId(n.parse().expect("node id"))).collect()
}

/// `(S, N1, N3, N6, D)` style names for the nine-node example.
pub fn named(names: &[&str]) -> Vec<NodeId> {
    names
        .iter()
        .map(|n| match *n {
            "S" => NodeId(0),
            "D" => NodeId(8),
            s => NodeId(s.trim_start_matches('N').parse().expect("Nk")),
        })
        .collect()
}

/// The eight S→D paths listed for the nine-node example.
pub fn listed_paths() -> Vec<Vec<NodeId>> {
    [
        "S N1 N3 N6 D",
        "S N1 N4 N6 D",
        "S N1 N4 N5 N7 D",
        "S N1 N4 N7 D",
        "S N2 N5 N7 D",
        "S N2 N4 N6 D",
        "S N2 N5 N4 N6 D",
        "S N2 N5 N4 N7 D",
    ]
    .iter()
    .map(|p| named(&p.split(' ').collect::<Vec<_>>()))
    .collect()
}

pub type Adj = BTreeMap<NodeId, BTreeSet<NodeId>>;

pub fn adjacency(edges: &[(NodeId, NodeId)]) -> Adj {
    let mut adj = Adj::new();
    for &(a, b) in edges {
        adj.entry(a).or_default().insert(b);
        adj.entry(b).or_default().insert(a);
    }
    adj
}

pub fn explicit_edges(sc: &Scenario) -> Vec<(NodeId, NodeId)> {
    match &sc.topology {
        TopologySpec::Explicit { links, .. } => links.clone(),
        TopologySpec::Geometric => panic!("expected an explicit topology"),
    }
}

/// Breadth-first hop distance.
pub fn bfs_hops(adj: &Adj, s: NodeId, d: NodeId) -> Option<usize> {
    let mut dist = BTreeMap::from([(s, 0usize)]);
    let mut q = VecDeque::from([s]);
    while let Some(u) = q.pop_front() {
        if u == d {
            return dist.get(&d).copied();
        }
        for &v in adj.get(&u).into_iter().flatten() {
            if !dist.contains_key(&v) {
                dist.insert(v, dist[&u] + 1);
                q.push_back(v);
            }
        }
    }
    None
}

/// Every simple s→d path with at most `max_hops` hops, by plain DFS.
pub fn all_simple_paths(adj: &Adj, s: NodeId, d: NodeId, max_hops: usize) -> BTreeSet<Vec<NodeId>> {
    fn go(adj: &Adj, d: NodeId, max_hops: usize, path: &mut Vec<NodeId>, out: &mut BTreeSet<Vec<NodeId>>) {
        let u = *path.last().unwrap();
        if u == d {
            out.insert(path.clone());
            return;
        }
        if path.len() > max_hops {
            return;
        }
        for &v in adj.get(&u).into_iter().flatten() {
            if !path.contains(&v) {
                path.push(v);
                go(adj, d, max_hops, path, out);
                path.pop();
            }
        }
    }
    let mut out = BTreeSet::new();
    go(adj, d, max_hops, &mut vec![s], &mut out);
    out
}

/// Node walk of each DATA packet reconstructed from `tx` lines:
/// transmitting nodes in order, then the final addressee.
pub fn data_walks(lines: &[TraceLine]) -> BTreeMap<String, Vec<NodeId>> {
    let mut walks: BTreeMap<String, Vec<NodeId>> = BTreeMap::new();
    for l in lines {
        if l.event != "tx" || l.detail.first().map(String::as_str) != Some("DATA") {
            continue;
        }
        let (Some(id), Some(node)) = (&l.id, l.node) else { continue };
        let to = NodeId(l.field("to").expect("to=").parse().expect("unicast target"));
        let w = walks.entry(id.clone()).or_default();
        if w.is_empty() {
            w.push(node);
        }
        assert_eq!(w.last(), Some(&node), "{id} transmitted by a node that never received it");
        w.push(to);
    }
    walks
}

pub fn has_repeat(walk: &[NodeId]) -> bool {
    let mut seen = BTreeSet::new();
    walk.iter().any(|n| !seen.insert(*n))
}
