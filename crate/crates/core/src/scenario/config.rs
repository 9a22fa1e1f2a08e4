//! Scenario files: flat `key = value` lines, `#` comments.
//!
//! ```text
//! node_count = 20
//! area = 800 600
//! pause_time = 0
//! protocol = maodv
//! flows = random 5 512 0.25
//! flow = 0 7 512 0.25 1 120      # explicit flows replace the generator
//! topology = explicit            # use link/link_down/link_up instead of RWP
//! link = 0 1
//! link_down = 30 0 1
//! kill = 40 3
//! position = 2 100 250           # pin a node (stationary)
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::energy::EnergyParams;
use crate::engine::rng_stream;
use crate::mobility::{MobilityParams, Point, Schedule};
use crate::proto::ProtocolParams;
use crate::radio::{ExplicitLinks, LinkChange, RadioParams, Topology};
use crate::sim::{ProtocolKind, SimSetup};
use crate::traffic::{FlowGen, FlowSpec};
use crate::NodeId;

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: `{key}` given twice")]
    Duplicate { line: usize, key: String },
    #[error("line {line}: {field}: {msg}")]
    Value { line: usize, field: String, msg: String },
    #[error("{field}: {msg}")]
    Invalid { field: String, msg: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum FlowSource {
    Random(FlowGen),
    Explicit(Vec<FlowSpec>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum TopologySpec {
    /// Random waypoint inside the area, with optional pinned nodes.
    Geometric,
    Explicit { links: Vec<(NodeId, NodeId)>, changes: Vec<LinkChange> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub node_count: usize,
    pub mobility: MobilityParams,
    pub radio: RadioParams,
    pub energy: EnergyParams,
    pub protocol: ProtocolKind,
    pub params: ProtocolParams,
    pub flows: FlowSource,
    pub topology: TopologySpec,
    pub positions: BTreeMap<NodeId, Point>,
    pub kills: Vec<(f64, NodeId)>,
    pub duration: f64,
    pub seed: u64,
    pub energy_sample_interval: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            node_count: 20,
            mobility: MobilityParams::default(),
            radio: RadioParams::default(),
            energy: EnergyParams::default(),
            protocol: ProtocolKind::Maodv,
            params: ProtocolParams::default(),
            flows: FlowSource::Random(FlowGen::default()),
            topology: TopologySpec::Geometric,
            positions: BTreeMap::new(),
            kills: Vec::new(),
            duration: 120.0,
            seed: 1,
            energy_sample_interval: 1.0,
        }
    }
}

const REPEATABLE: [&str; 6] = ["flow", "link", "link_down", "link_up", "kill", "position"];

fn words(v: &str) -> Vec<&str> {
    v.split_whitespace().collect()
}

fn num<T: std::str::FromStr>(field: &str, s: &str) -> Result<T, String> {
    s.parse().map_err(|_| format!("cannot parse {s:?} for {field}"))
}

fn arity<'a>(v: &'a str, n: usize, shape: &str) -> Result<Vec<&'a str>, String> {
    let w = words(v);
    if w.len() != n {
        return Err(format!("expected `{shape}`"));
    }
    Ok(w)
}

fn flag(s: &str) -> Result<bool, String> {
    match s {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(format!("expected true or false, got {s:?}")),
    }
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let mut sc = Scenario::default();
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        let mut explicit_flows: Vec<FlowSpec> = Vec::new();
        let mut random_set = false;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or(ScenarioError::Syntax { line })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(ScenarioError::Syntax { line });
            }
            if !REPEATABLE.contains(&key) && seen.insert(key.to_string(), line).is_some() {
                return Err(ScenarioError::Duplicate { line, key: key.into() });
            }
            let wrap = |msg: String| ScenarioError::Value { line, field: key.into(), msg };
            match key {
                "flow" => {
                    let w = arity(value, 6, "flow = src dest payload interval start stop").map_err(wrap)?;
                    explicit_flows.push(FlowSpec {
                        src: NodeId(num("src", w[0]).map_err(wrap)?),
                        dest: NodeId(num("dest", w[1]).map_err(wrap)?),
                        payload: num("payload", w[2]).map_err(wrap)?,
                        interval: num("interval", w[3]).map_err(wrap)?,
                        start: num("start", w[4]).map_err(wrap)?,
                        stop: num("stop", w[5]).map_err(wrap)?,
                    });
                }
                "flows" => {
                    let w = arity(value, 4, "flows = random count payload interval").map_err(wrap)?;
                    if w[0] != "random" {
                        return Err(wrap(format!("unknown generator {:?}", w[0])));
                    }
                    sc.flows = FlowSource::Random(FlowGen {
                        count: num("count", w[1]).map_err(wrap)?,
                        payload: num("payload", w[2]).map_err(wrap)?,
                        interval: num("interval", w[3]).map_err(wrap)?,
                    });
                    random_set = true;
                }
                _ => sc.set_at(key, value, line)?,
            }
        }
        if !explicit_flows.is_empty() {
            if random_set {
                return Err(ScenarioError::Invalid {
                    field: "flows".into(),
                    msg: "both `flows = random …` and explicit `flow` lines given".into(),
                });
            }
            sc.flows = FlowSource::Explicit(explicit_flows);
        }
        sc.validate()?;
        Ok(sc)
    }

    /// Sets one scalar key from its textual value, as a scenario line would.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ScenarioError> {
        self.set_at(key, value, 0)
    }

    fn set_at(&mut self, key: &str, value: &str, line: usize) -> Result<(), ScenarioError> {
        let wrap = |msg: String| ScenarioError::Value { line, field: key.into(), msg };
        let p = &mut self.params;
        match key {
            "node_count" => self.node_count = num(key, value).map_err(wrap)?,
            "area" => {
                let w = arity(value, 2, "area = width height").map_err(wrap)?;
                self.mobility.width = num("width", w[0]).map_err(wrap)?;
                self.mobility.height = num("height", w[1]).map_err(wrap)?;
            }
            "range" => self.radio.range = num(key, value).map_err(wrap)?,
            "bandwidth" => self.radio.bandwidth = num(key, value).map_err(wrap)?,
            "propagation_delay" => self.radio.propagation_delay = num(key, value).map_err(wrap)?,
            "loss_prob" => self.radio.loss_prob = num(key, value).map_err(wrap)?,
            "v_min" => self.mobility.v_min = num(key, value).map_err(wrap)?,
            "v_max" => self.mobility.v_max = num(key, value).map_err(wrap)?,
            "pause_time" => self.mobility.pause_time = num(key, value).map_err(wrap)?,
            "p_tx" => self.energy.p_tx = num(key, value).map_err(wrap)?,
            "p_rx" => self.energy.p_rx = num(key, value).map_err(wrap)?,
            "initial_energy" => self.energy.initial = num(key, value).map_err(wrap)?,
            "protocol" => self.protocol = value.parse().map_err(wrap)?,
            "rreq_retries" => p.rreq_retries = num(key, value).map_err(wrap)?,
            "hello_interval" => p.hello_interval = num(key, value).map_err(wrap)?,
            "allowed_hello_loss" => p.allowed_hello_loss = num(key, value).map_err(wrap)?,
            "route_lifetime" => p.route_lifetime = num(key, value).map_err(wrap)?,
            "rreq_id_cache_ttl" => p.rreq_id_cache_ttl = num(key, value).map_err(wrap)?,
            "rreq_timeout" => p.rreq_timeout = num(key, value).map_err(wrap)?,
            "queue_capacity" => p.queue_capacity = num(key, value).map_err(wrap)?,
            "n0" => p.n0 = num(key, value).map_err(wrap)?,
            "s0" => p.s0 = num(key, value).map_err(wrap)?,
            "rreq_slack" => p.rreq_slack = num(key, value).map_err(wrap)?,
            "rreq_copy_cap" => p.rreq_copy_cap = num(key, value).map_err(wrap)?,
            "net_diameter" => p.net_diameter = num(key, value).map_err(wrap)?,
            "degree_tiebreak" => p.degree_tiebreak = flag(value).map_err(wrap)?,
            "duration" => self.duration = num(key, value).map_err(wrap)?,
            "seed" => self.seed = num(key, value).map_err(wrap)?,
            "energy_sample_interval" => self.energy_sample_interval = num(key, value).map_err(wrap)?,
            "topology" => {
                self.topology = match value {
                    "geometric" => TopologySpec::Geometric,
                    "explicit" => match &self.topology {
                        TopologySpec::Explicit { .. } => self.topology.clone(),
                        TopologySpec::Geometric => TopologySpec::Explicit {
                            links: Vec::new(),
                            changes: Vec::new(),
                        },
                    },
                    _ => return Err(wrap(format!("expected geometric or explicit, got {value:?}"))),
                }
            }
            "link" | "link_down" | "link_up" => {
                let (a, b, at) = if key == "link" {
                    let w = arity(value, 2, "link = a b").map_err(wrap)?;
                    (w[0], w[1], None)
                } else {
                    let w = arity(value, 3, &format!("{key} = time a b")).map_err(wrap)?;
                    (w[1], w[2], Some(num::<f64>("time", w[0]).map_err(wrap)?))
                };
                let a = NodeId(num("a", a).map_err(wrap)?);
                let b = NodeId(num("b", b).map_err(wrap)?);
                if a == b {
                    return Err(wrap("a link needs two distinct nodes".into()));
                }
                if let TopologySpec::Geometric = self.topology {
                    self.topology = TopologySpec::Explicit {
                        links: Vec::new(),
                        changes: Vec::new(),
                    };
                }
                if let TopologySpec::Explicit { links, changes } = &mut self.topology {
                    match at {
                        None => links.push((a, b)),
                        Some(at) => changes.push(LinkChange {
                            at,
                            a,
                            b,
                            up: key == "link_up",
                        }),
                    }
                }
            }
            "kill" => {
                let w = arity(value, 2, "kill = time node").map_err(wrap)?;
                self.kills
                    .push((num("time", w[0]).map_err(wrap)?, NodeId(num("node", w[1]).map_err(wrap)?)));
            }
            "position" => {
                let w = arity(value, 3, "position = node x y").map_err(wrap)?;
                let node = NodeId(num("node", w[0]).map_err(wrap)?);
                let at = Point::new(num("x", w[1]).map_err(wrap)?, num("y", w[2]).map_err(wrap)?);
                self.positions.insert(node, at);
            }
            _ => {
                return Err(ScenarioError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let inv = |field: &str, msg: String| Err(ScenarioError::Invalid { field: field.into(), msg });
        if self.node_count < 2 {
            return inv("node_count", format!("must be at least 2, got {}", self.node_count));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return inv("duration", format!("must be positive, got {}", self.duration));
        }
        if !(self.energy_sample_interval > 0.0 && self.energy_sample_interval.is_finite()) {
            return inv("energy_sample_interval", format!("must be positive, got {}", self.energy_sample_interval));
        }
        let field_of = |e: &dyn std::fmt::Display, fields: &[&str]| {
            let s = e.to_string();
            let f = fields.iter().find(|f| s.contains(*f)).copied().unwrap_or(fields[0]);
            ScenarioError::Invalid { field: f.into(), msg: s }
        };
        self.mobility
            .validate()
            .map_err(|e| field_of(&e, &["v_min", "v_max", "pause_time", "area"]))?;
        self.radio
            .validate()
            .map_err(|e| field_of(&e, &["range", "bandwidth", "propagation", "loss"]))?;
        self.energy.validate().map_err(|e| field_of(&e, &["p_tx", "p_rx", "initial"]))?;
        self.params.validate().map_err(|e| {
            field_of(
                &e,
                &[
                    "n0",
                    "s0",
                    "rreq_retries",
                    "hello_interval",
                    "allowed_hello_loss",
                    "route_lifetime",
                    "rreq_id_cache_ttl",
                    "rreq_timeout",
                    "queue_capacity",
                    "rreq_copy_cap",
                    "net_diameter",
                ],
            )
        })?;
        let n = self.node_count;
        let in_net = |node: NodeId| node.index() < n;
        match &self.flows {
            FlowSource::Random(g) => {
                if g.payload == 0 || !(g.interval > 0.0 && g.interval.is_finite()) {
                    return inv("flows", "payload and interval must be positive".into());
                }
                if g.count > n * (n - 1) {
                    return inv("flows", format!("{} flows need more than {n} nodes", g.count));
                }
            }
            FlowSource::Explicit(fs) => {
                for (i, f) in fs.iter().enumerate() {
                    if let Err(e) = f.validate(n) {
                        return inv("flow", format!("flow #{}: {e}", i + 1));
                    }
                }
            }
        }
        if let TopologySpec::Explicit { links, changes } = &self.topology {
            if links.is_empty() && changes.is_empty() {
                return inv("topology", "explicit topology without any `link` lines".into());
            }
            for &(a, b) in links.iter().chain(changes.iter().map(|c| (c.a, c.b)).collect::<Vec<_>>().iter()) {
                if !in_net(a) || !in_net(b) {
                    return inv("link", format!("link {a}-{b} names a node outside 0..{n}"));
                }
            }
            for c in changes {
                if !(c.at >= 0.0 && c.at.is_finite()) {
                    return inv("link", format!("change time {} must be >= 0", c.at));
                }
            }
        }
        for &(t, node) in &self.kills {
            if !in_net(node) || !(t >= 0.0 && t.is_finite()) {
                return inv("kill", format!("kill of node {node} at {t} is out of bounds"));
            }
        }
        for (&node, p) in &self.positions {
            let inside = p.x >= 0.0 && p.y >= 0.0 && p.x <= self.mobility.width && p.y <= self.mobility.height;
            if !in_net(node) || !inside {
                return inv("position", format!("node {node} at ({}, {}) is outside the network or area", p.x, p.y));
            }
        }
        Ok(())
    }

    /// Resolves mobility and flows from the seed. Both protocols get the
    /// same draws because the streams depend only on the seed and a label.
    pub fn build(&self, keep_trace: bool) -> Result<SimSetup, ScenarioError> {
        self.validate()?;
        let n = self.node_count;
        let topology = match &self.topology {
            TopologySpec::Geometric => Topology::Geometric(
                (0..n as u32)
                    .map(|i| {
                        let node = NodeId(i);
                        let mut rng = rng_stream(self.seed, &format!("mobility/{i}"));
                        match self.positions.get(&node) {
                            Some(&p) => Schedule::stationary(node, p),
                            None => Schedule::generate(node, &self.mobility, self.duration, &mut rng),
                        }
                    })
                    .collect(),
            ),
            TopologySpec::Explicit { links, changes } => {
                let mut e = ExplicitLinks::new(n);
                for &(a, b) in links {
                    e.add_link(a, b);
                }
                for c in changes {
                    e.add_change(*c);
                }
                Topology::Explicit(e)
            }
        };
        let flows = match &self.flows {
            FlowSource::Explicit(f) => f.clone(),
            FlowSource::Random(g) => g
                .generate(n, self.duration, &mut rng_stream(self.seed, "traffic"))
                .map_err(|e| ScenarioError::Invalid {
                    field: "flows".into(),
                    msg: e.to_string(),
                })?,
        };
        Ok(SimSetup {
            protocol: self.protocol,
            params: self.params.clone(),
            radio: self.radio.clone(),
            energy: self.energy.clone(),
            topology,
            flows,
            kills: self.kills.clone(),
            duration: self.duration,
            seed: self.seed,
            energy_sample_interval: self.energy_sample_interval,
            keep_trace,
        })
    }

    /// Every parameter, defaults included, in scenario-file syntax.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let p = &self.params;
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("node_count", self.node_count.to_string());
        kv("area", format!("{} {}", self.mobility.width, self.mobility.height));
        kv("v_min", self.mobility.v_min.to_string());
        kv("v_max", self.mobility.v_max.to_string());
        kv("pause_time", self.mobility.pause_time.to_string());
        kv("range", self.radio.range.to_string());
        kv("bandwidth", self.radio.bandwidth.to_string());
        kv("propagation_delay", self.radio.propagation_delay.to_string());
        kv("loss_prob", self.radio.loss_prob.to_string());
        kv("p_tx", self.energy.p_tx.to_string());
        kv("p_rx", self.energy.p_rx.to_string());
        kv("initial_energy", self.energy.initial.to_string());
        kv("protocol", self.protocol.to_string());
        kv("rreq_retries", p.rreq_retries.to_string());
        kv("hello_interval", p.hello_interval.to_string());
        kv("allowed_hello_loss", p.allowed_hello_loss.to_string());
        kv("route_lifetime", p.route_lifetime.to_string());
        kv("rreq_id_cache_ttl", p.rreq_id_cache_ttl.to_string());
        kv("rreq_timeout", p.rreq_timeout.to_string());
        kv("queue_capacity", p.queue_capacity.to_string());
        kv("n0", p.n0.to_string());
        kv("s0", p.s0.to_string());
        kv("rreq_slack", p.rreq_slack.to_string());
        kv("rreq_copy_cap", p.rreq_copy_cap.to_string());
        kv("net_diameter", p.net_diameter.to_string());
        kv("degree_tiebreak", p.degree_tiebreak.to_string());
        kv("duration", self.duration.to_string());
        kv("seed", self.seed.to_string());
        kv("energy_sample_interval", self.energy_sample_interval.to_string());
        match &self.flows {
            FlowSource::Random(g) => kv("flows", format!("random {} {} {}", g.count, g.payload, g.interval)),
            FlowSource::Explicit(fs) => {
                for f in fs {
                    kv(
                        "flow",
                        format!("{} {} {} {} {} {}", f.src, f.dest, f.payload, f.interval, f.start, f.stop),
                    );
                }
            }
        }
        match &self.topology {
            TopologySpec::Geometric => kv("topology", "geometric".into()),
            TopologySpec::Explicit { links, changes } => {
                kv("topology", "explicit".into());
                for (a, b) in links {
                    kv("link", format!("{a} {b}"));
                }
                for c in changes {
                    kv(if c.up { "link_up" } else { "link_down" }, format!("{} {} {}", c.at, c.a, c.b));
                }
            }
        }
        for (n, p) in &self.positions {
            kv("position", format!("{n} {} {}", p.x, p.y));
        }
        for (t, n) in &self.kills {
            kv("kill", format!("{t} {n}"));
        }
        s
    }
}
