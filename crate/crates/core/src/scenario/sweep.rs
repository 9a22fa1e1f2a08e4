//! Parameter sweeps: one axis × several seeds × both protocols, run in parallel.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use super::report::ResultRow;
use super::{Scenario, ScenarioError};
use crate::sim::{self, ProtocolKind, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    PauseTime,
    NodeCount,
}

impl Axis {
    pub fn key(self) -> &'static str {
        match self {
            Axis::PauseTime => "pause_time",
            Axis::NodeCount => "node_count",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Axis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pause_time" => Ok(Axis::PauseTime),
            "node_count" => Ok(Axis::NodeCount),
            _ => Err(format!("unknown axis `{s}` (pause_time, node_count)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("{axis} = {value}: {source}")]
    Point {
        axis: Axis,
        value: f64,
        #[source]
        source: ScenarioError,
    },
    #[error("{axis} = {value}, seed {seed}, {protocol}: {source}")]
    Run {
        axis: Axis,
        value: f64,
        seed: u64,
        protocol: ProtocolKind,
        #[source]
        source: SimError,
    },
    #[error("sweep needs at least one value and one seed")]
    Empty,
}

#[derive(Debug, Clone)]
pub struct Sweep {
    pub name: String,
    pub axis: Axis,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Sweep {
    /// Scenario for one point; the protocol is left as in the base.
    pub fn point(&self, base: &Scenario, value: f64, seed: u64) -> Result<Scenario, SweepError> {
        let mut s = base.clone();
        let err = |source| SweepError::Point { axis: self.axis, value, source };
        s.set(self.axis.key(), &value.to_string()).map_err(err)?;
        s.seed = seed;
        s.validate().map_err(err)?;
        Ok(s)
    }

    /// Validates every point up front, then runs them all.
    /// Rows come back ordered by (value, seed, protocol).
    pub fn run(&self, base: &Scenario) -> Result<Vec<ResultRow>, SweepError> {
        if self.values.is_empty() || self.seeds.is_empty() {
            return Err(SweepError::Empty);
        }
        let mut jobs = Vec::new();
        for &v in &self.values {
            for &seed in &self.seeds {
                let sc = self.point(base, v, seed)?;
                for p in ProtocolKind::BOTH {
                    jobs.push((v, seed, p, sc.clone()));
                }
            }
        }
        jobs.into_par_iter()
            .map(|(value, seed, protocol, mut sc)| {
                sc.protocol = protocol;
                let err = |source| SweepError::Run { axis: self.axis, value, seed, protocol, source };
                let setup = sc
                    .build(false)
                    .map_err(|source| SweepError::Point { axis: self.axis, value, source })?;
                let out = sim::run(setup).map_err(err)?;
                Ok(ResultRow::from_report(
                    &self.name,
                    self.axis.key(),
                    value,
                    seed,
                    &protocol.to_string(),
                    &out.report,
                ))
            })
            .collect()
    }
}

/// Parses `a,b,c` or `start:step:end` (inclusive).
pub fn parse_values(s: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |x: &str| match x.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("bad number `{x}`")),
    };
    if parts.len() == 3 {
        let (a, step, b) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(step > 0.0) || b < a {
            return Err(format!("bad range `{s}`"));
        }
        let n = ((b - a) / step + 1e-9).floor() as usize;
        if n > 100_000 {
            return Err(format!("range `{s}` is too long"));
        }
        return Ok((0..=n).map(|i| a + i as f64 * step).collect());
    }
    nonempty(s, s.split(',').filter(|x| !x.trim().is_empty()).map(num).collect())
}

fn nonempty<T>(s: &str, parsed: Result<Vec<T>, String>) -> Result<Vec<T>, String> {
    parsed.and_then(|v| if v.is_empty() { Err(format!("no values in `{s}`")) } else { Ok(v) })
}

/// Parses a seed list `1,2,3` or a range `1..=10` / `1..11`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let num = |x: &str| x.trim().parse::<u64>().map_err(|_| format!("bad seed `{x}`"));
    if let Some((a, b)) = s.split_once("..=") {
        let (a, b) = (num(a)?, num(b)?);
        return (a <= b && b - a < 100_000).then(|| (a..=b).collect()).ok_or(format!("bad range `{s}`"));
    }
    if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (num(a)?, num(b)?);
        return (a < b && b - a <= 100_000).then(|| (a..b).collect()).ok_or(format!("bad range `{s}`"));
    }
    nonempty(s, s.split(',').filter(|x| !x.trim().is_empty()).map(num).collect())
}
