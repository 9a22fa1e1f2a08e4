//! Reading trace lines back: `time node event id detail…`.

use std::fmt;

use thiserror::Error;

use crate::NodeId;

#[derive(Debug, Error, PartialEq)]
pub enum TraceError {
    #[error("trace line has {0} fields, need at least 4")]
    TooShort(usize),
    #[error("bad time {0:?}")]
    Time(String),
    #[error("bad node {0:?}")]
    Node(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceLine {
    pub time: f64,
    pub node: Option<NodeId>,
    pub event: String,
    pub id: Option<String>,
    pub detail: Vec<String>,
}

impl TraceLine {
    pub fn parse(line: &str) -> Result<Self, TraceError> {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() < 4 {
            return Err(TraceError::TooShort(f.len()));
        }
        let time: f64 = f[0].parse().map_err(|_| TraceError::Time(f[0].into()))?;
        if !(time >= 0.0 && time.is_finite()) {
            return Err(TraceError::Time(f[0].into()));
        }
        let node = match f[1] {
            "-" => None,
            s => Some(NodeId(s.parse().map_err(|_| TraceError::Node(s.into()))?)),
        };
        Ok(TraceLine {
            time,
            node,
            event: f[2].to_string(),
            id: (f[3] != "-").then(|| f[3].to_string()),
            detail: f[4..].iter().map(|s| s.to_string()).collect(),
        })
    }

    /// Value of a `key=value` detail field.
    pub fn field(&self, key: &str) -> Option<&str> {
        self.detail.iter().find_map(|d| d.strip_prefix(key)?.strip_prefix('='))
    }
}

impl fmt::Display for TraceLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.9} ", self.time)?;
        match self.node {
            Some(n) => write!(f, "{n}")?,
            None => f.write_str("-")?,
        }
        write!(f, " {} {}", self.event, self.id.as_deref().unwrap_or("-"))?;
        for d in &self.detail {
            write!(f, " {d}")?;
        }
        Ok(())
    }
}

/// Parses a whole trace, skipping blank lines.
pub fn parse_trace(text: &str) -> Result<Vec<TraceLine>, (usize, TraceError)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| TraceLine::parse(l).map_err(|e| (i + 1, e)))
        .collect()
}
