//! Long-format results CSV: reading, writing and summarising.

use std::collections::BTreeMap;
use std::io::{self, Write};

use thiserror::Error;

use crate::metrics::{fmt_f, EnergySample, MetricsReport};

pub const KEY_FIELDS: [&str; 5] = ["scenario", "axis", "value", "seed", "protocol"];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("missing column `{0}`")]
    MissingColumn(&'static str),
    #[error("record {record}: bad {field} value {value:?}")]
    BadValue { record: usize, field: String, value: String },
}

/// One run's row in the long-format table.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scenario: String,
    pub axis: String,
    pub value: f64,
    pub seed: u64,
    pub protocol: String,
    /// Metric name and value; `None` where the metric is undefined.
    pub metrics: Vec<(String, Option<f64>)>,
}

impl ResultRow {
    pub fn from_report(scenario: &str, axis: &str, value: f64, seed: u64, protocol: &str, r: &MetricsReport) -> Self {
        let metrics = MetricsReport::csv_fields()
            .into_iter()
            .zip(r.csv_values())
            .map(|(k, v)| (k, v.parse().ok()))
            .collect();
        ResultRow {
            scenario: scenario.into(),
            axis: axis.into(),
            value,
            seed,
            protocol: protocol.into(),
            metrics,
        }
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|(k, _)| k == name).and_then(|(_, v)| *v)
    }
}

/// Writes `# `-prefixed header lines followed by the table.
pub fn write_results<W: Write>(mut w: W, header: &str, rows: &[ResultRow]) -> Result<(), ReportError> {
    for line in header.lines() {
        writeln!(w, "# {line}")?;
    }
    let mut cw = csv::Writer::from_writer(w);
    let metric_names: Vec<String> = rows
        .first()
        .map(|r| r.metrics.iter().map(|(k, _)| k.clone()).collect())
        .unwrap_or_else(MetricsReport::csv_fields);
    let mut head: Vec<String> = KEY_FIELDS.iter().map(|s| s.to_string()).collect();
    head.extend(metric_names);
    cw.write_record(&head)?;
    for r in rows {
        let mut rec = vec![r.scenario.clone(), r.axis.clone(), fmt_f(r.value), r.seed.to_string(), r.protocol.clone()];
        rec.extend(r.metrics.iter().map(|(_, v)| v.map_or_else(|| "NA".to_string(), fmt_f)));
        cw.write_record(&rec)?;
    }
    cw.flush()?;
    Ok(())
}

pub fn parse_results(text: &str) -> Result<Vec<ResultRow>, ReportError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    let col = |name: &'static str| headers.iter().position(|h| h == name).ok_or(ReportError::MissingColumn(name));
    let idx = [col("scenario")?, col("axis")?, col("value")?, col("seed")?, col("protocol")?];
    let metric_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| !idx.contains(i))
        .map(|(i, h)| (i, h.to_string()))
        .collect();
    let mut out = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let get = |i: usize| rec.get(i).unwrap_or("");
        let bad = |field: &str, value: &str| ReportError::BadValue {
            record: n + 1,
            field: field.into(),
            value: value.into(),
        };
        let value: f64 = get(idx[2]).parse().map_err(|_| bad("value", get(idx[2])))?;
        let seed: u64 = get(idx[3]).parse().map_err(|_| bad("seed", get(idx[3])))?;
        let mut metrics = Vec::with_capacity(metric_cols.len());
        for (i, name) in &metric_cols {
            let cell = get(*i);
            let v = match cell {
                "NA" | "" => None,
                s => Some(s.parse::<f64>().map_err(|_| bad(name, s))?),
            };
            metrics.push((name.clone(), v));
        }
        out.push(ResultRow {
            scenario: get(idx[0]).into(),
            axis: get(idx[1]).into(),
            value,
            seed,
            protocol: get(idx[4]).into(),
            metrics,
        });
    }
    Ok(out)
}

/// Mean and sample standard deviation of one metric at one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub axis: String,
    pub value: f64,
    pub protocol: String,
    pub metric: String,
    /// Runs where the metric was defined.
    pub n: usize,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
}

pub fn mean_sd(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() == 1 {
        0.0
    } else {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    (Some(mean), Some(sd))
}

fn value_key(v: f64) -> u64 {
    // total order on the axis value that also works as a map key
    let b = v.to_bits();
    if v.is_sign_negative() {
        !b
    } else {
        b | (1 << 63)
    }
}

/// Groups by (axis, value, protocol) and summarises every metric.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, u64, String), (f64, BTreeMap<String, Vec<f64>>, Vec<String>)> = BTreeMap::new();
    for r in rows {
        let g = groups
            .entry((r.axis.clone(), value_key(r.value), r.protocol.clone()))
            .or_insert_with(|| (r.value, BTreeMap::new(), Vec::new()));
        for (k, v) in &r.metrics {
            if !g.2.contains(k) {
                g.2.push(k.clone());
            }
            let xs = g.1.entry(k.clone()).or_default();
            if let Some(v) = v {
                xs.push(*v);
            }
        }
    }
    let mut out = Vec::new();
    for ((axis, _, protocol), (value, metrics, order)) in groups {
        for m in order {
            let xs = &metrics[&m];
            let (mean, sd) = mean_sd(xs);
            out.push(SummaryRow {
                axis: axis.clone(),
                value,
                protocol: protocol.clone(),
                metric: m,
                n: xs.len(),
                mean,
                sd,
            });
        }
    }
    out
}

/// Per-seed difference `maodv − aodv`, summarised per sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedDelta {
    pub axis: String,
    pub value: f64,
    pub metric: String,
    pub pairs: usize,
    pub mean_delta: Option<f64>,
    pub sd: Option<f64>,
}

pub fn paired_deltas(rows: &[ResultRow]) -> Vec<PairedDelta> {
    let mut by_key: BTreeMap<(String, String, u64, u64), BTreeMap<&str, &ResultRow>> = BTreeMap::new();
    for r in rows {
        by_key
            .entry((r.scenario.clone(), r.axis.clone(), value_key(r.value), r.seed))
            .or_default()
            .insert(r.protocol.as_str(), r);
    }
    let mut acc: BTreeMap<(String, u64, usize), (f64, String, Vec<f64>)> = BTreeMap::new();
    for ((_, axis, vk, _), protos) in &by_key {
        let (Some(a), Some(m)) = (protos.get("aodv"), protos.get("maodv")) else { continue };
        for (i, (name, mv)) in m.metrics.iter().enumerate() {
            let e = acc
                .entry((axis.clone(), *vk, i))
                .or_insert_with(|| (m.value, name.clone(), Vec::new()));
            if let (Some(x), Some(y)) = (*mv, a.metric(name)) {
                e.2.push(x - y);
            }
        }
    }
    acc.into_iter()
        .map(|((axis, _, _), (value, metric, d))| {
            let (mean_delta, sd) = mean_sd(&d);
            PairedDelta {
                axis,
                value,
                metric,
                pairs: d.len(),
                mean_delta,
                sd,
            }
        })
        .collect()
}

pub fn write_summary<W: Write>(w: W, rows: &[SummaryRow]) -> Result<(), ReportError> {
    let mut cw = csv::Writer::from_writer(w);
    cw.write_record(["axis", "value", "protocol", "metric", "n", "mean", "sd"])?;
    let opt = |o: Option<f64>| o.map_or_else(|| "NA".to_string(), fmt_f);
    for r in rows {
        cw.write_record([
            r.axis.clone(),
            fmt_f(r.value),
            r.protocol.clone(),
            r.metric.clone(),
            r.n.to_string(),
            opt(r.mean),
            opt(r.sd),
        ])?;
    }
    cw.flush()?;
    Ok(())
}

pub fn write_paired<W: Write>(w: W, rows: &[PairedDelta]) -> Result<(), ReportError> {
    let mut cw = csv::Writer::from_writer(w);
    cw.write_record(["axis", "value", "metric", "pairs", "mean_delta_maodv_minus_aodv", "sd"])?;
    let opt = |o: Option<f64>| o.map_or_else(|| "NA".to_string(), fmt_f);
    for r in rows {
        cw.write_record([
            r.axis.clone(),
            fmt_f(r.value),
            r.metric.clone(),
            r.pairs.to_string(),
            opt(r.mean_delta),
            opt(r.sd),
        ])?;
    }
    cw.flush()?;
    Ok(())
}

/// Cumulative energy over time, one block of rows per protocol.
pub fn write_energy<W: Write>(w: W, runs: &[(String, Vec<EnergySample>)]) -> Result<(), ReportError> {
    let mut cw = csv::Writer::from_writer(w);
    cw.write_record(["protocol", "time", "network_j", "routing_j"])?;
    for (protocol, series) in runs {
        for s in series {
            cw.write_record([protocol.clone(), fmt_f(s.t), fmt_f(s.network_j), fmt_f(s.routing_j)])?;
        }
    }
    cw.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(protocol: &str, seed: u64, pdr: Option<f64>) -> ResultRow {
        ResultRow {
            scenario: "s".into(),
            axis: "pause_time".into(),
            value: 40.0,
            seed,
            protocol: protocol.into(),
            metrics: vec![("pdr".into(), pdr), ("nrl".into(), None)],
        }
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![row("aodv", 1, Some(0.5)), row("maodv", 1, Some(0.75))];
        let mut buf = Vec::new();
        write_results(&mut buf, "node_count = 20\nseed = 1", &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# node_count = 20\n"));
        assert_eq!(parse_results(&text).unwrap(), rows);
    }

    #[test]
    fn single_seed_sd_is_zero() {
        let s = summarize(&[row("aodv", 1, Some(0.5))]);
        let pdr = s.iter().find(|r| r.metric == "pdr").unwrap();
        assert_eq!((pdr.mean, pdr.sd, pdr.n), (Some(0.5), Some(0.0), 1));
        let nrl = s.iter().find(|r| r.metric == "nrl").unwrap();
        assert_eq!((nrl.mean, nrl.n), (None, 0));
    }

    #[test]
    fn mean_and_sample_sd() {
        let (m, sd) = mean_sd(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, Some(2.5));
        assert!((sd.unwrap() - 1.2909944487358056).abs() < 1e-12);
    }

    #[test]
    fn paired_differences() {
        let rows = vec![
            row("aodv", 1, Some(0.5)),
            row("maodv", 1, Some(0.75)),
            row("aodv", 2, Some(0.5)),
            row("maodv", 2, Some(0.25)),
        ];
        let d = paired_deltas(&rows);
        let pdr = d.iter().find(|r| r.metric == "pdr").unwrap();
        assert_eq!((pdr.pairs, pdr.mean_delta), (2, Some(0.0)));
    }

    #[test]
    fn missing_column_is_reported() {
        assert!(matches!(parse_results("a,b\n1,2\n"), Err(ReportError::MissingColumn("scenario"))));
        let bad = "scenario,axis,value,seed,protocol,pdr\ns,x,abc,1,aodv,0.5\n";
        assert!(matches!(parse_results(bad), Err(ReportError::BadValue { .. })));
    }
}
