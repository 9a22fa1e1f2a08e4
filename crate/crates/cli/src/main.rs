use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use manet_core::scenario::report::{self, ResultRow};
use manet_core::scenario::sweep::{parse_seeds, parse_values, Axis, Sweep};
use manet_core::scenario::Scenario;
use manet_core::sim::{self, ProtocolKind};

#[derive(Parser)]
#[command(name = "manet-sim", version, about = "Compare AODV and multipath M-AODV on identical MANET scenarios")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Aodv,
    Maodv,
    Both,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario and print its metrics.
    Run {
        scenario: PathBuf,
        /// Overrides the protocol in the file.
        #[arg(long, value_enum)]
        protocol: Option<Which>,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the event trace here (`.aodv`/`.maodv` appended when running both).
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write a results CSV row per protocol.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Write the cumulative energy series.
        #[arg(long)]
        energy_csv: Option<PathBuf>,
    },
    /// Sweep one parameter over several seeds, running both protocols at every point.
    Sweep {
        scenario: PathBuf,
        #[arg(long)]
        axis: Axis,
        /// `0,20,40` or `start:step:end`.
        #[arg(long)]
        values: String,
        /// `1,2,3` or `1..=10`.
        #[arg(long, default_value = "1..=10")]
        seeds: String,
        /// Long-format results CSV (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Mean/sd summary CSV.
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Worker threads (defaults to all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Check scenario files without running them.
    Validate {
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
        /// Print the fully resolved scenario.
        #[arg(long)]
        print: bool,
    },
    /// Summarise one or more results CSVs.
    Report {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        /// Per-seed M-AODV minus AODV differences instead of per-protocol means.
        #[arg(long)]
        paired: bool,
    },
}

fn load(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Scenario::parse(&text).with_context(|| format!("in {}", path.display()))
}

fn scenario_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| "scenario".into(), |s| s.to_string_lossy().into_owned())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn protocols(which: Which) -> Vec<ProtocolKind> {
    match which {
        Which::Aodv => vec![ProtocolKind::Aodv],
        Which::Maodv => vec![ProtocolKind::Maodv],
        Which::Both => ProtocolKind::BOTH.to_vec(),
    }
}

fn run(
    path: &Path,
    which: Option<Which>,
    seed: Option<u64>,
    trace: Option<PathBuf>,
    csv: Option<PathBuf>,
    energy_csv: Option<PathBuf>,
) -> Result<()> {
    let mut sc = load(path)?;
    if let Some(s) = seed {
        sc.seed = s;
    }
    let protos = match which {
        Some(w) => protocols(w),
        None => vec![sc.protocol],
    };
    let name = scenario_name(path);
    let mut rows = Vec::new();
    let mut energy = Vec::new();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for p in &protos {
        sc.protocol = *p;
        let setup = sc.build(trace.is_some())?;
        let res = sim::run(setup).with_context(|| format!("{p} run"))?;
        let r = &res.report;
        writeln!(out, "[{p}] seed {} duration {}s", sc.seed, sc.duration)?;
        writeln!(
            out,
            "  sent {}  delivered {}  dropped {}  in flight {}",
            r.sent,
            r.delivered,
            r.dropped(),
            r.in_flight
        )?;
        let opt = |o: Option<f64>, d: usize| o.map_or_else(|| "n/a".into(), |x| format!("{x:.d$}"));
        writeln!(
            out,
            "  pdr {:.4}  loss {:.4}  throughput {:.3} kb/s  delay {} s  nrl {}",
            r.pdr,
            r.loss_ratio,
            r.throughput_kbps,
            opt(r.avg_delay, 5),
            opt(r.nrl, 3)
        )?;
        writeln!(
            out,
            "  energy {:.4} J (routing {:.4} J)  control tx {}  data tx {}",
            r.network_energy_j, r.routing_energy_j, r.control_transmissions, r.data_transmissions
        )?;
        let drops: Vec<String> =
            r.drop_breakdown.iter().filter(|(_, &n)| n > 0).map(|(c, n)| format!("{c}={n}")).collect();
        if !drops.is_empty() {
            writeln!(out, "  drops {}", drops.join(" "))?;
        }
        writeln!(out, "  trace sha256 {}", res.trace_digest)?;
        if let (Some(t), Some(text)) = (&trace, &res.trace) {
            let target = if protos.len() > 1 {
                let mut s = t.clone().into_os_string();
                s.push(format!(".{p}"));
                PathBuf::from(s)
            } else {
                t.clone()
            };
            fs::write(&target, text).with_context(|| format!("writing {}", target.display()))?;
        }
        rows.push(ResultRow::from_report(&name, "none", 0.0, sc.seed, &p.to_string(), r));
        energy.push((p.to_string(), r.energy_series.clone()));
    }
    if let Some(c) = csv {
        report::write_results(create(&c)?, &sc.to_text(), &rows)?;
    }
    if let Some(e) = energy_csv {
        report::write_energy(create(&e)?, &energy)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<()> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Run {
            scenario,
            protocol,
            seed,
            trace,
            csv,
            energy_csv,
        } => run(&scenario, protocol, seed, trace, csv, energy_csv),
        Cmd::Sweep {
            scenario,
            axis,
            values,
            seeds,
            out,
            summary,
            jobs,
        } => {
            let base = load(&scenario)?;
            let sweep = Sweep {
                name: scenario_name(&scenario),
                axis,
                values: parse_values(&values).map_err(anyhow::Error::msg)?,
                seeds: parse_seeds(&seeds).map_err(anyhow::Error::msg)?,
            };
            let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.unwrap_or(0)).build()?;
            let rows = pool.install(|| sweep.run(&base))?;
            let header = format!("sweep axis = {axis}\n{}", base.to_text());
            match &out {
                Some(p) => report::write_results(create(p)?, &header, &rows)?,
                None => report::write_results(io::stdout().lock(), &header, &rows)?,
            }
            if let Some(p) = summary {
                report::write_summary(create(&p)?, &report::summarize(&rows))?;
            }
            Ok(())
        }
        Cmd::Validate { scenarios, print } => {
            let mut bad = 0;
            for p in &scenarios {
                match load(p) {
                    Ok(sc) => {
                        println!("{}: ok", p.display());
                        if print {
                            print!("{}", sc.to_text());
                        }
                    }
                    Err(e) => {
                        eprintln!("{}: {e:#}", p.display());
                        bad += 1;
                    }
                }
            }
            if bad > 0 {
                bail!("{bad} of {} scenario(s) invalid", scenarios.len());
            }
            Ok(())
        }
        Cmd::Report { csv, paired } => {
            let mut rows = Vec::new();
            for p in &csv {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                rows.extend(report::parse_results(&text).with_context(|| format!("in {}", p.display()))?);
            }
            let out = io::stdout().lock();
            if paired {
                report::write_paired(out, &report::paired_deltas(&rows))?;
            } else {
                report::write_summary(out, &report::summarize(&rows))?;
            }
            Ok(())
        }
    }
}
