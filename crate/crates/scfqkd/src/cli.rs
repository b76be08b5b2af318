//! Command-line interface.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use scfqkd_core::estimator::qber_from_tallies;
use scfqkd_core::keyrate::{analyze_tallies, optimize_params, sweep_distance, SearchRanges};
use scfqkd_core::session::SessionSimulator;
use scfqkd_core::{Angle, KeyRateReport};

use crate::config::{load_config, Knobs, Settings};
use crate::dataio::{
    emit_qber_table, emit_report, emit_sweep_csv, load_raw_tallies, parse_raw_tallies, render_raw_tallies, Format,
    Loaded, QberTableRow, RawTallies, SweepRow,
};
use crate::parallel::{default_workers, run_parallel};

/// Raw tallies of the 50 km session at Δ = 30°.
pub const BUNDLED_TABLE: &str = include_str!("../data/raw_50km.txt");

/// Thresholds of the measured both-send QBER scan, in degrees.
pub const DEFAULT_DELTAS: [f64; 8] = [2.0, 5.0, 8.0, 10.0, 12.0, 15.0, 30.0, 45.0];

#[derive(Debug, Parser)]
#[command(
    name = "scfqkd",
    version,
    about = "Simulate and analyze side-channel-free QKD sessions"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    #[command(flatten)]
    pub knobs: Knobs,
    /// TOML file with default settings (flags take precedence)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Write the main output here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Key-rate analysis of a raw tally file (the bundled 50 km data if omitted)
    Analyze {
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo session; writes a raw tally file
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Expected-value key rate against total distance
    Sweep {
        /// Comma-separated distances in km [default: 0,5,...,80]
        #[arg(long, value_delimiter = ',')]
        distances: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Maximize the expected-value key rate over mu, epsilon and delta
    Optimize {
        /// Grid points per dimension before local refinement
        #[arg(long, default_value_t = 12)]
        grid: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Both-send QBER and key rate per threshold, from raw tally files
    /// (one per threshold) or from a simulated session
    QberTable {
        /// Raw tally files; each needs a Delta-deg entry unless --delta-deg is given for a single file
        #[arg(long = "in")]
        inputs: Vec<PathBuf>,
        /// Use the bundled 50 km data
        #[arg(long)]
        bundled: bool,
        /// Comma-separated thresholds in degrees for simulation mode
        #[arg(long, value_delimiter = ',')]
        deltas: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
}

impl Common {
    fn settings(&self) -> Result<Settings> {
        let file = match &self.config {
            Some(p) => load_config(p)?,
            None => Knobs::default(),
        };
        Settings::resolve(&self.knobs.or(&file))
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(stdout.flush()?)
        }
    }
}

fn warn_all(loaded: &Loaded) {
    for w in &loaded.warnings {
        eprintln!("warning: {w}");
    }
}

fn load(path: Option<&Path>) -> Result<Loaded> {
    let loaded = match path {
        Some(p) => load_raw_tallies(p).with_context(|| format!("loading {}", p.display()))?,
        None => parse_raw_tallies(BUNDLED_TABLE)?,
    };
    warn_all(&loaded);
    Ok(loaded)
}

pub fn analyze(t: &RawTallies, s: &Settings) -> Result<KeyRateReport> {
    s.params.validate()?;
    Ok(analyze_tallies(&t.u, &t.v, t.total_pulses(), &s.params, s.map)?)
}

/// Simulate and return the raw tallies at each threshold.
pub fn simulate(s: &Settings, deltas_deg: &[f64]) -> Result<Vec<RawTallies>> {
    let thresholds = deltas_deg
        .iter()
        .map(|&d| Angle::from_degrees(d))
        .collect::<Result<Vec<_>, _>>()?;
    let sim = SessionSimulator::with_thresholds(s.params, s.model, s.windows, s.seed, &thresholds)?;
    let workers = s.workers.unwrap_or_else(default_workers);
    Ok(run_parallel(&sim, workers)
        .iter()
        .zip(deltas_deg)
        .map(|(t, &d)| RawTallies::from_session(t, Some(d)))
        .collect())
}

/// Comment lines identifying a simulated tally file.
pub fn provenance(s: &Settings) -> Vec<String> {
    let (p, m) = (&s.params, &s.model);
    vec![
        "Simulated session.".to_string(),
        format!("windows {} seed {}", s.windows, s.seed),
        format!(
            "mu {} epsilon {} p_t {} distance_km {} visibility {} dark_prob {:e}",
            p.mu,
            p.epsilon,
            p.p_t,
            m.total_distance_km(),
            m.visibility,
            m.dark_prob
        ),
    ]
}

fn sweep_human(rows: &[SweepRow]) -> String {
    let mut out = format!("{:>8}  {:>14}  {:>10}  {:>10}\n", "km", "R (bits/pulse)", "e_ph", "E_v");
    for r in rows {
        let _ = writeln!(
            out,
            "{:>8}  {:>14.4e}  {:>9.2}%  {:>10}",
            r.distance_km,
            r.rate_per_pulse,
            100.0 * r.e_ph_upper,
            r.e_v
                .map_or_else(|| "undefined".to_string(), |e| format!("{:.3}%", 100.0 * e))
        );
    }
    out
}

fn qber_rows_from_files(
    inputs: &[PathBuf],
    bundled: bool,
    knobs_delta: Option<f64>,
    s: &Settings,
) -> Result<Vec<QberTableRow>> {
    let mut sources: Vec<(String, Loaded)> = Vec::new();
    if bundled {
        sources.push(("bundled data".into(), load(None)?));
    }
    for p in inputs {
        sources.push((p.display().to_string(), load(Some(p))?));
    }
    let single = sources.len() == 1;
    sources
        .into_iter()
        .map(|(name, l)| {
            let delta = match (l.tallies.delta_deg, knobs_delta) {
                (Some(d), _) => d,
                (None, Some(d)) if single => d,
                _ => bail!("{name}: no Delta-deg entry; pass --delta-deg for a single file"),
            };
            let row = qber_from_tallies(Angle::from_degrees(delta)?, &[&l.tallies.u, &l.tallies.v], s.map);
            let rate = analyze(&l.tallies, s)?.rate_per_pulse;
            Ok(QberTableRow::new(delta, &row, Some(rate)))
        })
        .collect()
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Analyze { input, common } => {
            let s = common.settings()?;
            let loaded = load(input.as_deref())?;
            if let (Some(file), Some(flag)) = (loaded.tallies.delta_deg, common.knobs.delta_deg) {
                if file != flag {
                    eprintln!("warning: file was selected at {file}°, --delta-deg {flag} has no effect on its tallies");
                }
            }
            let report = analyze(&loaded.tallies, &s)?;
            emit(common.out.as_deref(), &emit_report(&report, common.format))
        }
        Command::Simulate { common } => {
            let s = common.settings()?;
            let t = simulate(&s, &[s.delta_deg])?.remove(0);
            let text = render_raw_tallies(&t, &provenance(&s))?;
            emit(common.out.as_deref(), &text)?;
            if common.out.is_some() {
                match analyze(&t, &s) {
                    Ok(r) => emit(None, &emit_report(&r, common.format))?,
                    Err(e) => eprintln!("note: no report for this session: {e:#}"),
                }
            }
            Ok(())
        }
        Command::Sweep { distances, common } => {
            let s = common.settings()?;
            let distances = if distances.is_empty() {
                (0..=16).map(|i| 5.0 * f64::from(i)).collect()
            } else {
                distances
            };
            let points = sweep_distance(&s.params, &s.model, &distances)?;
            let text = match common.format {
                Format::Csv => emit_sweep_csv(&points),
                Format::Json => {
                    let rows: Vec<SweepRow> = points.iter().map(SweepRow::from).collect();
                    serde_json::to_string_pretty(&rows)? + "\n"
                }
                Format::Human => sweep_human(&points.iter().map(SweepRow::from).collect::<Vec<_>>()),
            };
            emit(common.out.as_deref(), &text)
        }
        Command::Optimize { grid, common } => {
            let s = common.settings()?;
            let ranges = SearchRanges {
                grid,
                ..SearchRanges::default()
            };
            let o = optimize_params(&s.params, &s.model, &ranges)?;
            let text = match common.format {
                Format::Json => {
                    let v = serde_json::json!({
                        "distance_km": s.model.total_distance_km(),
                        "mu": o.mu,
                        "epsilon": o.epsilon,
                        "delta_deg": o.delta.degrees(),
                        "rate_per_pulse": o.rate_per_pulse,
                        "evaluations": o.evaluations,
                    });
                    serde_json::to_string_pretty(&v)? + "\n"
                }
                Format::Human | Format::Csv => format!(
                    "{:<16}{}\n{:<16}{:.6}\n{:<16}{:.6}\n{:<16}{:.3}\n{:<16}{:.6e}\n{:<16}{}\n",
                    "distance_km",
                    s.model.total_distance_km(),
                    "mu",
                    o.mu,
                    "epsilon",
                    o.epsilon,
                    "delta_deg",
                    o.delta.degrees(),
                    "R (bits/pulse)",
                    o.rate_per_pulse,
                    "evaluations",
                    o.evaluations
                ),
            };
            emit(common.out.as_deref(), &text)
        }
        Command::QberTable {
            inputs,
            bundled,
            deltas,
            common,
        } => {
            let s = common.settings()?;
            let rows = if bundled || !inputs.is_empty() {
                if !deltas.is_empty() {
                    bail!("--deltas applies to simulation mode only");
                }
                qber_rows_from_files(&inputs, bundled, common.knobs.delta_deg, &s)?
            } else {
                let deltas = if deltas.is_empty() {
                    DEFAULT_DELTAS.to_vec()
                } else {
                    deltas
                };
                simulate(&s, &deltas)?
                    .iter()
                    .zip(&deltas)
                    .map(|(t, &d)| {
                        let row = qber_from_tallies(Angle::from_degrees(d)?, &[&t.u, &t.v], s.map);
                        let rate = analyze(t, &s).ok().map(|r| r.rate_per_pulse);
                        Ok(QberTableRow::new(d, &row, rate))
                    })
                    .collect::<Result<Vec<_>>>()?
            };
            emit(common.out.as_deref(), &emit_qber_table(&rows, common.format))
        }
    }
}
