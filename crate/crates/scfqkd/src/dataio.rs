//! Raw tally files, analysis reports and sweep tables.
//!
//! A raw tally file is line oriented: each line holds one or more
//! `name value` pairs separated by whitespace (tabs, spaces, `=`, `,`, `;`
//! or `&` also work, so a table pasted from a typeset document parses).
//! `#` starts a comment. Names follow the experiment's raw-data scheme:
//!
//! * `Sent-CD`: windows in which Alice chose `C` and Bob `D` (`1` = send).
//! * `Sent-CD-Δ`: those whose announced phase passed the threshold.
//! * `Sent-ABCD-Δ`: the same split into key (`SS`) and test (`TT`) windows.
//! * `Detected-ABCD-ch0` / `-ch1`: effective detections per output port.
//!
//! `Δ` may also be written `Delta` or `$\Delta$`. The optional metadata key
//! `Delta-deg` records the threshold the file was selected with.

use std::fmt::Write as _;

use scfqkd_core::estimator::{CountingRates, QberRow};
use scfqkd_core::keyrate::SweepPoint;
use scfqkd_core::{Channel, Flag, KeyRateReport, SessionTallies, TallySet, TwinState};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance on `SS + TT = Δ-selected` (the measured split was
/// rounded per cell).
pub const SPLIT_TOLERANCE: f64 = 0.005;

const DELTA_KEY: &str = "Delta-deg";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing keys: {}", .0.join(", "))]
    MissingKeys(Vec<String>),
    #[error("line {line}: {key}: value {value:?} is not a nonnegative integer")]
    InvalidValue { line: usize, key: String, value: String },
    #[error("line {line}: {key}: negative value {value}")]
    Negative { line: usize, key: String, value: String },
    #[error("line {line}: {key} has no value")]
    MissingValue { line: usize, key: String },
    #[error("line {line}: {key} already given on line {first}")]
    Duplicate { line: usize, key: String, first: usize },
    #[error("{key}: detected {detected} exceeds sent {sent}")]
    DetectedExceedsSent { key: String, detected: f64, sent: f64 },
    #[error("{key}: {found} exceeds {bound_key} = {bound}")]
    ExceedsTotal {
        key: String,
        found: f64,
        bound_key: String,
        bound: f64,
    },
    #[error("{key}: SS + TT = {found} differs from {expected} by more than {:.1}%", SPLIT_TOLERANCE * 100.0)]
    SplitMismatch { key: String, found: f64, expected: f64 },
    #[error("{key}: cannot write non-integer count {value}")]
    NonInteger { key: String, value: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Contents of a raw tally file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawTallies {
    /// `Sent-CD`, indexed by [`TwinState::index`].
    pub sent: [f64; 4],
    /// `Sent-CD-Δ`.
    pub sent_delta: [f64; 4],
    /// Test set (`TT` cells).
    pub u: TallySet,
    /// Key set (`SS` cells).
    pub v: TallySet,
    pub delta_deg: Option<f64>,
}

impl RawTallies {
    pub fn from_session(t: &SessionTallies, delta_deg: Option<f64>) -> Self {
        RawTallies {
            sent: t.all.sent,
            sent_delta: t.selected.sent,
            u: t.u,
            v: t.v,
            delta_deg,
        }
    }

    /// All signal windows of the session, the key-rate denominator.
    pub fn total_pulses(&self) -> f64 {
        self.sent.iter().sum()
    }
}

/// A parsed file plus warnings about keys that were ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct Loaded {
    pub tallies: RawTallies,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cell {
    Sent(TwinState),
    SentDelta(TwinState),
    SetSent(Set, TwinState),
    Detected(Set, TwinState, Channel),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Set {
    Key,
    Test,
}

impl Set {
    fn prefix(self) -> &'static str {
        match self {
            Set::Key => "SS",
            Set::Test => "TT",
        }
    }
}

impl Cell {
    fn name(self) -> String {
        match self {
            Cell::Sent(s) => format!("Sent-{}", s.label()),
            Cell::SentDelta(s) => format!("Sent-{}-Δ", s.label()),
            Cell::SetSent(set, s) => format!("Sent-{}{}-Δ", set.prefix(), s.label()),
            Cell::Detected(set, s, c) => format!("Detected-{}{}-{}", set.prefix(), s.label(), c.label()),
        }
    }
}

/// Every mandatory cell in file order.
fn all_cells() -> Vec<Cell> {
    let mut cells = Vec::with_capacity(32);
    cells.extend(TwinState::ALL.map(Cell::Sent));
    cells.extend(TwinState::ALL.map(Cell::SentDelta));
    for set in [Set::Key, Set::Test] {
        cells.extend(TwinState::ALL.map(|s| Cell::SetSent(set, s)));
    }
    for set in [Set::Key, Set::Test] {
        for s in TwinState::ALL {
            cells.extend(Channel::ALL.map(|c| Cell::Detected(set, s, c)));
        }
    }
    cells
}

fn normalize(name: &str) -> String {
    name.replace("$\\Delta$", "Δ")
        .replace("\\Delta", "Δ")
        .replace("Delta", "Δ")
        .to_lowercase()
}

fn is_separator(c: char) -> bool {
    c.is_whitespace() || matches!(c, '=' | ',' | ';' | '&')
}

fn parse_count(line: usize, key: &str, value: &str) -> Result<f64, DataError> {
    if let Ok(v) = value.parse::<u64>() {
        return Ok(v as f64);
    }
    if value.parse::<f64>().is_ok_and(|v| v < 0.0) {
        return Err(DataError::Negative {
            line,
            key: key.to_string(),
            value: value.to_string(),
        });
    }
    Err(DataError::InvalidValue {
        line,
        key: key.to_string(),
        value: value.to_string(),
    })
}

/// Parse a raw tally file.
pub fn parse_raw_tallies(text: &str) -> Result<Loaded, DataError> {
    let cells = all_cells();
    let names: Vec<String> = cells.iter().map(|c| normalize(&c.name())).collect();
    let delta_key = normalize(DELTA_KEY);
    let mut values: Vec<Option<(f64, usize)>> = vec![None; cells.len()];
    let mut delta_deg: Option<(f64, usize)> = None;
    let mut warnings = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim().trim_end_matches("\\\\");
        let tokens: Vec<&str> = content.split(is_separator).filter(|t| !t.is_empty()).collect();
        for pair in tokens.chunks(2) {
            let key = pair[0];
            let Some(&value) = pair.get(1) else {
                return Err(DataError::MissingValue {
                    line,
                    key: key.to_string(),
                });
            };
            let norm = normalize(key);
            if norm == delta_key {
                if let Some((_, first)) = delta_deg {
                    return Err(DataError::Duplicate {
                        line,
                        key: key.to_string(),
                        first,
                    });
                }
                let d = value
                    .parse::<f64>()
                    .ok()
                    .filter(|d| d.is_finite() && *d > 0.0 && *d <= 180.0);
                let Some(d) = d else {
                    return Err(DataError::InvalidValue {
                        line,
                        key: key.to_string(),
                        value: value.to_string(),
                    });
                };
                delta_deg = Some((d, line));
                continue;
            }
            let Some(idx) = names.iter().position(|n| *n == norm) else {
                warnings.push(format!("line {line}: ignoring unknown key {key}"));
                continue;
            };
            if let Some((_, first)) = values[idx] {
                return Err(DataError::Duplicate {
                    line,
                    key: key.to_string(),
                    first,
                });
            }
            values[idx] = Some((parse_count(line, key, value)?, line));
        }
    }

    let missing: Vec<String> = cells
        .iter()
        .zip(&values)
        .filter(|(_, v)| v.is_none())
        .map(|(c, _)| c.name())
        .collect();
    if !missing.is_empty() {
        return Err(DataError::MissingKeys(missing));
    }

    let mut t = RawTallies {
        delta_deg: delta_deg.map(|(d, _)| d),
        ..RawTallies::default()
    };
    for (cell, value) in cells.iter().zip(values) {
        let v = value.map(|(v, _)| v).unwrap_or_default();
        match *cell {
            Cell::Sent(s) => t.sent[s.index()] = v,
            Cell::SentDelta(s) => t.sent_delta[s.index()] = v,
            Cell::SetSent(set, s) => set_of(&mut t, set).set_sent(s, v),
            Cell::Detected(set, s, c) => set_of(&mut t, set).set_detected(s, c, v),
        }
    }
    check_consistency(&t)?;
    Ok(Loaded { tallies: t, warnings })
}

fn set_of(t: &mut RawTallies, set: Set) -> &mut TallySet {
    match set {
        Set::Key => &mut t.v,
        Set::Test => &mut t.u,
    }
}

fn check_consistency(t: &RawTallies) -> Result<(), DataError> {
    for (set, tallies) in [(Set::Key, &t.v), (Set::Test, &t.u)] {
        for s in TwinState::ALL {
            let detected = tallies.effective(s);
            let sent = tallies.sent(s);
            if detected > sent {
                return Err(DataError::DetectedExceedsSent {
                    key: format!("Detected-{}{}", set.prefix(), s.label()),
                    detected,
                    sent,
                });
            }
        }
    }
    for s in TwinState::ALL {
        let i = s.index();
        if t.sent_delta[i] > t.sent[i] {
            return Err(DataError::ExceedsTotal {
                key: Cell::SentDelta(s).name(),
                found: t.sent_delta[i],
                bound_key: Cell::Sent(s).name(),
                bound: t.sent[i],
            });
        }
        let split = t.u.sent(s) + t.v.sent(s);
        if (split - t.sent_delta[i]).abs() > SPLIT_TOLERANCE * t.sent_delta[i] {
            return Err(DataError::SplitMismatch {
                key: Cell::SentDelta(s).name(),
                found: split,
                expected: t.sent_delta[i],
            });
        }
    }
    Ok(())
}

pub fn load_raw_tallies(path: &std::path::Path) -> Result<Loaded, DataError> {
    parse_raw_tallies(&std::fs::read_to_string(path)?)
}

/// Render a raw tally file; `comments` become leading `#` lines. Counts must
/// be integers.
pub fn render_raw_tallies(t: &RawTallies, comments: &[String]) -> Result<String, DataError> {
    let mut out = String::new();
    for c in comments {
        let _ = writeln!(out, "# {c}");
    }
    if let Some(d) = t.delta_deg {
        let _ = writeln!(out, "{DELTA_KEY}\t{d}");
    }
    for cell in all_cells() {
        let v = match cell {
            Cell::Sent(s) => t.sent[s.index()],
            Cell::SentDelta(s) => t.sent_delta[s.index()],
            Cell::SetSent(Set::Key, s) => t.v.sent(s),
            Cell::SetSent(Set::Test, s) => t.u.sent(s),
            Cell::Detected(Set::Key, s, c) => t.v.detected(s, c),
            Cell::Detected(Set::Test, s, c) => t.u.detected(s, c),
        };
        if !(v >= 0.0 && v.fract() == 0.0 && v < 2f64.powi(64)) {
            return Err(DataError::NonInteger {
                key: cell.name(),
                value: v,
            });
        }
        let _ = writeln!(out, "{}\t{}", cell.name(), v as u64);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    /// Aligned plain-text table.
    #[default]
    Human,
    Json,
    Csv,
}

fn percent(x: Option<f64>) -> String {
    x.map_or_else(|| "undefined".to_string(), |v| format!("{:.4}%", 100.0 * v))
}

fn rate_line(out: &mut String, name: &str, r: &CountingRates) {
    let cell = |x: Option<f64>| x.map_or_else(|| "undefined".to_string(), |v| format!("{v:.6e}"));
    let _ = writeln!(
        out,
        "{name:<24}{}  (00 {}, 01 {}, 10 {}, 11 {})",
        cell(r.total),
        cell(r.per_state[0]),
        cell(r.per_state[1]),
        cell(r.per_state[2]),
        cell(r.per_state[3]),
    );
}

/// Serialize a report. `Csv` is not a report format and renders as `Human`.
pub fn emit_report(r: &KeyRateReport, format: Format) -> String {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(r).expect("report serializes");
            s.push('\n');
            s
        }
        Format::Human | Format::Csv => {
            let mut out = String::new();
            let map = &r.detector_map;
            let _ = writeln!(
                out,
                "{:<24}L={} R={}",
                "detectors",
                map.left.label(),
                map.right().label()
            );
            let _ = writeln!(out, "{:<24}{}", "mu", r.mu);
            let _ = writeln!(out, "{:<24}{}", "f_ec", r.f_ec);
            rate_line(&mut out, "S_u (total, per state)", &r.rates_u);
            let _ = writeln!(out, "{:<24}{}", "E_u", percent(r.rates_u.error_rate));
            let _ = writeln!(out, "{:<24}{:.6e}", "S_Z~", r.s_tilde_z);
            let _ = writeln!(out, "{:<24}{:.1}", "n_Z~", r.n_tilde_z);
            let _ = writeln!(out, "{:<24}{}", "n_v", r.n_v);
            let _ = writeln!(out, "{:<24}{}", "E_v", percent(r.e_v));
            let _ = writeln!(
                out,
                "{:<24}{}  [{}]",
                "e_ph (upper bound)",
                percent(Some(r.e_ph_upper)),
                r.e_ph_flag.label()
            );
            if let Some(b) = &r.phase_flip {
                if b.lower_left_raw < 0.0 {
                    let _ = writeln!(out, "{:<24}lower bound clamped to 0 (raw {:.6e})", "", b.lower_left_raw);
                }
            }
            let _ = writeln!(out, "{:<24}{:.1}", "n_F", r.n_f);
            if r.n_f_raw < 0.0 {
                let _ = writeln!(out, "{:<24}clamped to 0 (raw {:.1})", "", r.n_f_raw);
            }
            let _ = writeln!(out, "{:<24}{}", "N (pulses)", r.n_total_pulses);
            let _ = writeln!(out, "{:<24}{:.6e}", "R (bits/pulse)", r.rate_per_pulse);
            out
        }
    }
}

pub fn parse_report_json(text: &str) -> Result<KeyRateReport, serde_json::Error> {
    serde_json::from_str(text)
}

/// One row of a distance sweep table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub distance_km: f64,
    pub rate_per_pulse: f64,
    pub s_tilde_z: f64,
    pub n_tilde_z: f64,
    pub e_ph_upper: f64,
    pub e_ph_flag: Flag,
    pub e_v: Option<f64>,
    pub n_v: f64,
    pub n_f: f64,
}

pub const SWEEP_HEADER: [&str; 9] = [
    "distance_km",
    "rate_per_pulse",
    "s_tilde_z",
    "n_tilde_z",
    "e_ph_upper",
    "e_ph_flag",
    "e_v",
    "n_v",
    "n_f",
];

impl From<&SweepPoint> for SweepRow {
    fn from(p: &SweepPoint) -> Self {
        let r = &p.report;
        SweepRow {
            distance_km: p.distance_km,
            rate_per_pulse: p.rate_per_pulse,
            s_tilde_z: r.s_tilde_z,
            n_tilde_z: r.n_tilde_z,
            e_ph_upper: r.e_ph_upper,
            e_ph_flag: r.e_ph_flag,
            e_v: r.e_v,
            n_v: r.n_v,
            n_f: r.n_f,
        }
    }
}

fn write_csv<T: Serialize>(header: &[&str], rows: &[T]) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.serialize(row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

fn read_csv<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>, csv::Error> {
    csv::Reader::from_reader(text.as_bytes()).deserialize().collect()
}

/// Header line plus one row per point.
pub fn emit_sweep_csv(points: &[SweepPoint]) -> String {
    let rows: Vec<SweepRow> = points.iter().map(SweepRow::from).collect();
    write_csv(&SWEEP_HEADER, &rows)
}

pub fn parse_sweep_csv(text: &str) -> Result<Vec<SweepRow>, csv::Error> {
    read_csv(text)
}

/// One row of a both-send QBER table; the key rate is present when the
/// tallies for that threshold were available.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QberTableRow {
    pub delta_deg: f64,
    pub detections: f64,
    pub qber: Option<f64>,
    pub rate_per_pulse: Option<f64>,
}

impl QberTableRow {
    pub fn new(delta_deg: f64, row: &QberRow, rate_per_pulse: Option<f64>) -> Self {
        QberTableRow {
            delta_deg,
            detections: row.detections,
            qber: row.qber,
            rate_per_pulse,
        }
    }
}

pub const QBER_HEADER: [&str; 4] = ["delta_deg", "detections", "qber", "rate_per_pulse"];

pub fn emit_qber_table(rows: &[QberTableRow], format: Format) -> String {
    match format {
        Format::Csv => write_csv(&QBER_HEADER, rows),
        Format::Json => {
            let mut s = serde_json::to_string_pretty(rows).expect("rows serialize");
            s.push('\n');
            s
        }
        Format::Human => {
            let mut out = format!(
                "{:>8}  {:>12}  {:>10}  {:>14}\n",
                "delta", "detections", "QBER", "R (bits/pulse)"
            );
            for r in rows {
                let rate = r
                    .rate_per_pulse
                    .map_or_else(|| "n/a".to_string(), |x| format!("{x:.3e}"));
                let _ = writeln!(
                    out,
                    "{:>7}°  {:>12}  {:>10}  {:>14}",
                    r.delta_deg,
                    r.detections,
                    r.qber
                        .map_or_else(|| "undefined".to_string(), |q| format!("{:.2}%", 100.0 * q)),
                    rate
                );
            }
            out
        }
    }
}

pub fn parse_qber_csv(text: &str) -> Result<Vec<QberTableRow>, csv::Error> {
    read_csv(text)
}
