//! Run settings: command-line flags override a TOML config file, which
//! overrides the built-in 50 km operating point.
//!
//! The config file is flat and uses the flag names with underscores:
//!
//! ```toml
//! mu = 0.002
//! epsilon = 0.021
//! delta_deg = 30
//! distance_km = 50
//! seed = 7
//! windows = 100000000
//! ```

use std::path::Path;

use anyhow::{Context, Result};
use scfqkd_core::channel::PhaseReadout;
use scfqkd_core::phasetrack::{drift_scale_for_span, DEFAULT_COUNTS_PER_SPAN, DEFAULT_SPAN_DRIFT_RAD};
use scfqkd_core::{Angle, ChannelModel, DetectorMap, ProtocolParams, PulseSchedule};
use serde::Deserialize;

pub const DEFAULT_WINDOWS: u64 = 10_000_000;
pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_DELTA_DEG: f64 = 30.0;

/// Settings that may come from either flags or the config file.
#[derive(Debug, Clone, Default, PartialEq, clap::Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Knobs {
    /// Mean photon number of a sent pulse [default: 0.002]
    #[arg(long)]
    pub mu: Option<f64>,
    /// Sending probability of each party [default: 0.021]
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Post-selection threshold in degrees [default: 30]
    #[arg(long = "delta-deg")]
    pub delta_deg: Option<f64>,
    /// Test-set sampling probability [default: 0.1]
    #[arg(long = "pt")]
    pub p_t: Option<f64>,
    /// Error-correction inefficiency [default: 1.1]
    #[arg(long = "f-ec")]
    pub f_ec: Option<f64>,
    /// Total fiber length, split evenly between the arms [default: 50]
    #[arg(long = "distance-km")]
    pub distance_km: Option<f64>,
    /// Interference visibility [default: calibrated, about 0.928]
    #[arg(long)]
    pub visibility: Option<f64>,
    /// Dark-click probability per window and detector [default: 1e-8]
    #[arg(long = "dark-prob")]
    pub dark_prob: Option<f64>,
    /// RMS phase drift per 12 us span in radians [default: 0.073]
    #[arg(long = "drift-rad")]
    pub drift_rad: Option<f64>,
    /// Expected reference counts per span; 0 announces the true phase [default: 45]
    #[arg(long = "ref-counts")]
    pub ref_counts: Option<f64>,
    /// Signal windows to simulate [default: 1e7]
    #[arg(long)]
    pub windows: Option<u64>,
    /// Random seed [default: 1]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads [default: available cores]
    #[arg(long)]
    pub workers: Option<usize>,
    /// Treat ch1 as the left detector
    #[arg(long = "swap-detectors", num_args = 0, default_missing_value = "true")]
    pub swap_detectors: Option<bool>,
}

macro_rules! prefer {
    ($a:expr, $b:expr, $($f:ident),*) => {
        Knobs { $($f: $a.$f.or($b.$f)),* }
    };
}

impl Knobs {
    /// Field-wise `self` if set, otherwise `fallback`.
    pub fn or(&self, fallback: &Knobs) -> Knobs {
        prefer!(
            self,
            fallback,
            mu,
            epsilon,
            delta_deg,
            p_t,
            f_ec,
            distance_km,
            visibility,
            dark_prob,
            drift_rad,
            ref_counts,
            windows,
            seed,
            workers,
            swap_detectors
        )
    }
}

pub fn load_config(path: &Path) -> Result<Knobs> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Fully resolved settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub params: ProtocolParams,
    pub model: ChannelModel,
    pub map: DetectorMap,
    /// Threshold in degrees as given (the angle is stored in radians).
    pub delta_deg: f64,
    pub windows: u64,
    pub seed: u64,
    pub workers: Option<usize>,
}

impl Settings {
    pub fn resolve(k: &Knobs) -> Result<Settings> {
        let mut params = ProtocolParams::default();
        let delta_deg = k.delta_deg.unwrap_or(DEFAULT_DELTA_DEG);
        if let Some(v) = k.mu {
            params.mu = v;
        }
        if let Some(v) = k.epsilon {
            params.epsilon = v;
        }
        params.delta_threshold = Angle::from_degrees(delta_deg)?;
        if let Some(v) = k.p_t {
            params.p_t = v;
        }
        if let Some(v) = k.f_ec {
            params.f_ec = v;
        }

        let mut model = ChannelModel::default();
        if let Some(d) = k.distance_km {
            model = model.with_total_distance(d);
        }
        if let Some(v) = k.visibility {
            model.visibility = v;
        }
        if let Some(v) = k.dark_prob {
            model.dark_prob = v;
        }
        let span_drift = k.drift_rad.unwrap_or(DEFAULT_SPAN_DRIFT_RAD);
        model.drift_rad_per_window = drift_scale_for_span(span_drift, PulseSchedule::EXPERIMENT.windows_per_span());
        model.readout = match k.ref_counts.unwrap_or(DEFAULT_COUNTS_PER_SPAN) {
            0.0 => PhaseReadout::Ideal,
            c => PhaseReadout::References { counts_per_span: c },
        };
        model.validate()?;

        let map = if k.swap_detectors.unwrap_or(false) {
            DetectorMap::swapped()
        } else {
            DetectorMap::default()
        };
        if k.workers == Some(0) {
            anyhow::bail!("workers must be at least 1");
        }
        Ok(Settings {
            params,
            model,
            map,
            delta_deg,
            windows: k.windows.unwrap_or(DEFAULT_WINDOWS),
            seed: k.seed.unwrap_or(DEFAULT_SEED),
            workers: k.workers,
        })
    }
}
