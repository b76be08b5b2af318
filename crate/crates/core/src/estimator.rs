//! Asymptotic parameter estimation from the test set `u` and the key set
//! `v`: counting rates, Z̃-window statistics, the bit-flip error rate, and
//! the upper bound on the phase-flip error rate.

use alloc::vec::Vec;

use crate::channel::WindowRecord;
use crate::error::{check_range, Error, Result};
use crate::math;
use crate::phase::Angle;
use crate::postselect::passes;
use crate::tally::{Channel, DetectorMap, TallySet, TwinState};

/// Status of a derived quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Flag {
    #[default]
    Ok,
    /// The raw bound exceeded one (statistics too poor); value clamped.
    ExceedsOne,
    /// Not computable from the data (empty denominator).
    Undefined,
}

impl Flag {
    pub fn label(self) -> &'static str {
        match self {
            Flag::Ok => "ok",
            Flag::ExceedsOne => "exceeds_one",
            Flag::Undefined => "undefined",
        }
    }
}

/// Counting rates of one set. `None` marks cells whose denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CountingRates {
    /// `S_ab = n_ab / N_ab`, indexed by [`TwinState::index`].
    pub per_state: [Option<f64>; 4],
    /// `S^ch_ab = n^ch_ab / N_ab`, `[state][channel]`.
    pub per_channel: [[Option<f64>; 2]; 4],
    /// `S = Σ n / Σ N`.
    pub total: Option<f64>,
    /// `E = (n_00 + n_αα) / Σ n`.
    pub error_rate: Option<f64>,
}

impl CountingRates {
    pub fn state(&self, s: TwinState) -> Option<f64> {
        self.per_state[s.index()]
    }

    pub fn channel(&self, s: TwinState, c: Channel) -> Option<f64> {
        self.per_channel[s.index()][c.index()]
    }
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > 0.0).then(|| num / den)
}

pub fn counting_rates(set: &TallySet) -> CountingRates {
    let mut out = CountingRates::default();
    for s in TwinState::ALL {
        let n = set.sent(s);
        out.per_state[s.index()] = ratio(set.effective(s), n);
        for c in Channel::ALL {
            out.per_channel[s.index()][c.index()] = ratio(set.detected(s, c), n);
        }
    }
    let effective = set.total_effective();
    out.total = ratio(effective, set.total_sent());
    out.error_rate = ratio(
        set.effective(TwinState::Vacuum) + set.effective(TwinState::Both),
        effective,
    );
    out
}

/// Counting rate of Z̃ windows, `(S_0α + S_α0) / 2`.
pub fn s_tilde_z(s_0a: f64, s_a0: f64) -> f64 {
    0.5 * (s_0a + s_a0)
}

/// Effective Z̃ bits in the key set, `2 · min(N_0α,v, N_α0,v) · S_Z̃`.
pub fn n_tilde_z(n_0a_v: f64, n_a0_v: f64, s_tilde_z: f64) -> f64 {
    2.0 * n_0a_v.min(n_a0_v) * s_tilde_z
}

/// Per-detector counting rates of the test set with the left/right roles
/// assigned, indexed by [`TwinState::index`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DetectorRates {
    pub left: [f64; 4],
    pub right: [f64; 4],
}

impl DetectorRates {
    /// Empty cells contribute rate 0.
    pub fn from_rates(rates: &CountingRates, map: DetectorMap) -> Self {
        let pick = |c: Channel| TwinState::ALL.map(|s| rates.channel(s, c).unwrap_or(0.0));
        DetectorRates {
            left: pick(map.left),
            right: pick(map.right()),
        }
    }

    pub fn l(&self, s: TwinState) -> f64 {
        self.left[s.index()]
    }

    pub fn r(&self, s: TwinState) -> f64 {
        self.right[s.index()]
    }
}

/// Upper bound on the phase-flip error rate of effective Z̃ windows.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PhaseFlipBound {
    /// Upper bound on the right-detector X₊ counting rate.
    pub upper_right: f64,
    /// Lower bound on the left-detector X₊ counting rate, before clamping.
    pub lower_left_raw: f64,
    /// `max(lower_left_raw, 0)`.
    pub lower_left: f64,
    pub raw: f64,
    /// `min(raw, 1)`.
    pub value: f64,
    pub flag: Flag,
}

pub fn phase_flip_upper(rates: &DetectorRates, mu: f64, s_tilde_z: f64) -> Result<PhaseFlipBound> {
    check_range("mu", mu, mu > 0.0 && mu.is_finite(), "(0, inf)")?;
    check_range(
        "s_tilde_z",
        s_tilde_z,
        s_tilde_z > 0.0 && s_tilde_z.is_finite(),
        "(0, inf)",
    )?;
    let e = math::exp(-mu);
    let k = -math::expm1(-mu); // 1 − e^{−μ}
    let norm = 1.0 / (2.0 * (1.0 + e));

    let (r00, raa) = (rates.r(TwinState::Vacuum), rates.r(TwinState::Both));
    let upper_right = norm
        * (e * r00
            + raa / e
            + k * k / e
            + 2.0 * math::sqrt(r00 * raa)
            + 2.0 * k * math::sqrt(r00)
            + 2.0 * k / e * math::sqrt(raa));

    let (l00, laa) = (rates.l(TwinState::Vacuum), rates.l(TwinState::Both));
    let lower_left_raw = norm
        * (e * l00 + laa / e
            - (2.0 * math::sqrt(l00 * laa) + 2.0 * k * math::sqrt(l00) + 2.0 * k / e * math::sqrt(laa)));
    let lower_left = lower_left_raw.max(0.0);

    let raw = ((1.0 + e) * (upper_right - lower_left) + rates.l(TwinState::BobOnly) + rates.l(TwinState::AliceOnly))
        / (2.0 * s_tilde_z);
    let (value, flag) = if raw > 1.0 {
        (1.0, Flag::ExceedsOne)
    } else {
        (raw, Flag::Ok)
    };
    Ok(PhaseFlipBound {
        upper_right,
        lower_left_raw,
        lower_left,
        raw,
        value,
        flag,
    })
}

/// Bit-flip error rate `E_v` and number of effective events `n_v` of the
/// key set.
pub fn bit_flip_error_v(v: &TallySet) -> Result<(f64, f64)> {
    let n_v = v.total_effective();
    if n_v <= 0.0 {
        return Err(Error::NoDetections("key set v"));
    }
    let errors: f64 = TwinState::ALL
        .iter()
        .filter(|s| s.is_bit_error())
        .map(|&s| v.effective(s))
        .sum();
    Ok((errors / n_v, n_v))
}

/// One row of the both-send QBER table.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QberRow {
    pub delta: Angle,
    /// Effective events of both-send windows passing the threshold.
    pub detections: f64,
    /// Fraction of those on the port that is dark at zero phase. `None`
    /// when there are no detections.
    pub qber: Option<f64>,
}

/// Both-send QBER from already post-selected tallies (e.g. the `u` and `v`
/// sets of one threshold).
pub fn qber_from_tallies(delta: Angle, sets: &[&TallySet], map: DetectorMap) -> QberRow {
    let detections: f64 = sets.iter().map(|t| t.effective(TwinState::Both)).sum();
    let wrong: f64 = sets.iter().map(|t| t.detected(TwinState::Both, map.right())).sum();
    QberRow {
        delta,
        detections,
        qber: ratio(wrong, detections),
    }
}

/// Both-send QBER for each threshold in `delta_grid`, from per-window
/// records carrying phase estimates.
pub fn qber_both_send(records: &[WindowRecord], delta_grid: &[Angle], map: DetectorMap) -> Vec<QberRow> {
    delta_grid
        .iter()
        .map(|&delta| {
            let (mut detections, mut wrong) = (0.0, 0.0);
            for r in records {
                if r.state() != TwinState::Both || !passes(r.estimated_phase, delta) {
                    continue;
                }
                if let Some(c) = r.effective_channel() {
                    detections += 1.0;
                    if c == map.right() {
                        wrong += 1.0;
                    }
                }
            }
            QberRow {
                delta,
                detections,
                qber: ratio(wrong, detections),
            }
        })
        .collect()
}

/// Headline quantities of one analysis, with the intermediate rates.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KeyRateReport {
    pub detector_map: DetectorMap,
    pub mu: f64,
    pub f_ec: f64,
    /// Counting rates of the test set.
    pub rates_u: CountingRates,
    pub s_tilde_z: f64,
    pub n_tilde_z: f64,
    /// Phase-flip bound; `None` when `S_Z̃ = 0`.
    pub phase_flip: Option<PhaseFlipBound>,
    /// Phase-flip bound clamped to `[0, 1]` (1 when undefined).
    pub e_ph_upper: f64,
    pub e_ph_flag: Flag,
    /// `None` when the key set has no effective events.
    pub e_v: Option<f64>,
    pub n_v: f64,
    /// Final key length clamped at zero.
    pub n_f: f64,
    pub n_f_raw: f64,
    pub n_total_pulses: f64,
    pub rate_per_pulse: f64,
}
