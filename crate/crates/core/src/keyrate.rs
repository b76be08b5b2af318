//! Final key length and key rate, the end-to-end analysis of a pair of
//! test/key tallies, distance sweeps, and parameter optimization on the
//! expected-value model.

use alloc::format;
use alloc::vec::Vec;

use crate::channel::{expected_tallies, ChannelModel, ProtocolParams};
use crate::error::{check_range, Error, Result};
use crate::estimator::{
    bit_flip_error_v, counting_rates, n_tilde_z, phase_flip_upper, qber_from_tallies, s_tilde_z, DetectorRates, Flag,
    KeyRateReport,
};
use crate::math;
use crate::phase::{binary_entropy, Angle};
use crate::tally::{DetectorMap, TallySet, TwinState};

/// Key length before and after clamping negative values to zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyLength {
    pub raw: f64,
    pub value: f64,
}

/// `n_F = n_Z̃ [1 − H(ē_ph)] − f n_v H(E_v)`.
pub fn key_length(n_tilde_z: f64, e_ph_upper: f64, n_v: f64, e_v: f64, f_ec: f64) -> Result<KeyLength> {
    check_range("n_tilde_z", n_tilde_z, n_tilde_z >= 0.0, "[0, inf)")?;
    check_range("n_v", n_v, n_v >= 0.0, "[0, inf)")?;
    check_range("f_ec", f_ec, f_ec >= 0.0, "[0, inf)")?;
    let raw = n_tilde_z * (1.0 - binary_entropy(e_ph_upper)?) - f_ec * n_v * binary_entropy(e_v)?;
    Ok(KeyLength {
        raw,
        value: raw.max(0.0),
    })
}

/// Final bits per signal pulse sent.
pub fn key_rate(n_f: f64, n_total_pulses: f64) -> Result<f64> {
    check_range("n_total_pulses", n_total_pulses, n_total_pulses > 0.0, "(0, inf)")?;
    Ok(n_f / n_total_pulses)
}

/// Full asymptotic analysis: rates from the test set `u`, counts from the
/// key set `v`, key length and rate per pulse.
///
/// Error rates enter the entropy terms capped at 1/2: a bound at or above
/// 1/2 already leaves no key, and the literal entropy would decrease past it.
pub fn analyze_tallies(
    u: &TallySet,
    v: &TallySet,
    n_total_pulses: f64,
    params: &ProtocolParams,
    map: DetectorMap,
) -> Result<KeyRateReport> {
    check_range("mu", params.mu, params.mu > 0.0 && params.mu.is_finite(), "(0, inf)")?;
    check_range("f_ec", params.f_ec, params.f_ec >= 1.0, "[1, inf)")?;
    let rates_u = counting_rates(u);
    let s = s_tilde_z(
        rates_u.state(TwinState::BobOnly).unwrap_or(0.0),
        rates_u.state(TwinState::AliceOnly).unwrap_or(0.0),
    );
    let n_z = n_tilde_z(v.sent(TwinState::BobOnly), v.sent(TwinState::AliceOnly), s);
    let phase_flip = if s > 0.0 {
        Some(phase_flip_upper(
            &DetectorRates::from_rates(&rates_u, map),
            params.mu,
            s,
        )?)
    } else {
        None
    };
    let (e_ph_upper, e_ph_flag) = match phase_flip {
        Some(b) => (b.value, b.flag),
        None => (1.0, Flag::Undefined),
    };
    let (e_v, n_v) = match bit_flip_error_v(v) {
        Ok((e, n)) => (Some(e), n),
        Err(_) => (None, 0.0),
    };
    let kl = key_length(
        n_z,
        e_ph_upper.clamp(0.0, 0.5),
        n_v,
        e_v.unwrap_or(0.0).min(0.5),
        params.f_ec,
    )?;
    Ok(KeyRateReport {
        detector_map: map,
        mu: params.mu,
        f_ec: params.f_ec,
        rates_u,
        s_tilde_z: s,
        n_tilde_z: n_z,
        phase_flip,
        e_ph_upper,
        e_ph_flag,
        e_v,
        n_v,
        n_f: kl.value,
        n_f_raw: kl.raw,
        n_total_pulses,
        rate_per_pulse: key_rate(kl.value, n_total_pulses)?,
    })
}

/// Signal pulses of the 50 km experiment; the nominal session size of
/// expected-value evaluations (rates per pulse do not depend on it).
pub const NOMINAL_PULSES: f64 = 6.0396e11;

/// Expected-value key rate at one operating point.
pub fn expected_report(params: &ProtocolParams, model: &ChannelModel, map: DetectorMap) -> Result<KeyRateReport> {
    let t = expected_tallies(params, model, NOMINAL_PULSES);
    analyze_tallies(&t.u, &t.v, NOMINAL_PULSES, params, map)
}

/// Expected both-send QBER of the post-selected windows.
pub fn expected_both_send_qber(params: &ProtocolParams, model: &ChannelModel) -> Option<f64> {
    let t = expected_tallies(params, model, NOMINAL_PULSES);
    qber_from_tallies(params.delta_threshold, &[&t.selected], DetectorMap::default()).qber
}

/// One point of a distance sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepPoint {
    pub distance_km: f64,
    pub rate_per_pulse: f64,
    pub report: KeyRateReport,
}

/// Expected-value key rate at each total distance (split evenly between
/// the two arms), in input order.
pub fn sweep_distance(params: &ProtocolParams, model: &ChannelModel, distances_km: &[f64]) -> Result<Vec<SweepPoint>> {
    if distances_km.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
        return Err(Error::InvalidRange(format!(
            "distances must be finite and >= 0: {distances_km:?}"
        )));
    }
    if distances_km.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidRange("distances must be sorted ascending".into()));
    }
    params.validate()?;
    distances_km
        .iter()
        .map(|&d| {
            let report = expected_report(params, &model.with_total_distance(d), DetectorMap::default())?;
            Ok(SweepPoint {
                distance_km: d,
                rate_per_pulse: report.rate_per_pulse,
                report,
            })
        })
        .collect()
}

/// Closed search interval for one parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    fn point(&self, i: usize, n: usize) -> f64 {
        if n <= 1 {
            return 0.5 * (self.lo + self.hi);
        }
        self.lo + (self.hi - self.lo) * i as f64 / (n - 1) as f64
    }
}

/// Search box for [`optimize_params`]; `delta_deg` in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchRanges {
    pub mu: Interval,
    pub epsilon: Interval,
    pub delta_deg: Interval,
    /// Grid points per dimension before coordinate refinement.
    pub grid: usize,
}

impl Default for SearchRanges {
    fn default() -> Self {
        SearchRanges {
            mu: Interval::new(0.0005, 0.01),
            epsilon: Interval::new(0.005, 0.06),
            delta_deg: Interval::new(2.0, 90.0),
            grid: 12,
        }
    }
}

impl SearchRanges {
    fn validate(&self) -> Result<()> {
        let bad = |name: &str, i: &Interval, lo: f64, hi: f64| -> Result<()> {
            if !(i.lo.is_finite() && i.hi.is_finite() && i.lo <= i.hi && i.lo > lo && i.hi <= hi) {
                return Err(Error::InvalidRange(format!(
                    "{name} range [{}, {}] outside ({lo}, {hi}]",
                    i.lo, i.hi
                )));
            }
            Ok(())
        };
        bad("mu", &self.mu, 0.0, f64::INFINITY)?;
        bad("epsilon", &self.epsilon, 0.0, 1.0 - f64::EPSILON)?;
        bad("delta_deg", &self.delta_deg, 0.0, 180.0)?;
        if self.grid == 0 {
            return Err(Error::InvalidRange("grid must have at least one point".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Optimum {
    pub mu: f64,
    pub epsilon: f64,
    pub delta: Angle,
    pub rate_per_pulse: f64,
    pub evaluations: usize,
}

impl Optimum {
    pub fn params(&self, base: &ProtocolParams) -> ProtocolParams {
        ProtocolParams {
            mu: self.mu,
            epsilon: self.epsilon,
            delta_threshold: self.delta,
            ..*base
        }
    }
}

/// Expected-value key rate at `(mu, epsilon, delta_deg)`.
pub fn rate_at(base: &ProtocolParams, model: &ChannelModel, mu: f64, epsilon: f64, delta_deg: f64) -> Result<f64> {
    let p = ProtocolParams {
        mu,
        epsilon,
        delta_threshold: Angle::from_degrees(delta_deg)?,
        ..*base
    };
    Ok(expected_report(&p, model, DetectorMap::default())?.rate_per_pulse)
}

/// Deterministic grid search followed by coordinate-wise golden-section
/// refinement inside the neighboring grid cells.
pub fn optimize_params(base: &ProtocolParams, model: &ChannelModel, ranges: &SearchRanges) -> Result<Optimum> {
    ranges.validate()?;
    base.validate()?;
    let n = ranges.grid;
    let mut evaluations = 0;
    let mut eval = |x: [f64; 3]| -> Result<f64> {
        evaluations += 1;
        rate_at(base, model, x[0], x[1], x[2])
    };
    let axes = [ranges.mu, ranges.epsilon, ranges.delta_deg];
    let mut best = [axes[0].point(0, n), axes[1].point(0, n), axes[2].point(0, n)];
    let mut best_rate = f64::NEG_INFINITY;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let x = [axes[0].point(i, n), axes[1].point(j, n), axes[2].point(k, n)];
                let r = eval(x)?;
                if r > best_rate {
                    best_rate = r;
                    best = x;
                }
            }
        }
    }

    // Golden-section per coordinate within one grid step of the incumbent;
    // a few sweeps let the coordinates settle jointly.
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let steps: [f64; 3] = core::array::from_fn(|d| {
        let span = axes[d].hi - axes[d].lo;
        if n > 1 {
            span / (n - 1) as f64
        } else {
            span
        }
    });
    for _ in 0..4 {
        for d in 0..3 {
            let mut lo = (best[d] - steps[d]).max(axes[d].lo);
            let mut hi = (best[d] + steps[d]).min(axes[d].hi);
            let at = |x: f64| {
                let mut p = best;
                p[d] = x;
                p
            };
            let mut x1 = hi - INV_PHI * (hi - lo);
            let mut x2 = lo + INV_PHI * (hi - lo);
            let mut f1 = eval(at(x1))?;
            let mut f2 = eval(at(x2))?;
            for _ in 0..40 {
                if f1 < f2 {
                    lo = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = lo + INV_PHI * (hi - lo);
                    f2 = eval(at(x2))?;
                } else {
                    hi = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = hi - INV_PHI * (hi - lo);
                    f1 = eval(at(x1))?;
                }
                if hi - lo < 1e-9 * (1.0 + math::abs(hi)) {
                    break;
                }
            }
            let (x, f) = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
            if f > best_rate {
                best_rate = f;
                best = at(x);
            }
        }
    }
    Ok(Optimum {
        mu: best[0],
        epsilon: best[1],
        delta: Angle::from_degrees(best[2])?,
        rate_per_pulse: best_rate,
        evaluations,
    })
}

/// Visibility at which the expected both-send QBER of post-selected windows
/// equals `target_qber`, by bisection (the QBER falls monotonically with
/// visibility).
pub fn calibrate_visibility(params: &ProtocolParams, model: &ChannelModel, target_qber: f64) -> Result<f64> {
    let qber = |v: f64| {
        let m = ChannelModel {
            visibility: v,
            ..*model
        };
        expected_both_send_qber(params, &m).unwrap_or(f64::NAN)
    };
    let (q_lo, q_hi) = (qber(1.0), qber(0.0));
    if !(target_qber >= q_lo && target_qber <= q_hi) {
        return Err(Error::InvalidRange(format!(
            "target QBER {target_qber} outside reachable [{q_lo}, {q_hi}]"
        )));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if qber(mid) > target_qber {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
