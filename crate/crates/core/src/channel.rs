//! Protocol and channel parameters, the threshold-detector click model and
//! the analytic (expected-value) session tallies.

use alloc::vec::Vec;

use crate::error::{check_range, Result};
use crate::math;
use crate::phase::{interfere_unchecked, Angle};
use crate::tally::{Channel, SessionTallies, TallySet, TwinState};

/// Source and post-processing parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProtocolParams {
    /// Mean photon number of a sent signal pulse.
    pub mu: f64,
    /// Probability that each party sends in a window.
    pub epsilon: f64,
    /// Post-selection threshold on the announced phase difference.
    pub delta_threshold: Angle,
    /// Error-correction inefficiency factor.
    pub f_ec: f64,
    /// Fraction of post-selected windows sampled into the test set.
    pub p_t: f64,
    /// Reference intensity per 1 ns.
    pub mu_ref: f64,
    pub gamma_a: Angle,
    pub gamma_b: Angle,
    /// Multiplier applied to `mu` on the channel (e.g. the fraction of the
    /// signal inside a detection gate). Estimation formulas always use `mu`.
    pub intensity_multiplier: f64,
}

impl Default for ProtocolParams {
    /// The 50 km experimental operating point.
    fn default() -> Self {
        ProtocolParams {
            mu: 0.002,
            epsilon: 0.021,
            delta_threshold: Angle::raw(30f64.to_radians()),
            f_ec: 1.1,
            p_t: 0.1,
            mu_ref: 0.062,
            gamma_a: Angle::ZERO,
            gamma_b: Angle::ZERO,
            intensity_multiplier: 1.0,
        }
    }
}

impl ProtocolParams {
    /// Full invariant check required by the estimation chain.
    pub fn validate(&self) -> Result<()> {
        check_range("mu", self.mu, self.mu > 0.0 && self.mu.is_finite(), "(0, inf)")?;
        check_range(
            "epsilon",
            self.epsilon,
            self.epsilon > 0.0 && self.epsilon < 1.0,
            "(0, 1)",
        )?;
        self.validate_post_processing()
    }

    /// Weaker check for simulation: vacuum-only (`epsilon = 0`) or
    /// zero-intensity sessions are well defined there.
    pub fn validate_for_simulation(&self) -> Result<()> {
        check_range("mu", self.mu, self.mu >= 0.0 && self.mu.is_finite(), "[0, inf)")?;
        check_range("epsilon", self.epsilon, (0.0..=1.0).contains(&self.epsilon), "[0, 1]")?;
        self.validate_post_processing()
    }

    fn validate_post_processing(&self) -> Result<()> {
        let d = self.delta_threshold.radians();
        check_range("delta_threshold", d, d > 0.0 && d <= math::PI, "(0, pi]")?;
        check_range("f_ec", self.f_ec, self.f_ec >= 1.0 && self.f_ec.is_finite(), "[1, inf)")?;
        check_range("p_t", self.p_t, self.p_t > 0.0 && self.p_t < 1.0, "(0, 1)")?;
        check_range("mu_ref", self.mu_ref, self.mu_ref >= 0.0, "[0, inf)")?;
        check_range(
            "intensity_multiplier",
            self.intensity_multiplier,
            self.intensity_multiplier >= 0.0 && self.intensity_multiplier.is_finite(),
            "[0, inf)",
        )?;
        Angle::new(self.gamma_a.radians())?;
        Angle::new(self.gamma_b.radians())?;
        Ok(())
    }

    /// Fixed source phase offset `γ_A − γ_B` added to the channel phase.
    pub fn source_phase_offset(&self) -> Angle {
        self.gamma_a - self.gamma_b
    }

    pub(crate) fn channel_mu(&self) -> f64 {
        self.mu * self.intensity_multiplier
    }
}

/// How the simulator learns the phase difference it announces.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum PhaseReadout {
    /// Estimate from simulated reference-pulse counts over each 12 μs span.
    References { counts_per_span: f64 },
    /// Announce the true phase (no estimation noise).
    Ideal,
}

impl Default for PhaseReadout {
    fn default() -> Self {
        PhaseReadout::References {
            counts_per_span: crate::phasetrack::DEFAULT_COUNTS_PER_SPAN,
        }
    }
}

/// Lossy channels from Alice and Bob to the measurement station, plus the
/// detectors there. The left detector is `ch0`, the port that is bright when
/// both fields arrive in phase.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ChannelModel {
    pub fiber_km_a: f64,
    pub fiber_km_b: f64,
    pub atten_db_per_km: f64,
    /// Lumped component loss between fiber and beam splitter, excluding the
    /// splitter's own 3 dB division.
    pub comp_loss_db_a: f64,
    pub comp_loss_db_b: f64,
    pub det_eff_left: f64,
    pub det_eff_right: f64,
    /// Dark-click probability per window per detector.
    pub dark_prob: f64,
    /// Standard deviation of the per-window Gaussian phase increment.
    pub drift_rad_per_window: f64,
    pub visibility: f64,
    pub readout: PhaseReadout,
}

/// 10·log10(2): the 50:50 split that [`crate::phase::interfere`] already
/// applies and that the lumped per-output component losses include.
const SPLITTER_DB: f64 = 3.010_299_956_639_812;

/// Visibility for which the expected both-send QBER at 50 km and Δ = 30°
/// equals the measured 2962 / 50490. Reproduced by
/// [`crate::keyrate::calibrate_visibility`].
pub const CALIBRATED_VISIBILITY: f64 = 0.928_327_757_7;

impl Default for ChannelModel {
    /// 2 × 25 km of standard fiber with the characterized component losses
    /// and detector efficiencies of the 50 km experiment.
    fn default() -> Self {
        ChannelModel {
            fiber_km_a: 25.0,
            fiber_km_b: 25.0,
            atten_db_per_km: 0.2,
            comp_loss_db_a: 4.78 - SPLITTER_DB,
            // Bob's spool measured 5.2 dB instead of 5.0 dB.
            comp_loss_db_b: 4.44 + 0.2 - SPLITTER_DB,
            det_eff_left: 0.6052,
            det_eff_right: 0.6261,
            dark_prob: 1e-8,
            drift_rad_per_window: crate::phasetrack::drift_scale_for_span(
                crate::phasetrack::DEFAULT_SPAN_DRIFT_RAD,
                PulseSchedule::EXPERIMENT.windows_per_span(),
            ),
            visibility: CALIBRATED_VISIBILITY,
            readout: PhaseReadout::default(),
        }
    }
}

/// Which party's arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    A,
    B,
}

impl ChannelModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("fiber_km_a", self.fiber_km_a),
            ("fiber_km_b", self.fiber_km_b),
            ("atten_db_per_km", self.atten_db_per_km),
            ("comp_loss_db_a", self.comp_loss_db_a),
            ("comp_loss_db_b", self.comp_loss_db_b),
            ("drift_rad_per_window", self.drift_rad_per_window),
        ] {
            check_range(name, v, v >= 0.0 && v.is_finite(), "[0, inf)")?;
        }
        for (name, v) in [
            ("det_eff_left", self.det_eff_left),
            ("det_eff_right", self.det_eff_right),
            ("dark_prob", self.dark_prob),
            ("visibility", self.visibility),
        ] {
            check_range(name, v, (0.0..=1.0).contains(&v), "[0, 1]")?;
        }
        if let PhaseReadout::References { counts_per_span } = self.readout {
            check_range(
                "counts_per_span",
                counts_per_span,
                counts_per_span > 0.0 && counts_per_span.is_finite(),
                "(0, inf)",
            )?;
        }
        Ok(())
    }

    /// Symmetric arms summing to `total_km`.
    pub fn with_total_distance(mut self, total_km: f64) -> Self {
        self.fiber_km_a = total_km / 2.0;
        self.fiber_km_b = total_km / 2.0;
        self
    }

    pub fn total_distance_km(&self) -> f64 {
        self.fiber_km_a + self.fiber_km_b
    }

    pub fn det_eff(&self, channel: Channel) -> f64 {
        match channel {
            Channel::Ch0 => self.det_eff_left,
            Channel::Ch1 => self.det_eff_right,
        }
    }
}

/// Transmittance of one arm from source to the beam splitter input.
pub fn arm_transmittance(model: &ChannelModel, arm: Arm) -> f64 {
    let (km, comp) = match arm {
        Arm::A => (model.fiber_km_a, model.comp_loss_db_a),
        Arm::B => (model.fiber_km_b, model.comp_loss_db_b),
    };
    math::pow10(-(km * model.atten_db_per_km + comp) / 10.0)
}

/// Per-window click probabilities of the two detectors. Clicks are sampled
/// independently.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClickProbabilities {
    pub left: f64,
    pub right: f64,
}

impl ClickProbabilities {
    /// Probability that exactly the left (resp. right) detector clicks.
    pub fn effective(&self) -> (f64, f64) {
        (self.left * (1.0 - self.right), self.right * (1.0 - self.left))
    }
}

/// Precomputed per-arm input intensities so the inner simulation loop only
/// evaluates the interference and the two exponentials.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ClickModel {
    mu_a: f64,
    mu_b: f64,
    eff: [f64; 2],
    dark: f64,
    visibility: f64,
}

impl ClickModel {
    pub(crate) fn new(params: &ProtocolParams, model: &ChannelModel) -> Self {
        let mu = params.channel_mu();
        ClickModel {
            mu_a: mu * arm_transmittance(model, Arm::A),
            mu_b: mu * arm_transmittance(model, Arm::B),
            eff: [model.det_eff_left, model.det_eff_right],
            dark: model.dark_prob,
            visibility: model.visibility,
        }
    }

    #[inline]
    pub(crate) fn probabilities(&self, alice_sent: bool, bob_sent: bool, delta: f64) -> ClickProbabilities {
        let a = if alice_sent { self.mu_a } else { 0.0 };
        let b = if bob_sent { self.mu_b } else { 0.0 };
        let ports = interfere_unchecked(a, b, delta, self.visibility);
        // 1 - (1-d) e^{-x} written as d + (1-d)(1 - e^{-x}) to keep
        // precision at the tiny intensities involved.
        let click = |i: f64, eff: f64| {
            let lit = -math::expm1(-i * eff);
            self.dark + (1.0 - self.dark) * lit
        };
        ClickProbabilities {
            left: click(ports.i_left, self.eff[0]),
            right: click(ports.i_right, self.eff[1]),
        }
    }
}

/// Click probabilities for one window given both decisions and the relative
/// phase `delta` of the fields at the beam splitter.
pub fn click_probabilities(
    params: &ProtocolParams,
    model: &ChannelModel,
    alice_sent: bool,
    bob_sent: bool,
    delta: Angle,
) -> ClickProbabilities {
    ClickModel::new(params, model).probabilities(alice_sent, bob_sent, delta.radians())
}

/// One signal time window.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WindowRecord {
    pub window_id: u64,
    pub alice_sent: bool,
    pub bob_sent: bool,
    /// Relative phase of the signal fields at the beam splitter.
    pub true_phase: Angle,
    /// Announced phase difference; `None` when no reference counts were
    /// collected for the window's span.
    pub estimated_phase: Option<Angle>,
    pub click_left: bool,
    pub click_right: bool,
}

impl WindowRecord {
    pub fn state(&self) -> TwinState {
        TwinState::from_decisions(self.alice_sent, self.bob_sent)
    }

    /// Exactly one detector clicked.
    pub fn is_effective(&self) -> bool {
        self.click_left != self.click_right
    }

    /// Channel of the single click of an effective window.
    pub fn effective_channel(&self) -> Option<Channel> {
        match (self.click_left, self.click_right) {
            (true, false) => Some(Channel::Ch0),
            (false, true) => Some(Channel::Ch1),
            _ => None,
        }
    }

    /// Bits kept locally: Alice records 1 when sending, Bob records 0 when
    /// sending.
    pub fn bits(&self) -> (bool, bool) {
        (self.alice_sent, !self.bob_sent)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotKind {
    Signal,
    Reference,
    Recovery,
}

/// One slot of the 1 μs frame, in nanoseconds from the frame start.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub kind: SlotKind,
    pub start_ns: u32,
    pub span_ns: u32,
    /// Width of the optical pulse inside the slot (0 for recovery).
    pub pulse_ns: u32,
}

/// Time-multiplexing of signal and reference pulses within one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PulseSchedule {
    pub signal_slots: u32,
    pub signal_period_ns: u32,
    pub signal_pulse_ns: u32,
    pub reference_slots: u32,
    pub reference_ns: u32,
    pub recovery_ns: u32,
    pub frame_ns: u32,
    /// Reference statistics time used for one phase estimate.
    pub span_ns: u32,
}

impl PulseSchedule {
    pub const EXPERIMENT: PulseSchedule = PulseSchedule {
        signal_slots: 15,
        signal_period_ns: 30,
        signal_pulse_ns: 1,
        reference_slots: 4,
        reference_ns: 100,
        recovery_ns: 150,
        frame_ns: 1000,
        span_ns: 12_000,
    };

    pub fn slots(&self) -> Vec<Slot> {
        let mut out = Vec::new();
        let mut t = 0;
        for _ in 0..self.signal_slots {
            out.push(Slot {
                kind: SlotKind::Signal,
                start_ns: t,
                span_ns: self.signal_period_ns,
                pulse_ns: self.signal_pulse_ns,
            });
            t += self.signal_period_ns;
        }
        for _ in 0..self.reference_slots {
            out.push(Slot {
                kind: SlotKind::Reference,
                start_ns: t,
                span_ns: self.reference_ns,
                pulse_ns: self.reference_ns,
            });
            t += self.reference_ns;
        }
        out.push(Slot {
            kind: SlotKind::Recovery,
            start_ns: t,
            span_ns: self.recovery_ns,
            pulse_ns: 0,
        });
        out
    }

    /// Slots are contiguous, disjoint and end exactly at the frame boundary.
    pub fn tiles_frame(&self) -> bool {
        let slots = self.slots();
        let contiguous = slots.windows(2).all(|w| w[0].start_ns + w[0].span_ns == w[1].start_ns);
        let last = slots.last().map(|s| s.start_ns + s.span_ns);
        contiguous && slots.first().map(|s| s.start_ns) == Some(0) && last == Some(self.frame_ns)
    }

    pub fn frames_per_span(&self) -> u32 {
        self.span_ns / self.frame_ns
    }

    pub fn windows_per_span(&self) -> u32 {
        self.frames_per_span() * self.signal_slots
    }

    /// Signal windows per second.
    pub fn equivalent_rate_hz(&self) -> f64 {
        f64::from(self.signal_slots) * 1e9 / f64::from(self.frame_ns)
    }

    /// Raw pulse rate of the signal clock.
    pub fn system_rate_hz(&self) -> f64 {
        1e9 / f64::from(self.signal_period_ns)
    }
}

const QUADRATURE_NODES: usize = 48;

/// Expected effective-click probabilities (left-only, right-only) for
/// `state`, averaged over `delta` uniform on `[center - half, center + half]`.
pub(crate) fn averaged_effective(
    clicks: &ClickModel,
    state: TwinState,
    center: f64,
    half_width: f64,
    nodes: &[(f64, f64)],
) -> (f64, f64) {
    if !(state.alice_sent() && state.bob_sent()) {
        // Phase only matters when both fields are present.
        return clicks
            .probabilities(state.alice_sent(), state.bob_sent(), 0.0)
            .effective();
    }
    let (mut l, mut r) = (0.0, 0.0);
    for &(x, w) in nodes {
        let (el, er) = clicks.probabilities(true, true, center + half_width * x).effective();
        l += 0.5 * w * el;
        r += 0.5 * w * er;
    }
    (l, r)
}

/// Exact expected counts for a session of `n_windows`, without sampling.
///
/// The channel phase is taken uniform over the circle, so post-selection
/// keeps a fraction `Δ/π` of the windows and the relative signal phase of a
/// kept window is uniform on `[−Δ, Δ]`. Kept windows are split into the test
/// and key sets in proportion `p_t`.
pub fn expected_tallies(params: &ProtocolParams, model: &ChannelModel, n_windows: f64) -> SessionTallies {
    let clicks = ClickModel::new(params, model);
    let nodes = math::gauss_legendre(QUADRATURE_NODES);
    let delta = params.delta_threshold.radians().min(math::PI);
    let keep = delta / math::PI;
    let mut out = SessionTallies::default();
    for state in TwinState::ALL {
        let sent = n_windows * state.prior(params.epsilon);
        let (all_l, all_r) = averaged_effective(&clicks, state, 0.0, math::PI, &nodes);
        let (sel_l, sel_r) = averaged_effective(&clicks, state, 0.0, delta, &nodes);
        let fill = |t: &mut TallySet, n: f64, l: f64, r: f64| {
            t.set_sent(state, n);
            t.set_detected(state, Channel::Ch0, n * l);
            t.set_detected(state, Channel::Ch1, n * r);
        };
        fill(&mut out.all, sent, all_l, all_r);
        let kept = sent * keep;
        fill(&mut out.selected, kept, sel_l, sel_r);
        fill(&mut out.u, kept * params.p_t, sel_l, sel_r);
        fill(&mut out.v, kept * (1.0 - params.p_t), sel_l, sel_r);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn transmittance_examples() {
        let mut m = ChannelModel {
            comp_loss_db_a: 0.0,
            ..ChannelModel::default()
        };
        assert!(close(arm_transmittance(&m, Arm::A), 0.316_227_766, 1e-9));
        m.fiber_km_a = 0.0;
        assert_eq!(arm_transmittance(&m, Arm::A), 1.0);
        m.fiber_km_a = 25.0;
        m.comp_loss_db_a = 4.78;
        assert!(close(arm_transmittance(&m, Arm::A), 0.105_196, 1e-6));
    }

    #[test]
    fn default_model_reproduces_characterized_losses() {
        let m = ChannelModel::default();
        // Total per-output path loss including the split: 9.78 dB and 9.64 dB.
        let a = arm_transmittance(&m, Arm::A) / 2.0;
        let b = arm_transmittance(&m, Arm::B) / 2.0;
        assert!(close(-10.0 * a.log10(), 9.78, 1e-9));
        assert!(close(-10.0 * b.log10(), 9.64, 1e-9));
        assert!(m.validate().is_ok());
    }

    #[test]
    fn vacuum_has_only_dark_clicks() {
        let p = ProtocolParams::default();
        let m = ChannelModel {
            dark_prob: 0.0,
            ..ChannelModel::default()
        };
        let c = click_probabilities(&p, &m, false, false, Angle::ZERO);
        assert_eq!((c.left, c.right), (0.0, 0.0));
        let m = ChannelModel::default();
        let c = click_probabilities(&p, &m, false, false, Angle::ZERO);
        assert!(close(c.left, 1e-8, 1e-20) && close(c.right, 1e-8, 1e-20));
    }

    #[test]
    fn single_sender_splits_evenly_for_any_phase() {
        let p = ProtocolParams::default();
        let m = ChannelModel {
            dark_prob: 0.0,
            det_eff_left: 0.6,
            det_eff_right: 0.6,
            ..ChannelModel::default()
        };
        let t = p.mu * arm_transmittance(&m, Arm::A) * 0.6;
        for d in [0.0, 1.0, 3.0] {
            let c = click_probabilities(&p, &m, true, false, Angle::raw(d));
            let expect = -(-t / 2.0).exp_m1();
            assert!(close(c.left, expect, 1e-12 * expect) && close(c.right, expect, 1e-12 * expect));
        }
    }

    #[test]
    fn in_phase_equal_arms_light_only_left() {
        let p = ProtocolParams::default();
        let m = ChannelModel {
            dark_prob: 1e-6,
            visibility: 1.0,
            comp_loss_db_b: ChannelModel::default().comp_loss_db_a,
            ..ChannelModel::default()
        };
        let eta = arm_transmittance(&m, Arm::A);
        let c = click_probabilities(&p, &m, true, true, Angle::ZERO);
        let bright = 1.0 - (1.0 - 1e-6) * (-2.0 * eta * p.mu * m.det_eff_left).exp();
        assert!(close(c.left, bright, 1e-15));
        assert!(close(c.right, 1e-6, 1e-15));
    }

    #[test]
    fn schedule_tiles_frame() {
        let s = PulseSchedule::EXPERIMENT;
        assert!(s.tiles_frame());
        assert_eq!(s.slots().len(), 20);
        assert_eq!(s.windows_per_span(), 180);
        assert_eq!(s.equivalent_rate_hz(), 15e6);
        assert!(close(s.system_rate_hz(), 33.3e6, 0.1e6));
        let broken = PulseSchedule { recovery_ns: 100, ..s };
        assert!(!broken.tiles_frame());
    }

    #[test]
    fn expected_tallies_zero_when_dark_and_mu_vanish() {
        let p = ProtocolParams {
            mu: 0.0,
            ..ProtocolParams::default()
        };
        let m = ChannelModel {
            dark_prob: 0.0,
            ..ChannelModel::default()
        };
        let t = expected_tallies(&p, &m, 1e6);
        for set in [t.all, t.selected, t.u, t.v] {
            assert_eq!(set.total_effective(), 0.0);
        }
        assert!(close(t.all.total_sent(), 1e6, 1e-6));
    }

    #[test]
    fn expected_tallies_conserve_windows() {
        let p = ProtocolParams::default();
        let m = ChannelModel::default();
        let t = expected_tallies(&p, &m, 1e9);
        assert!(close(t.all.total_sent(), 1e9, 1e-3));
        assert!(close(
            t.u.total_sent() + t.v.total_sent(),
            t.selected.total_sent(),
            1e-3
        ));
        assert!(close(t.selected.total_sent(), 1e9 / 6.0, 1e-3));
        assert!(t.all.check_consistent().is_ok());
    }

    #[test]
    fn expected_counts_fall_with_component_loss() {
        let p = ProtocolParams::default();
        let mut prev: Option<SessionTallies> = None;
        for loss in [0.0, 0.5, 1.0, 3.0, 10.0] {
            let m = ChannelModel {
                comp_loss_db_a: loss,
                comp_loss_db_b: loss,
                ..ChannelModel::default()
            };
            let t = expected_tallies(&p, &m, 1e9);
            if let Some(prev) = prev {
                for s in TwinState::ALL {
                    for c in Channel::ALL {
                        for (a, b) in [(prev.all, t.all), (prev.v, t.v)] {
                            assert!(b.detected(s, c) <= a.detected(s, c) * (1.0 + 1e-12));
                        }
                    }
                }
            }
            prev = Some(t);
        }
    }

    #[test]
    fn params_validation() {
        assert!(ProtocolParams::default().validate().is_ok());
        let bad = ProtocolParams {
            epsilon: 0.0,
            ..ProtocolParams::default()
        };
        assert!(bad.validate().is_err());
        assert!(bad.validate_for_simulation().is_ok());
        let bad = ProtocolParams {
            delta_threshold: Angle::raw(4.0),
            ..ProtocolParams::default()
        };
        assert!(bad.validate().is_err());
        let bad = ProtocolParams {
            f_ec: 0.9,
            ..ProtocolParams::default()
        };
        assert!(bad.validate().is_err());
    }
}
