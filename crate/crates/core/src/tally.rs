//! Count bookkeeping for twin-field states and detector channels.
//!
//! Counts are stored as `f64` so that the same containers carry observed
//! integer counts (exact up to 2^53) and analytic expectations.

use core::ops::AddAssign;

/// Joint sending decision of Alice and Bob in one window.
///
/// The two-character label is Alice's decision followed by Bob's, `1` for
/// sending, matching the `Sent-CD` naming of raw tally files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum TwinState {
    /// `00`: neither sends.
    Vacuum,
    /// `01` (0α): only Bob sends.
    BobOnly,
    /// `10` (α0): only Alice sends.
    AliceOnly,
    /// `11` (αα): both send.
    Both,
}

impl TwinState {
    pub const ALL: [TwinState; 4] = [
        TwinState::Vacuum,
        TwinState::BobOnly,
        TwinState::AliceOnly,
        TwinState::Both,
    ];

    pub fn from_decisions(alice_sent: bool, bob_sent: bool) -> Self {
        match (alice_sent, bob_sent) {
            (false, false) => TwinState::Vacuum,
            (false, true) => TwinState::BobOnly,
            (true, false) => TwinState::AliceOnly,
            (true, true) => TwinState::Both,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn alice_sent(self) -> bool {
        matches!(self, TwinState::AliceOnly | TwinState::Both)
    }

    pub fn bob_sent(self) -> bool {
        matches!(self, TwinState::BobOnly | TwinState::Both)
    }

    /// Raw-file label, e.g. `"01"`.
    pub fn label(self) -> &'static str {
        match self {
            TwinState::Vacuum => "00",
            TwinState::BobOnly => "01",
            TwinState::AliceOnly => "10",
            TwinState::Both => "11",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        TwinState::ALL.into_iter().find(|s| s.label() == label)
    }

    /// Ket notation, e.g. `"0α"`.
    pub fn ket(self) -> &'static str {
        match self {
            TwinState::Vacuum => "00",
            TwinState::BobOnly => "0α",
            TwinState::AliceOnly => "α0",
            TwinState::Both => "αα",
        }
    }

    /// Prior probability of the state when each party sends with
    /// probability `epsilon`.
    pub fn prior(self, epsilon: f64) -> f64 {
        let p = |sent: bool| if sent { epsilon } else { 1.0 - epsilon };
        p(self.alice_sent()) * p(self.bob_sent())
    }

    /// Alice keeps bit 1 when sending, Bob keeps bit 0 when sending, so an
    /// effective event is a bit error iff both made the same decision.
    pub fn is_bit_error(self) -> bool {
        self.alice_sent() == self.bob_sent()
    }
}

/// Physical detector channel at the measurement station, as recorded in raw
/// data (`ch0`, `ch1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Channel {
    Ch0,
    Ch1,
}

impl Channel {
    pub const ALL: [Channel; 2] = [Channel::Ch0, Channel::Ch1];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Channel::Ch0 => "ch0",
            Channel::Ch1 => "ch1",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Channel::ALL.into_iter().find(|c| c.label() == label)
    }

    pub fn other(self) -> Channel {
        match self {
            Channel::Ch0 => Channel::Ch1,
            Channel::Ch1 => Channel::Ch0,
        }
    }
}

/// Which raw channel plays the role of the left (constructive at zero phase)
/// detector in the phase-flip bound. The default `L = ch0, R = ch1` is the
/// assignment that reproduces the experimental bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DetectorMap {
    pub left: Channel,
}

impl Default for DetectorMap {
    fn default() -> Self {
        DetectorMap { left: Channel::Ch0 }
    }
}

impl DetectorMap {
    pub fn swapped() -> Self {
        DetectorMap { left: Channel::Ch1 }
    }

    pub fn right(&self) -> Channel {
        self.left.other()
    }
}

/// Sent pulses and effective events per twin-field state for one set of
/// windows (test set `u`, key set `v`, or a whole session).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TallySet {
    /// Indexed by [`TwinState::index`].
    pub sent: [f64; 4],
    /// Effective events (exactly one click), `[state][channel]`.
    pub detected: [[f64; 2]; 4],
}

impl TallySet {
    pub fn sent(&self, state: TwinState) -> f64 {
        self.sent[state.index()]
    }

    pub fn detected(&self, state: TwinState, channel: Channel) -> f64 {
        self.detected[state.index()][channel.index()]
    }

    /// Effective events of `state` summed over both channels.
    pub fn effective(&self, state: TwinState) -> f64 {
        let d = self.detected[state.index()];
        d[0] + d[1]
    }

    pub fn total_sent(&self) -> f64 {
        self.sent.iter().sum()
    }

    pub fn total_effective(&self) -> f64 {
        TwinState::ALL.iter().map(|&s| self.effective(s)).sum()
    }

    pub fn set_sent(&mut self, state: TwinState, value: f64) {
        self.sent[state.index()] = value;
    }

    pub fn set_detected(&mut self, state: TwinState, channel: Channel, value: f64) {
        self.detected[state.index()][channel.index()] = value;
    }

    /// All counts finite, non-negative, and no state with more effective
    /// events than sent pulses. Returns the first offending state.
    pub fn check_consistent(&self) -> Result<(), TwinState> {
        for s in TwinState::ALL {
            let ok = self.sent(s) >= 0.0
                && self.detected[s.index()].iter().all(|&d| d >= 0.0 && d.is_finite())
                && self.effective(s) <= self.sent(s);
            if !ok {
                return Err(s);
            }
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> TallySet {
        let mut out = *self;
        for s in 0..4 {
            out.sent[s] *= factor;
            out.detected[s][0] *= factor;
            out.detected[s][1] *= factor;
        }
        out
    }
}

impl AddAssign<&TallySet> for TallySet {
    fn add_assign(&mut self, rhs: &TallySet) {
        for s in 0..4 {
            self.sent[s] += rhs.sent[s];
            self.detected[s][0] += rhs.detected[s][0];
            self.detected[s][1] += rhs.detected[s][1];
        }
    }
}

/// Everything a session produces, in the shape of a raw tally file:
/// all windows, the post-selected windows, and the selected windows split
/// into test (`u`) and key (`v`) sets.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SessionTallies {
    pub all: TallySet,
    pub selected: TallySet,
    pub u: TallySet,
    pub v: TallySet,
}

impl SessionTallies {
    pub fn n_windows(&self) -> f64 {
        self.all.total_sent()
    }

    pub fn merge(&mut self, other: &SessionTallies) {
        self.all += &other.all;
        self.selected += &other.selected;
        self.u += &other.u;
        self.v += &other.v;
    }
}
