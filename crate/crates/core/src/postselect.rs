//! Phase post-selection, test-set sampling, and the twin-field state left
//! after discarded windows are announced.

use alloc::vec::Vec;

use rand::Rng;

use crate::channel::WindowRecord;
use crate::error::{check_range, Error, Result};
use crate::phase::Angle;
use crate::tally::TwinState;

/// Result of post-selecting a batch of windows. Indices refer to the input
/// slice.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SelectionOutcome {
    pub kept: Vec<usize>,
    pub discarded: Vec<usize>,
    /// `(alice_bit, bob_bit)` of each discarded window, announced publicly.
    pub announced_bits: Vec<(bool, bool)>,
}

/// Keep a window iff the minor angle of its announced phase is strictly
/// below `delta_threshold`. Windows without an estimate are discarded.
pub fn select(windows: &[WindowRecord], delta_threshold: Angle) -> SelectionOutcome {
    let mut out = SelectionOutcome::default();
    for (i, w) in windows.iter().enumerate() {
        if passes(w.estimated_phase, delta_threshold) {
            out.kept.push(i);
        } else {
            out.discarded.push(i);
            out.announced_bits.push(w.bits());
        }
    }
    out
}

#[inline]
pub fn passes(estimated_phase: Option<Angle>, delta_threshold: Angle) -> bool {
    estimated_phase.is_some_and(|d| d.minor().radians() < delta_threshold.radians())
}

/// Assign each kept index to the test set `u` independently with
/// probability `p_t`; the rest form the key set `v`.
pub fn split_test_set<R: Rng + ?Sized>(kept: &[usize], p_t: f64, rng: &mut R) -> Result<(Vec<usize>, Vec<usize>)> {
    check_range("p_t", p_t, p_t > 0.0 && p_t < 1.0, "(0, 1)")?;
    let (mut u, mut v) = (Vec::new(), Vec::new());
    for &i in kept {
        if rng.random::<f64>() < p_t {
            u.push(i);
        } else {
            v.push(i);
        }
    }
    Ok((u, v))
}

/// Mixture weights of the post-selected twin-field state, in the order
/// `(αα, α0, 0α, 00)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StateCoefficients {
    pub c: [f64; 4],
}

impl StateCoefficients {
    pub const LABELS: [&'static str; 4] = ["αα", "α0", "0α", "00"];

    pub const STATES: [TwinState; 4] = [
        TwinState::Both,
        TwinState::AliceOnly,
        TwinState::BobOnly,
        TwinState::Vacuum,
    ];

    pub fn get(&self, state: TwinState) -> f64 {
        let i = Self::STATES.iter().position(|&s| s == state).unwrap_or(3);
        self.c[i]
    }
}

/// `c_i = (a_i − b_i) / N'` with `N' = Σ (a_i − b_i)`, from the sent counts
/// `a` and the announced discarded counts `b`, both in coefficient order.
pub fn posterior_state(a: [f64; 4], b: [f64; 4]) -> Result<StateCoefficients> {
    for i in 0..4 {
        if !(a[i] >= 0.0 && b[i] >= 0.0) {
            return Err(Error::OutOfRange {
                name: StateCoefficients::LABELS[i],
                value: a[i].min(b[i]),
                range: "[0, inf)",
            });
        }
        if b[i] > a[i] {
            return Err(Error::InconsistentAnnouncement {
                state: StateCoefficients::LABELS[i],
                sent: a[i],
                discarded: b[i],
            });
        }
    }
    let remaining: [f64; 4] = core::array::from_fn(|i| a[i] - b[i]);
    let n_prime: f64 = remaining.iter().sum();
    if n_prime <= 0.0 {
        return Err(Error::EmptySelection);
    }
    Ok(StateCoefficients {
        c: remaining.map(|r| r / n_prime),
    })
}
