//! Channel phase drift, reference-pulse interference counts, and the
//! least-squares phase estimator.
//!
//! Alice's four reference pulses carry modulated phase differences
//! `Δθ_i = {0, π/2, π, 3π/2}`. With channel phase `φ`, the interference
//! probability of slot `i` is `p_Ti(φ) = cos²((Δθ_i + φ)/2)`, and the
//! measured probabilities are `p_i = 2 N_i / Σ N`. The estimate minimizes
//! `Σ (p_i − p_Ti(φ))²`.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::channel::PulseSchedule;
use crate::error::{check_range, Error, Result};
use crate::math;
use crate::phase::Angle;

/// Mean reference detections per 12 μs statistics span.
pub const DEFAULT_COUNTS_PER_SPAN: f64 = 45.0;
/// RMS channel-phase drift over one statistics span.
pub const DEFAULT_SPAN_DRIFT_RAD: f64 = 0.073;

/// Modulated phase differences of the four reference slots.
pub const REFERENCE_PHASES: [f64; 4] = [
    0.0,
    core::f64::consts::FRAC_PI_2,
    core::f64::consts::PI,
    3.0 * core::f64::consts::FRAC_PI_2,
];

/// Per-window random-walk step that accumulates `span_rms` over
/// `windows_per_span` steps.
pub fn drift_scale_for_span(span_rms: f64, windows_per_span: u32) -> f64 {
    span_rms / math::sqrt(f64::from(windows_per_span))
}

/// One Gaussian random-walk step of scale `step_rms`. No reduction is
/// applied.
pub fn drift_step<R: Rng + ?Sized>(current: Angle, step_rms: f64, rng: &mut R) -> Angle {
    if step_rms == 0.0 {
        return current;
    }
    let z: f64 = StandardNormal.sample(rng);
    Angle::raw(current.radians() + step_rms * z)
}

/// Theoretical slot probabilities `p_Ti(φ)`; they sum to 2.
pub fn reference_probabilities(phase: Angle) -> [f64; 4] {
    reference_probabilities_with_visibility(phase.radians(), 1.0)
}

fn reference_probabilities_with_visibility(phase: f64, visibility: f64) -> [f64; 4] {
    REFERENCE_PHASES.map(|t| 0.5 * (1.0 + visibility * math::cos(t + phase)))
}

/// Detections of the four reference slots, summed over a statistics span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ReferenceCounts(pub [u64; 4]);

impl ReferenceCounts {
    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    /// Measured probabilities `p_i = 2 N_i / Σ N`.
    pub fn probabilities(&self) -> Result<[f64; 4]> {
        let total = self.total();
        if total == 0 {
            return Err(Error::NoReferenceCounts);
        }
        let t = total as f64;
        Ok(self.0.map(|n| 2.0 * n as f64 / t))
    }

    pub fn add(&mut self, other: &ReferenceCounts) {
        for (a, b) in self.0.iter_mut().zip(other.0) {
            *a += b;
        }
    }
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    match Poisson::new(mean) {
        Ok(d) => d.sample(rng) as u64,
        Err(_) => 0,
    }
}

/// Poisson counts for the four slots at channel phase `true_phase`, with
/// expected total `mean_total_counts`.
pub fn simulate_reference_counts<R: Rng + ?Sized>(
    true_phase: Angle,
    mean_total_counts: f64,
    rng: &mut R,
) -> ReferenceCounts {
    sample_reference_counts(true_phase.radians(), mean_total_counts, 1.0, rng)
}

/// As [`simulate_reference_counts`] with a fringe visibility below one.
pub(crate) fn sample_reference_counts<R: Rng + ?Sized>(
    phase: f64,
    mean_total_counts: f64,
    visibility: f64,
    rng: &mut R,
) -> ReferenceCounts {
    let p = reference_probabilities_with_visibility(phase, visibility);
    ReferenceCounts(p.map(|pi| poisson(0.5 * mean_total_counts * pi, rng)))
}

/// Least-squares objective between measured and theoretical probabilities.
pub fn fit_error(measured: &[f64; 4], phase: f64) -> f64 {
    let theory = reference_probabilities_with_visibility(phase, 1.0);
    measured.iter().zip(theory).map(|(p, t)| (p - t) * (p - t)).sum()
}

/// Closed-form minimizer of [`fit_error`].
///
/// `p_Ti(φ) = ½ + ½ cos(Δθ_i + φ)` and the vectors `cos Δθ_i`, `sin Δθ_i`
/// over the four slots are orthogonal with equal norm, so the objective is
/// `const − ½[(p₁ − p₃) cos φ + (p₄ − p₂) sin φ]`.
pub fn estimate_phase(counts: &ReferenceCounts) -> Result<Angle> {
    let p = counts.probabilities()?;
    Ok(estimate_from_probabilities(&p))
}

fn estimate_from_probabilities(p: &[f64; 4]) -> Angle {
    Angle::raw(math::atan2(p[3] - p[1], p[0] - p[2]))
}

/// Accuracy of the reference-pulse phase estimate for a signal window.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ErrorProfile {
    /// RMS of the minor angle between estimate and true signal phase.
    pub rms_error: f64,
    /// `E[sin²(err/2)]`: error rate induced on an interfering signal.
    pub induced_qber: f64,
    pub trials: u64,
    /// Trials skipped because the span collected no reference counts.
    pub no_estimate: u64,
}

/// Monte Carlo profile of the estimation error.
///
/// Each trial draws a uniform channel phase, walks it through one statistics
/// span with RMS drift `span_drift_rad`, collects reference counts once per
/// frame at the frame's phase (expected total `mean_total_counts` per span;
/// `f64::INFINITY` uses noiseless probabilities), and compares the estimate
/// to the phase at a uniformly chosen signal window of the span.
pub fn estimation_error_profile(
    mean_total_counts: f64,
    span_drift_rad: f64,
    n_trials: u64,
    seed: u64,
) -> Result<ErrorProfile> {
    check_range(
        "mean_total_counts",
        mean_total_counts,
        mean_total_counts > 0.0,
        "(0, inf]",
    )?;
    check_range(
        "span_drift_rad",
        span_drift_rad,
        span_drift_rad >= 0.0 && span_drift_rad.is_finite(),
        "[0, inf)",
    )?;
    let schedule = PulseSchedule::EXPERIMENT;
    let frames = schedule.frames_per_span() as usize;
    let per_frame = schedule.signal_slots as usize;
    let windows = frames * per_frame;
    let step = drift_scale_for_span(span_drift_rad, windows as u32);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut path = alloc::vec![0.0f64; windows];
    let (mut sum_sq, mut sum_qber, mut used, mut skipped) = (0.0, 0.0, 0u64, 0u64);
    for _ in 0..n_trials {
        let mut phase = rng.random::<f64>() * math::TAU;
        for slot in path.iter_mut() {
            phase = drift_step(Angle::raw(phase), step, &mut rng).radians();
            *slot = phase;
        }
        let estimate = if mean_total_counts.is_infinite() {
            let mut p = [0.0; 4];
            for f in 0..frames {
                let q = reference_probabilities(Angle::raw(path[(f + 1) * per_frame - 1]));
                for (acc, qi) in p.iter_mut().zip(q) {
                    *acc += qi / frames as f64;
                }
            }
            Some(estimate_from_probabilities(&p))
        } else {
            let mut counts = ReferenceCounts::default();
            for f in 0..frames {
                let c = simulate_reference_counts(
                    Angle::raw(path[(f + 1) * per_frame - 1]),
                    mean_total_counts / frames as f64,
                    &mut rng,
                );
                counts.add(&c);
            }
            estimate_phase(&counts).ok()
        };
        let signal = path[rng.random_range(0..windows)];
        match estimate {
            Some(est) => {
                let err = Angle::raw(est.radians() - signal).minor().radians();
                sum_sq += err * err;
                let s = math::sin(err / 2.0);
                sum_qber += s * s;
                used += 1;
            }
            None => skipped += 1,
        }
    }
    let n = used.max(1) as f64;
    Ok(ErrorProfile {
        rms_error: math::sqrt(sum_sq / n),
        induced_qber: sum_qber / n,
        trials: used,
        no_estimate: skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::{FRAC_PI_2, PI};
    use proptest::prelude::*;

    fn noiseless_counts(phase: f64, scale: f64) -> ReferenceCounts {
        ReferenceCounts(reference_probabilities(Angle::raw(phase)).map(|p| (p * scale).round() as u64))
    }

    #[test]
    fn estimator_examples() {
        let e = estimate_phase(&ReferenceCounts([2, 1, 0, 1])).unwrap();
        assert!(e.radians().abs() < 1e-15);
        let e = estimate_phase(&ReferenceCounts([1, 0, 1, 2])).unwrap();
        assert!((e.radians() - FRAC_PI_2).abs() < 1e-15);
        assert_eq!(estimate_phase(&ReferenceCounts([0; 4])), Err(Error::NoReferenceCounts));
    }

    #[test]
    fn theoretical_probabilities() {
        let p = reference_probabilities(Angle::ZERO);
        for (a, b) in p.iter().zip([1.0, 0.5, 0.0, 0.5]) {
            assert!((a - b).abs() < 1e-15);
        }
        let p = reference_probabilities(Angle::raw(FRAC_PI_2));
        for (a, b) in p.iter().zip([0.5, 0.0, 0.5, 1.0]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn exact_on_noiseless_counts_on_degree_grid() {
        for deg in -180..180 {
            let phi = f64::from(deg).to_radians();
            // Exact real-valued "counts": scale the probabilities, no rounding.
            let p = reference_probabilities(Angle::raw(phi));
            let est = estimate_from_probabilities(&p);
            let err = Angle::raw(est.radians() - phi).minor().radians();
            assert!(err < 1e-12, "{deg}: {err}");
        }
    }

    #[test]
    fn large_mean_count_ratios_follow_theory() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = simulate_reference_counts(Angle::ZERO, 4e7, &mut rng);
        let t = c.total() as f64;
        for (n, expect) in c.0.iter().zip([0.5, 0.25, 0.0, 0.25]) {
            assert!((*n as f64 / t - expect).abs() < 1e-3);
        }
    }

    #[test]
    fn total_counts_are_poisson() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 20_000;
        let totals: alloc::vec::Vec<f64> = (0..n)
            .map(|i| simulate_reference_counts(Angle::raw(f64::from(i) * 0.01), 45.0, &mut rng).total() as f64)
            .collect();
        let mean = totals.iter().sum::<f64>() / f64::from(n);
        let var = totals.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / f64::from(n - 1);
        // mean: 45 ± 3·sqrt(45/n); dispersion index 1 ± 3·sqrt(2/n)
        assert!((mean - 45.0).abs() < 3.0 * (45.0 / f64::from(n)).sqrt(), "{mean}");
        assert!(
            (var / mean - 1.0).abs() < 3.0 * (2.0 / f64::from(n)).sqrt(),
            "{}",
            var / mean
        );
    }

    #[test]
    fn zero_drift_keeps_phase() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = Angle::raw(1.25);
        assert_eq!(drift_step(a, 0.0, &mut rng), a);
    }

    #[test]
    fn span_drift_rms_matches_calibration() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let step = drift_scale_for_span(DEFAULT_SPAN_DRIFT_RAD, 180);
        let trials = 100_000;
        let mut sq = 0.0;
        for _ in 0..trials {
            let mut a = Angle::ZERO;
            for _ in 0..180 {
                a = drift_step(a, step, &mut rng);
            }
            sq += a.radians() * a.radians();
        }
        let rms = (sq / f64::from(trials)).sqrt();
        assert!((rms / DEFAULT_SPAN_DRIFT_RAD - 1.0).abs() < 0.05, "{rms}");
    }

    #[test]
    fn span_increments_are_uncorrelated() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let step = drift_scale_for_span(DEFAULT_SPAN_DRIFT_RAD, 180);
        let spans = 20_000;
        let mut incs = alloc::vec::Vec::with_capacity(spans);
        let mut a = Angle::ZERO;
        for _ in 0..spans {
            let start = a;
            for _ in 0..180 {
                a = drift_step(a, step, &mut rng);
            }
            incs.push((a - start).radians());
        }
        let mean = incs.iter().sum::<f64>() / spans as f64;
        let var: f64 = incs.iter().map(|x| (x - mean) * (x - mean)).sum();
        let cov: f64 = incs.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
        assert!((cov / var).abs() < 0.02, "{}", cov / var);
    }

    #[test]
    fn infinite_counts_without_drift_are_exact() {
        let p = estimation_error_profile(f64::INFINITY, 0.0, 10_000, 1).unwrap();
        assert!(p.rms_error < 1e-12);
        assert!(p.induced_qber < 1e-20);
    }

    #[test]
    fn drift_only_error_is_below_half_span_bound() {
        let p = estimation_error_profile(f64::INFINITY, DEFAULT_SPAN_DRIFT_RAD, 20_000, 2).unwrap();
        let bound = (DEFAULT_SPAN_DRIFT_RAD / 2.0).sin().powi(2);
        assert!(p.induced_qber <= bound, "{} > {bound}", p.induced_qber);
        assert!(p.induced_qber > 0.0);
    }

    #[test]
    fn profile_rejects_bad_arguments() {
        assert!(estimation_error_profile(0.0, 0.0, 10, 1).is_err());
        assert!(estimation_error_profile(45.0, -1.0, 10, 1).is_err());
    }

    proptest! {
        #[test]
        fn measured_probabilities_sum_to_two(c in proptest::array::uniform4(0u64..10_000)) {
            let counts = ReferenceCounts(c);
            if counts.total() > 0 {
                let s: f64 = counts.probabilities().unwrap().iter().sum();
                prop_assert!((s - 2.0).abs() < 1e-12);
            }
        }

        #[test]
        fn estimate_is_rotation_equivariant(phi in -PI..PI, theta in -PI..PI) {
            let a = estimate_from_probabilities(&reference_probabilities(Angle::raw(phi)));
            let b = estimate_from_probabilities(&reference_probabilities(Angle::raw(phi + theta)));
            let diff = Angle::raw(b.radians() - a.radians() - theta).minor().radians();
            prop_assert!(diff < 1e-9);
        }

        #[test]
        fn noiseless_integer_counts_recover_phase(deg in 0u32..360) {
            let phi = f64::from(deg).to_radians();
            let est = estimate_phase(&noiseless_counts(phi, 1e9)).unwrap();
            prop_assert!(Angle::raw(est.radians() - phi).minor().radians() < 1e-6);
        }
    }
}
