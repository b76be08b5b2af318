use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scfqkd_core::phasetrack::{
    estimate_phase, estimation_error_profile, fit_error, simulate_reference_counts, DEFAULT_COUNTS_PER_SPAN,
    DEFAULT_SPAN_DRIFT_RAD,
};
use scfqkd_core::Angle;

/// Exhaustive minimizer of the least-squares objective on a 0.01° grid.
fn grid_minimizer(p: &[f64; 4]) -> f64 {
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..36_000 {
        let phi = (i as f64 * 0.01).to_radians();
        let e = fit_error(p, phi);
        if e < best.0 {
            best = (e, phi);
        }
    }
    best.1
}

#[test]
fn closed_form_agrees_with_grid_search_on_noisy_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(45);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < 1000 {
        let truth = Angle::new(rng.random::<f64>() * std::f64::consts::TAU).unwrap();
        let counts = simulate_reference_counts(truth, DEFAULT_COUNTS_PER_SPAN, &mut rng);
        let Ok(p) = counts.probabilities() else { continue };
        let closed = estimate_phase(&counts).unwrap();
        let grid = Angle::new(grid_minimizer(&p)).unwrap();
        worst = worst.max((closed - grid).minor().degrees());
        done += 1;
    }
    assert!(worst <= 0.02, "worst disagreement {worst}°");
}

#[test]
fn induced_qber_below_bound_at_calibrated_drift() {
    let profile = estimation_error_profile(DEFAULT_COUNTS_PER_SPAN, DEFAULT_SPAN_DRIFT_RAD, 20_000, 7).unwrap();
    assert!(profile.induced_qber < 0.035, "{profile:?}");
    assert!(profile.induced_qber > 0.0);
}

#[test]
fn error_shrinks_with_more_counts() {
    let few = estimation_error_profile(20.0, 0.0, 5_000, 1).unwrap();
    let many = estimation_error_profile(2_000.0, 0.0, 5_000, 1).unwrap();
    let exact = estimation_error_profile(f64::INFINITY, 0.0, 100, 1).unwrap();
    assert!(many.rms_error < few.rms_error);
    assert!(exact.rms_error < 1e-9, "{exact:?}");
}
