use scfqkd_core::channel::{expected_tallies, PhaseReadout};
use scfqkd_core::session::{simulate_session, SessionSimulator};
use scfqkd_core::{Angle, ChannelModel, ProtocolParams, SessionTallies, TwinState};

/// Binomial z-score of an observed count against `n` trials at rate `p`.
fn z(observed: f64, n: f64, p: f64) -> f64 {
    let sd = (n * p * (1.0 - p)).sqrt();
    if sd == 0.0 {
        return if observed == n * p { 0.0 } else { f64::INFINITY };
    }
    (observed - n * p) / sd
}

/// Bright, fast-decorrelating channel read out ideally: the expected-value
/// model is then exact for every cell.
fn ideal_setup() -> (ProtocolParams, ChannelModel) {
    let p = ProtocolParams {
        mu: 0.5,
        epsilon: 0.3,
        ..ProtocolParams::default()
    };
    let m = ChannelModel {
        drift_rad_per_window: 3.0,
        readout: PhaseReadout::Ideal,
        ..ChannelModel::default()
    };
    (p, m)
}

/// z-scores of one draw for every state: sent, effective, kept and
/// post-selected effective counts, each conditional on the level above.
/// Pairs each score with its expected count.
fn cell_scores(t: &SessionTallies, expect: &SessionTallies, p: &ProtocolParams, n: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut push = |observed: f64, trials: f64, rate: f64| out.push((z(observed, trials, rate), trials * rate));
    for s in TwinState::ALL {
        push(t.all.sent(s), n, s.prior(p.epsilon));
        let sent = t.all.sent(s);
        push(t.all.effective(s), sent, expect.all.effective(s) / expect.all.sent(s));
        push(t.selected.sent(s), sent, expect.selected.sent(s) / expect.all.sent(s));
        let kept = t.selected.sent(s);
        push(
            t.selected.effective(s),
            kept,
            expect.selected.effective(s) / expect.selected.sent(s),
        );
    }
    out
}

#[test]
fn monte_carlo_matches_expected_tallies_with_ideal_readout() {
    let (p, m) = ideal_setup();
    let n = 500_000u64;
    let draws = 40;
    let expect = expected_tallies(&p, &m, 1.0);
    let mut sum = [0.0; 16];
    let mut sum_sq = [0.0; 16];
    let mut mean_count = [0.0; 16];
    for seed in 0..draws {
        let t = simulate_session(&p, &m, n, 1000 + seed).unwrap();
        for (i, (zi, count)) in cell_scores(&t, &expect, &p, n as f64).into_iter().enumerate() {
            sum[i] += zi;
            sum_sq[i] += zi * zi;
            mean_count[i] += count / draws as f64;
        }
    }
    let d = draws as f64;
    for i in 0..16 {
        let pooled = sum[i] / d.sqrt();
        let dispersion = sum_sq[i] / d;
        assert!(pooled.abs() < 3.5, "cell {i}: pooled z = {pooled}");
        // The normal approximation behind the dispersion check needs counts.
        if mean_count[i] >= 20.0 {
            assert!((0.4..1.8).contains(&dispersion), "cell {i}: mean z^2 = {dispersion}");
        }
    }
}

#[test]
fn both_send_qber_matches_expected_with_ideal_readout() {
    let (p, m) = ideal_setup();
    let t = simulate_session(&p, &m, 5_000_000, 42).unwrap();
    let e = expected_tallies(&p, &m, 1.0);
    let s = TwinState::Both;
    let want = e.selected.detected(s, scfqkd_core::Channel::Ch1) / e.selected.effective(s);
    let got = t.selected.detected(s, scfqkd_core::Channel::Ch1);
    let zq = z(got, t.selected.effective(s), want);
    assert!(zq.abs() < 3.0, "z = {zq}");
}

#[test]
fn single_sender_fraction_is_binomial() {
    let p = ProtocolParams::default();
    let m = ChannelModel::default();
    let n = 2_000_000u64;
    let t = simulate_session(&p, &m, n, 9).unwrap();
    let single = t.all.sent(TwinState::AliceOnly) + t.all.sent(TwinState::BobOnly);
    let prior = 2.0 * p.epsilon * (1.0 - p.epsilon);
    assert!(z(single, n as f64, prior).abs() < 3.0);
}

#[test]
fn test_set_fraction_is_binomial() {
    let (p, m) = ideal_setup();
    let t = simulate_session(&p, &m, 2_000_000, 10).unwrap();
    let kept = t.selected.total_sent();
    assert_eq!(kept, t.u.total_sent() + t.v.total_sent());
    assert!(z(t.u.total_sent(), kept, p.p_t).abs() < 3.0);
}

#[test]
fn chunks_can_run_in_any_order() {
    let p = ProtocolParams::default();
    let m = ChannelModel::default();
    let sim = SessionSimulator::new(p, m, 3 * 11_520 + 17, 5).unwrap();
    let forward = sim.run().remove(0);
    let mut backward = SessionTallies::default();
    for c in (0..sim.chunk_count()).rev() {
        backward.merge(&sim.run_chunk(c, |_| {}).remove(0));
    }
    assert_eq!(forward, backward);
}

#[test]
fn narrower_threshold_keeps_a_subset() {
    let p = ProtocolParams::default();
    let m = ChannelModel::default();
    let deltas = [10.0, 30.0, 45.0, 180.0].map(|d| Angle::from_degrees(d).unwrap());
    let sim = SessionSimulator::with_thresholds(p, m, 500_000, 3, &deltas).unwrap();
    let out = sim.run();
    for w in out.windows(2) {
        for s in TwinState::ALL {
            assert!(w[0].selected.sent(s) <= w[1].selected.sent(s));
            assert!(w[0].selected.effective(s) <= w[1].selected.effective(s));
        }
    }
    // Δ = 180° keeps every window that has an estimate.
    assert!(out[3].selected.total_sent() > 0.99 * out[3].all.total_sent());
}
