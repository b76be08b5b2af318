//! Monte Carlo simulation of a session of signal windows.
//!
//! A session is cut into fixed chunks of [`CHUNK_SPANS`] statistics spans.
//! Every chunk draws from its own ChaCha8 stream (`seed`, stream = chunk
//! index), so the output depends only on `(params, model, n_windows, seed)`
//! and never on how chunks are distributed over workers.
//!
//! The channel phase is a Gaussian random walk. To simulate chunks
//! independently, each chunk first draws its net phase increment; a prefix
//! sum over these gives every chunk its starting phase, and the walk inside
//! the chunk is generated as a discrete Brownian bridge pinned to that
//! increment. The joint law equals that of a sequential walk.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::channel::{
    ChannelModel, ClickModel, ClickProbabilities, PhaseReadout, ProtocolParams, PulseSchedule, WindowRecord,
};
use crate::error::{check_range, Result};
use crate::math;
use crate::phase::Angle;
use crate::phasetrack::{estimate_phase, sample_reference_counts, ReferenceCounts};
use crate::tally::{SessionTallies, TallySet, TwinState};

/// Statistics spans per simulation chunk.
pub const CHUNK_SPANS: u64 = 64;

/// Stream id reserved for session-level draws (initial phase).
const SESSION_STREAM: u64 = u64::MAX;

/// Integer counterpart of [`TallySet`] used while sampling.
#[derive(Debug, Clone, Copy, Default)]
struct Counts {
    sent: [u64; 4],
    detected: [[u64; 2]; 4],
}

impl Counts {
    #[inline]
    fn record(&mut self, state: usize, channel: Option<usize>) {
        self.sent[state] += 1;
        if let Some(c) = channel {
            self.detected[state][c] += 1;
        }
    }

    fn to_tally(self) -> TallySet {
        let mut t = TallySet::default();
        for s in 0..4 {
            t.sent[s] = self.sent[s] as f64;
            t.detected[s] = self.detected[s].map(|d| d as f64);
        }
        t
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct ThresholdCounts {
    selected: Counts,
    u: Counts,
    v: Counts,
}

/// Seeded session simulator. Cheap to share across threads (`Sync`).
#[derive(Debug, Clone)]
pub struct SessionSimulator {
    params: ProtocolParams,
    model: ChannelModel,
    n_windows: u64,
    seed: u64,
    thresholds: Vec<f64>,
    clicks: ClickModel,
    chunk_start_phase: Vec<f64>,
    schedule: PulseSchedule,
}

impl SessionSimulator {
    /// Simulator post-selecting at `params.delta_threshold`.
    pub fn new(params: ProtocolParams, model: ChannelModel, n_windows: u64, seed: u64) -> Result<Self> {
        let delta = params.delta_threshold;
        Self::with_thresholds(params, model, n_windows, seed, &[delta])
    }

    /// Simulator producing one [`SessionTallies`] per threshold from the same
    /// sampled windows. Test-set membership is shared across thresholds.
    pub fn with_thresholds(
        params: ProtocolParams,
        model: ChannelModel,
        n_windows: u64,
        seed: u64,
        thresholds: &[Angle],
    ) -> Result<Self> {
        params.validate_for_simulation()?;
        model.validate()?;
        check_range("n_windows", n_windows as f64, n_windows >= 1, "[1, inf)")?;
        for t in thresholds {
            let r = t.radians();
            check_range("delta_threshold", r, r > 0.0 && r <= math::PI, "(0, pi]")?;
        }
        let schedule = PulseSchedule::EXPERIMENT;
        let mut sim = SessionSimulator {
            params,
            model,
            n_windows,
            seed,
            thresholds: thresholds.iter().map(|t| t.radians()).collect(),
            clicks: ClickModel::new(&params, &model),
            chunk_start_phase: Vec::new(),
            schedule,
        };
        sim.chunk_start_phase = sim.chunk_start_phases();
        Ok(sim)
    }

    pub fn n_windows(&self) -> u64 {
        self.n_windows
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn chunk_windows(&self) -> u64 {
        CHUNK_SPANS * u64::from(self.schedule.windows_per_span())
    }

    pub fn chunk_count(&self) -> u64 {
        self.n_windows.div_ceil(self.chunk_windows())
    }

    pub fn chunk_range(&self, chunk: u64) -> Range<u64> {
        let start = chunk * self.chunk_windows();
        start..(start + self.chunk_windows()).min(self.n_windows)
    }

    fn chunk_rng(&self, chunk: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(chunk);
        rng
    }

    /// Net walk increment of a chunk: the first draw of its stream.
    fn chunk_increment(&self, rng: &mut ChaCha8Rng, len: u64) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        z * self.model.drift_rad_per_window * math::sqrt(len as f64)
    }

    fn chunk_start_phases(&self) -> Vec<f64> {
        let mut session = self.chunk_rng(SESSION_STREAM);
        let mut phase = session.random::<f64>() * math::TAU;
        let mut out = Vec::with_capacity(self.chunk_count() as usize);
        for c in 0..self.chunk_count() {
            out.push(phase);
            let r = self.chunk_range(c);
            let mut rng = self.chunk_rng(c);
            phase += self.chunk_increment(&mut rng, r.end - r.start);
        }
        out
    }

    /// Simulate one chunk, calling `visit` for every window in order, and
    /// return one tally per threshold.
    pub fn run_chunk<F: FnMut(&WindowRecord)>(&self, chunk: u64, mut visit: F) -> Vec<SessionTallies> {
        let range = self.chunk_range(chunk);
        let len = (range.end - range.start) as usize;
        let mut rng = self.chunk_rng(chunk);
        let increment = self.chunk_increment(&mut rng, len as u64);

        // Channel phase path: bridge from the chunk start to start + increment.
        let sigma = self.model.drift_rad_per_window;
        let mut path = vec![0.0f64; len];
        let mut walk = 0.0;
        for p in path.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            walk += sigma * z;
            *p = walk;
        }
        let start = self.chunk_start_phase[chunk as usize];
        let correction = walk - increment;
        for (k, p) in path.iter_mut().enumerate() {
            *p = start + *p - correction * (k + 1) as f64 / len as f64;
        }

        // Announced phase per statistics span.
        let offset = self.params.source_phase_offset().radians();
        let per_frame = self.schedule.signal_slots as usize;
        let per_span = self.schedule.windows_per_span() as usize;
        let frames = self.schedule.frames_per_span() as usize;
        let spans: Vec<Option<f64>> = path
            .chunks(per_span)
            .map(|span| match self.model.readout {
                PhaseReadout::Ideal => None,
                PhaseReadout::References { counts_per_span } => {
                    let mut counts = ReferenceCounts::default();
                    for frame in span.chunks(per_frame) {
                        let phase = frame[frame.len() - 1];
                        let c = sample_reference_counts(
                            phase,
                            counts_per_span / frames as f64,
                            self.model.visibility,
                            &mut rng,
                        );
                        counts.add(&c);
                    }
                    Some(estimate_phase(&counts).map_or(f64::NAN, |a| a.radians() + offset))
                }
            })
            .collect();

        let fixed: [ClickProbabilities; 3] = [
            self.clicks.probabilities(false, false, 0.0),
            self.clicks.probabilities(false, true, 0.0),
            self.clicks.probabilities(true, false, 0.0),
        ];
        let eps = self.params.epsilon;
        let p_t = self.params.p_t;
        let mut all = Counts::default();
        let mut per_threshold = vec![ThresholdCounts::default(); self.thresholds.len()];
        let ideal = matches!(self.model.readout, PhaseReadout::Ideal);
        let mut span_minor = f64::NAN;
        let mut span_estimate: Option<Angle> = None;

        for (k, &channel_phase) in path.iter().enumerate() {
            let true_phase = channel_phase + offset;
            if ideal {
                span_estimate = Some(Angle::raw(true_phase));
                span_minor = Angle::raw(true_phase).minor().radians();
            } else if k % per_span == 0 {
                let est = spans[k / per_span];
                span_estimate = est.filter(|e| !e.is_nan()).map(Angle::raw);
                span_minor = span_estimate.map_or(f64::NAN, |a| a.minor().radians());
            }

            let alice_sent = rng.random::<f64>() < eps;
            let bob_sent = rng.random::<f64>() < eps;
            let state = TwinState::from_decisions(alice_sent, bob_sent);
            let probs = match state {
                TwinState::Both => self.clicks.probabilities(true, true, true_phase),
                other => fixed[other.index()],
            };
            let click_left = rng.random::<f64>() < probs.left;
            let click_right = rng.random::<f64>() < probs.right;
            let in_test = rng.random::<f64>() < p_t;

            let channel = match (click_left, click_right) {
                (true, false) => Some(0),
                (false, true) => Some(1),
                _ => None,
            };
            let s = state.index();
            all.record(s, channel);
            for (t, counts) in self.thresholds.iter().zip(per_threshold.iter_mut()) {
                // NaN (no estimate) never passes.
                if span_minor < *t {
                    counts.selected.record(s, channel);
                    if in_test {
                        counts.u.record(s, channel);
                    } else {
                        counts.v.record(s, channel);
                    }
                }
            }

            visit(&WindowRecord {
                window_id: range.start + k as u64,
                alice_sent,
                bob_sent,
                true_phase: Angle::raw(true_phase),
                estimated_phase: span_estimate,
                click_left,
                click_right,
            });
        }

        let all = all.to_tally();
        per_threshold
            .into_iter()
            .map(|c| SessionTallies {
                all,
                selected: c.selected.to_tally(),
                u: c.u.to_tally(),
                v: c.v.to_tally(),
            })
            .collect()
    }

    /// Sequential run over all chunks.
    pub fn run(&self) -> Vec<SessionTallies> {
        self.run_with(|_| {})
    }

    pub fn run_with<F: FnMut(&WindowRecord)>(&self, mut visit: F) -> Vec<SessionTallies> {
        let mut total = vec![SessionTallies::default(); self.thresholds.len()];
        for c in 0..self.chunk_count() {
            for (acc, t) in total.iter_mut().zip(self.run_chunk(c, &mut visit)) {
                acc.merge(&t);
            }
        }
        total
    }
}

/// Simulate a session and return its tallies at `params.delta_threshold`.
pub fn simulate_session(
    params: &ProtocolParams,
    model: &ChannelModel,
    n_windows: u64,
    seed: u64,
) -> Result<SessionTallies> {
    let sim = SessionSimulator::new(*params, *model, n_windows, seed)?;
    Ok(sim.run().remove(0))
}

/// Simulate a session keeping every window record.
pub fn simulate_records(
    params: &ProtocolParams,
    model: &ChannelModel,
    n_windows: u64,
    seed: u64,
) -> Result<(Vec<WindowRecord>, SessionTallies)> {
    let sim = SessionSimulator::new(*params, *model, n_windows, seed)?;
    let mut records = Vec::with_capacity(n_windows as usize);
    let tallies = sim.run_with(|r| records.push(*r)).remove(0);
    Ok((records, tallies))
}
