//! Multi-threaded session driver.
//!
//! Chunk `c` is simulated by worker `c % workers`; every worker sums its
//! chunks and the per-worker sums are merged in worker order. Counts are
//! integers held exactly in `f64`, so the result does not depend on the
//! worker count.

use std::num::NonZeroUsize;

use scfqkd_core::session::SessionSimulator;
use scfqkd_core::SessionTallies;

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, NonZeroUsize::get)
}

/// Run all chunks of `sim` on `workers` threads; one tally per threshold.
pub fn run_parallel(sim: &SessionSimulator, workers: usize) -> Vec<SessionTallies> {
    let chunks = sim.chunk_count();
    let workers = (workers.max(1) as u64).min(chunks.max(1)) as usize;
    let partial: Vec<Vec<SessionTallies>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                scope.spawn(move || {
                    let mut acc = vec![SessionTallies::default(); sim.thresholds().len()];
                    for c in (w as u64..chunks).step_by(workers) {
                        for (a, t) in acc.iter_mut().zip(sim.run_chunk(c, |_| {})) {
                            a.merge(&t);
                        }
                    }
                    acc
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    let mut total = vec![SessionTallies::default(); sim.thresholds().len()];
    for p in &partial {
        for (a, t) in total.iter_mut().zip(p) {
            a.merge(t);
        }
    }
    total
}
