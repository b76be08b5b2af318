//! Simulation and analysis engine for side-channel-free (SCF) quantum key
//! distribution with the sending-or-not-sending encoding.
//!
//! The crate is `no_std` (with `alloc`) so the protocol model can be embedded
//! anywhere; file formats, the command line and the multi-threaded session
//! driver live in the `scfqkd` crate.
//!
//! Module map:
//!
//! * [`phase`]: angle arithmetic, binary entropy, beam-splitter interference.
//! * [`channel`]: protocol and channel parameters, click model, analytic
//!   expected tallies.
//! * [`session`]: seeded, partition-independent Monte Carlo sessions.
//! * [`phasetrack`]: phase drift, reference-pulse counts and the phase
//!   estimator.
//! * [`postselect`]: phase post-selection, test-set sampling and the
//!   post-selected twin-field state.
//! * [`estimator`]: counting rates, Z̃-window statistics and the phase-flip
//!   error bound.
//! * [`keyrate`]: key length, key rate, distance sweeps and parameter
//!   optimization.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod channel;
pub mod error;
pub mod estimator;
pub mod keyrate;
mod math;
pub mod phase;
pub mod phasetrack;
pub mod postselect;
pub mod session;
pub mod tally;

pub use channel::{Arm, ChannelModel, ProtocolParams, PulseSchedule, WindowRecord};
pub use error::{Error, Result};
pub use estimator::{Flag, KeyRateReport};
pub use phase::{Angle, PortIntensities};
pub use tally::{Channel, DetectorMap, SessionTallies, TallySet, TwinState};
