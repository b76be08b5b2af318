//! File formats, configuration, the parallel session driver and the
//! command-line front end for [`scfqkd_core`].

pub mod cli;
pub mod config;
pub mod dataio;
pub mod parallel;

pub use scfqkd_core as core;
