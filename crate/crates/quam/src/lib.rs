//! File formats, latency measurement and the command line around
//! [`quam_core`].

pub mod bench;
pub mod cli;
pub mod format;
pub mod stats;

pub use quam_core as core;
