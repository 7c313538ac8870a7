//! Budget-constrained adaptive re-ranking over weighted document graphs.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only the algorithmic
//! pieces: graph construction and re-weighting, relevance scorers, affinity
//! functions, set-affinity frontier scoring, the re-ranking schedulers, the
//! ranking metrics and a synthetic corpus generator. File formats, the CLI and
//! latency measurement live in the `quam` crate.
//!
//! The scheduling loop shared by all adaptive strategies alternates between
//! the initial pool and a graph frontier:
//!
//! ```text
//!   R0 ──batch──▶ score ──▶ R1 ──top-s──▶ S
//!    ▲                                    │ neighbours
//!    └──────── alternate ◀── frontier ◀───┘ (priority: inherited score or SetAff)
//! ```
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod affinity;
mod error;
pub mod eval;
pub mod graph;
mod ids;
pub mod relevance;
mod rng;
pub mod schedulers;
pub mod setaff;
pub mod synth;

pub use error::{Error, Result};
pub use ids::{DocId, DocIndex};
