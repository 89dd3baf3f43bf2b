//! Distributed and streaming maximum coverage: exact and greedy baselines, a
//! synchronous coordinator simulator, round-bounded greedy protocols, hard
//! instance generators and dynamic-stream algorithms.

pub mod bench;
pub mod bitset;
pub mod coverage;
pub mod error;
pub mod rng;
pub mod isgreedy;
pub mod sim;
pub mod lowerbound;
pub mod spgreedy;
pub mod stats;
pub mod stream;

pub use error::{Error, Result};
