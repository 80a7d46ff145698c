//! Discrete-event simulation of OLSR over static wireless multi-hop
//! networks with pluggable link-quality routing metrics (hop count, ETX,
//! inverse ETX, minimum loss and minimum delay).
//!
//! A run places nodes at random in a square arena, lets the OLSR control
//! plane learn link qualities and topology, drives constant-bit-rate flows
//! over the resulting routes and reports throughput, end-to-end delay,
//! normalized routing load and the arithmetic cost spent on route
//! computation. [`experiment::run_sweep`] repeats this over metrics, rates
//! and seeds.

use std::fmt;

pub mod config;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod network;
pub mod olsr;
pub mod radio;
pub mod traffic;

pub use config::{load_config, LoadedConfig, RunConfig, SweepConfig};
pub use error::{ConfigError, ExperimentError, MetricError, SimError};
pub use experiment::{run_single, run_sweep, SweepResults};
pub use metrics::MetricKind;
pub use traffic::RunStats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn from_index(i: usize) -> Self {
        NodeId(u32::try_from(i).expect("node index fits in u32"))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}
