use std::path::PathBuf;

use thiserror::Error;

use crate::engine::SimTime;
use crate::metrics::MetricKind;
use crate::NodeId;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("event scheduled at {fire_at} but clock is already at {now}")]
    SchedulingInPast { now: SimTime, fire_at: SimTime },
    #[error("invalid flow: source and destination are both node {0}")]
    InvalidFlow(NodeId),
    #[error("degenerate topology: largest connected component has {giant} node(s)")]
    DegenerateTopology { giant: usize },
    #[error("invariant violated: {0}")]
    Invariant(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("link has zero delivery probability and is excluded from routing")]
    ExcludedLink,
    #[error("no one-way delay sample for this link")]
    MissingDelay,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("`{key}`: {reason}")]
    Key { key: String, reason: String },
}

impl ConfigError {
    pub(crate) fn key(key: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::Key {
            key: key.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("run (metric={metric}, rate={rate_pps}, seed={seed}): {source}")]
    Run {
        metric: MetricKind,
        rate_pps: u32,
        seed: u64,
        #[source]
        source: SimError,
    },
    #[error("writing results: {0}")]
    Io(#[from] std::io::Error),
    #[error("writing csv: {0}")]
    Csv(#[from] csv::Error),
}

impl ExperimentError {
    /// Process exit code for the command-line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 2,
            ExperimentError::Run {
                source: SimError::DegenerateTopology { .. },
                ..
            } => 3,
            ExperimentError::Run {
                source: SimError::InvalidFlow(_),
                ..
            } => 2,
            _ => 4,
        }
    }
}
