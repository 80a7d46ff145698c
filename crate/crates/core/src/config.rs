//! Run and sweep configuration.
//!
//! Configuration files are TOML documents. Top-level keys describe the
//! scenario; `[radio]`, `[protocol]`, `[cost]` and `[sweep]` hold the
//! subsystem overrides (equivalently, dotted keys such as
//! `protocol.window_s = 40`). Every key is optional, and an empty file gives
//! the reference scenario: 50 nodes in a 1000 m square, 20 CBR flows of
//! 64-byte packets, 900 s per run. Unknown keys are rejected.
//!
//! A document with a `[sweep]` table loads as a [`SweepConfig`]; anything
//! else loads as a single [`RunConfig`].

use std::path::Path;

use toml::{Table, Value};

use crate::error::ConfigError;
use crate::metrics::{CostModel, MetricKind};
use crate::olsr::{Flooding, ProtocolConfig};
use crate::radio::RadioConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub arena_side_m: f64,
    pub node_count: usize,
    pub metric: MetricKind,
    pub rate_pps: u32,
    pub flow_pairs: usize,
    pub payload_bytes: u32,
    pub duration_s: f64,
    /// Flows start, and measurement begins, at this time.
    pub warmup_s: f64,
    pub seed: u64,
    /// Period of the routing-loop census over the flow endpoints.
    pub stats_interval_s: f64,
    pub radio: RadioConfig,
    pub protocol: ProtocolConfig,
    pub cost: CostModel,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            arena_side_m: 1000.0,
            node_count: 50,
            metric: MetricKind::Etx,
            rate_pps: 1,
            flow_pairs: 20,
            payload_bytes: 64,
            duration_s: 900.0,
            warmup_s: 60.0,
            seed: 1,
            stats_interval_s: 10.0,
            radio: RadioConfig::default(),
            protocol: ProtocolConfig::default(),
            cost: CostModel::default(),
        }
    }
}

impl RunConfig {
    pub fn measurement_window_s(&self) -> f64 {
        self.duration_s - self.warmup_s
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::key(key, format!("must be positive, got {v}")))
            }
        };
        positive("arena_side_m", self.arena_side_m)?;
        if self.node_count < 2 {
            return Err(ConfigError::key("node_count", "need at least 2 nodes"));
        }
        if self.rate_pps == 0 {
            return Err(ConfigError::key("rate_pps", "must be at least 1"));
        }
        if self.flow_pairs == 0 {
            return Err(ConfigError::key("flow_pairs", "must be at least 1"));
        }
        if self.payload_bytes == 0 {
            return Err(ConfigError::key("payload_bytes", "must be at least 1"));
        }
        positive("duration_s", self.duration_s)?;
        if !(self.warmup_s >= 0.0 && self.warmup_s < self.duration_s) {
            return Err(ConfigError::key(
                "warmup_s",
                format!("must lie in [0, duration_s), got {}", self.warmup_s),
            ));
        }
        positive("stats_interval_s", self.stats_interval_s)?;

        self.radio
            .loss
            .validate()
            .map_err(|r| ConfigError::key("radio", r))?;
        positive("radio.bitrate_bps", self.radio.bitrate_bps)?;
        if self.radio.queue_capacity == 0 {
            return Err(ConfigError::key(
                "radio.queue_capacity",
                "must be at least 1",
            ));
        }
        if self.radio.control_frame_bytes == 0 {
            return Err(ConfigError::key(
                "radio.control_frame_bytes",
                "must be at least 1",
            ));
        }

        let p = &self.protocol;
        positive("protocol.hello_interval_s", p.hello_interval_s)?;
        positive("protocol.window_s", p.window_s)?;
        positive("protocol.tc_interval_s", p.tc_interval_s)?;
        positive("protocol.probe_interval_s", p.probe_interval_s)?;
        positive("protocol.neighbor_hold_mult", p.neighbor_hold_mult)?;
        positive("protocol.topology_hold_mult", p.topology_hold_mult)?;
        positive("protocol.recompute_debounce_s", p.recompute_debounce_s)?;
        if p.window_s < p.hello_interval_s {
            return Err(ConfigError::key(
                "protocol.window_s",
                "must be at least one HELLO interval",
            ));
        }
        if !(p.owd_alpha > 0.0 && p.owd_alpha <= 1.0) {
            return Err(ConfigError::key("protocol.owd_alpha", "must lie in (0, 1]"));
        }
        let min_interval = p
            .hello_interval_s
            .min(p.tc_interval_s)
            .min(p.probe_interval_s);
        if !(p.jitter_s >= 0.0 && p.jitter_s < min_interval / 2.0) {
            return Err(ConfigError::key(
                "protocol.jitter_s",
                "must be non-negative and below half the shortest emission interval",
            ));
        }
        if p.tc_ttl == 0 {
            return Err(ConfigError::key("protocol.tc_ttl", "must be at least 1"));
        }

        positive("cost.add", self.cost.add)?;
        positive("cost.mult", self.cost.mult)?;
        positive("cost.div", self.cost.div)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub base: RunConfig,
    pub metrics: Vec<MetricKind>,
    pub rates: Vec<u32>,
    pub replications: u32,
    /// Replication `r` runs with seed `base_seed + r` for every metric and
    /// rate, so all metrics see the same topologies.
    pub base_seed: u64,
}

impl SweepConfig {
    pub fn new(base: RunConfig) -> Self {
        SweepConfig {
            base_seed: base.seed,
            base,
            metrics: vec![
                MetricKind::Etx,
                MetricKind::InvEtx,
                MetricKind::Ml,
                MetricKind::Md,
            ],
            rates: (1..=16).collect(),
            replications: 5,
        }
    }

    /// Short preset for quick checks: 300 s runs, 3 replications, five
    /// rates spanning the load range.
    pub fn apply_desk_scale(&mut self) {
        self.base.duration_s = 300.0;
        self.replications = 3;
        self.rates = vec![1, 4, 8, 12, 16];
    }

    pub fn run_count(&self) -> usize {
        self.metrics.len() * self.rates.len() * self.replications as usize
    }

    /// Every run in `(metric, rate, replication)` order.
    pub fn runs(&self) -> Vec<RunConfig> {
        let mut out = Vec::with_capacity(self.run_count());
        for &metric in &self.metrics {
            for &rate_pps in &self.rates {
                for r in 0..self.replications {
                    out.push(RunConfig {
                        metric,
                        rate_pps,
                        seed: self.base_seed + r as u64,
                        ..self.base.clone()
                    });
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.base.validate()?;
        if self.metrics.is_empty() {
            return Err(ConfigError::key(
                "sweep.metrics",
                "must name at least one metric",
            ));
        }
        if self.rates.is_empty() || self.rates.contains(&0) {
            return Err(ConfigError::key(
                "sweep.rates",
                "must be a non-empty list of positive rates",
            ));
        }
        if self.replications == 0 {
            return Err(ConfigError::key("sweep.replications", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LoadedConfig {
    Run(RunConfig),
    Sweep(SweepConfig),
}

impl LoadedConfig {
    pub fn into_run(self) -> RunConfig {
        match self {
            LoadedConfig::Run(r) => r,
            LoadedConfig::Sweep(s) => s.base,
        }
    }

    pub fn into_sweep(self) -> SweepConfig {
        match self {
            LoadedConfig::Run(r) => SweepConfig::new(r),
            LoadedConfig::Sweep(s) => s,
        }
    }
}

pub fn load_config(path: &Path) -> Result<LoadedConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<LoadedConfig, ConfigError> {
    let table: Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigError::Syntax(e.message().to_string()))?;
    let mut run = RunConfig::default();
    let mut sweep_keys = Vec::new();

    for (key, value) in &table {
        match (key.as_str(), value) {
            ("radio", Value::Table(t)) => {
                apply_section(t, "radio", |k, v| apply_radio(&mut run.radio, k, v))?
            }
            ("protocol", Value::Table(t)) => apply_section(t, "protocol", |k, v| {
                apply_protocol(&mut run.protocol, k, v)
            })?,
            ("cost", Value::Table(t)) => {
                apply_section(t, "cost", |k, v| apply_cost(&mut run.cost, k, v))?
            }
            ("sweep", Value::Table(t)) => {
                sweep_keys.extend(t.iter().map(|(k, v)| (k.clone(), v.clone())));
            }
            (k, v) => apply_top(&mut run, k, v)?,
        }
    }

    if table.contains_key("sweep") {
        let mut s = SweepConfig::new(run);
        for (k, v) in &sweep_keys {
            apply_sweep(&mut s, k, v).map_err(|r| ConfigError::key(format!("sweep.{k}"), r))?;
        }
        if !sweep_keys.iter().any(|(k, _)| k == "base_seed") {
            s.base_seed = s.base.seed;
        }
        s.validate()?;

        Ok(LoadedConfig::Sweep(s))
    } else {
        run.validate()?;
        Ok(LoadedConfig::Run(run))
    }
}

fn apply_section<F>(t: &Table, section: &str, mut apply: F) -> Result<(), ConfigError>
where
    F: FnMut(&str, &Value) -> Result<(), String>,
{
    for (k, v) in t {
        apply(k, v).map_err(|r| ConfigError::key(format!("{section}.{k}"), r))?;
    }
    Ok(())
}

fn as_f64(v: &Value) -> Result<f64, String> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        other => Err(format!("expected a number, got {}", other.type_str())),
    }
}

fn as_u64(v: &Value) -> Result<u64, String> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        Value::Integer(i) => Err(format!("must not be negative, got {i}")),
        other => Err(format!("expected an integer, got {}", other.type_str())),
    }
}

fn as_u32(v: &Value) -> Result<u32, String> {
    u32::try_from(as_u64(v)?).map_err(|_| "value too large".to_string())
}

fn as_str(v: &Value) -> Result<&str, String> {
    v.as_str()
        .ok_or_else(|| format!("expected a string, got {}", v.type_str()))
}

fn unknown() -> Result<(), String> {
    Err("unknown key".into())
}

fn apply_top(run: &mut RunConfig, key: &str, v: &Value) -> Result<(), ConfigError> {
    let r = match key {
        "arena_side_m" => as_f64(v).map(|x| run.arena_side_m = x),
        "node_count" => as_u64(v).map(|x| run.node_count = x as usize),
        "metric" => as_str(v).and_then(|s| s.parse().map(|m| run.metric = m)),
        "rate_pps" => as_u32(v).map(|x| run.rate_pps = x),
        "flow_pairs" => as_u64(v).map(|x| run.flow_pairs = x as usize),
        "payload_bytes" => as_u32(v).map(|x| run.payload_bytes = x),
        "duration_s" => as_f64(v).map(|x| run.duration_s = x),
        "warmup_s" => as_f64(v).map(|x| run.warmup_s = x),
        "seed" => as_u64(v).map(|x| run.seed = x),
        "stats_interval_s" => as_f64(v).map(|x| run.stats_interval_s = x),
        _ => unknown(),
    };
    r.map_err(|reason| ConfigError::key(key, reason))
}

fn apply_radio(r: &mut RadioConfig, key: &str, v: &Value) -> Result<(), String> {
    match key {
        "range_m" => as_f64(v).map(|x| r.loss.range_m = x),
        "d0_m" => as_f64(v).map(|x| r.loss.d0_m = x),
        "p_near" => as_f64(v).map(|x| r.loss.p_near = x),
        "p_edge" => as_f64(v).map(|x| r.loss.p_edge = x),
        "bitrate_bps" => as_f64(v).map(|x| r.bitrate_bps = x),
        "queue_capacity" => as_u64(v).map(|x| r.queue_capacity = x as usize),
        "control_frame_bytes" => as_u32(v).map(|x| r.control_frame_bytes = x),
        "data_header_bytes" => as_u32(v).map(|x| r.data_header_bytes = x),
        _ => unknown(),
    }
}

fn apply_protocol(p: &mut ProtocolConfig, key: &str, v: &Value) -> Result<(), String> {
    match key {
        "hello_interval_s" => as_f64(v).map(|x| p.hello_interval_s = x),
        "window_s" => as_f64(v).map(|x| p.window_s = x),
        "tc_interval_s" => as_f64(v).map(|x| p.tc_interval_s = x),
        "probe_interval_s" => as_f64(v).map(|x| p.probe_interval_s = x),
        "jitter_s" => as_f64(v).map(|x| p.jitter_s = x),
        "owd_alpha" => as_f64(v).map(|x| p.owd_alpha = x),
        "neighbor_hold_mult" => as_f64(v).map(|x| p.neighbor_hold_mult = x),
        "topology_hold_mult" => as_f64(v).map(|x| p.topology_hold_mult = x),
        "recompute_debounce_s" => as_f64(v).map(|x| p.recompute_debounce_s = x),
        "tc_ttl" => as_u64(v).and_then(|x| {
            u8::try_from(x)
                .map(|t| p.tc_ttl = t)
                .map_err(|_| "must be at most 255".to_string())
        }),
        "flooding" => as_str(v).and_then(|s| match s {
            "mpr" => {
                p.flooding = Flooding::Mpr;
                Ok(())
            }
            "full" => {
                p.flooding = Flooding::Full;
                Ok(())
            }
            other => Err(format!("expected \"mpr\" or \"full\", got {other:?}")),
        }),
        _ => unknown(),
    }
}

fn apply_cost(c: &mut CostModel, key: &str, v: &Value) -> Result<(), String> {
    match key {
        "add" => as_f64(v).map(|x| c.add = x),
        "mult" => as_f64(v).map(|x| c.mult = x),
        "div" => as_f64(v).map(|x| c.div = x),
        _ => unknown(),
    }
}

fn apply_sweep(s: &mut SweepConfig, key: &str, v: &Value) -> Result<(), String> {
    match key {
        "metrics" => {
            let arr = v.as_array().ok_or("expected an array of metric names")?;
            s.metrics = arr
                .iter()
                .map(|m| as_str(m).and_then(str::parse))
                .collect::<Result<_, _>>()?;
            Ok(())
        }
        "rates" => {
            let arr = v.as_array().ok_or("expected an array of rates")?;
            s.rates = arr.iter().map(as_u32).collect::<Result<_, _>>()?;
            Ok(())
        }
        "replications" => as_u32(v).map(|x| s.replications = x),
        "base_seed" => as_u64(v).map(|x| s.base_seed = x),
        _ => unknown(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key_of(err: ConfigError) -> String {
        match err {
            ConfigError::Key { key, .. } => key,
            other => panic!("expected a key error, got {other}"),
        }
    }

    #[test]
    fn empty_document_is_the_reference_scenario() {
        let cfg = parse_config("").unwrap().into_run();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.node_count, 50);
        assert_eq!(cfg.arena_side_m, 1000.0);
        assert_eq!(cfg.flow_pairs, 20);
        assert_eq!(cfg.payload_bytes, 64);
        assert_eq!(cfg.duration_s, 900.0);
        assert_eq!(cfg.protocol.hello_interval_s, 2.0);
        assert_eq!(cfg.protocol.window_s, 20.0);
    }

    #[test]
    fn zero_rate_is_rejected() {
        assert_eq!(
            key_of(parse_config("rate_pps = 0").unwrap_err()),
            "rate_pps"
        );
    }

    #[test]
    fn unknown_key_is_named() {
        assert_eq!(key_of(parse_config("speeed = 3").unwrap_err()), "speeed");
        assert_eq!(
            key_of(parse_config("[protocol]\nwindoww_s = 3").unwrap_err()),
            "protocol.windoww_s"
        );
        assert_eq!(
            key_of(parse_config("[nonsense]\nx = 1").unwrap_err()),
            "nonsense"
        );
    }

    #[test]
    fn sections_and_dotted_keys() {
        let cfg = parse_config(
            "metric = \"ml\"\nrate_pps = 8\nprotocol.window_s = 40\n[radio]\nrange_m = 200\np_edge = 0.5\n[cost]\ndiv = 20",
        )
        .unwrap()
        .into_run();
        assert_eq!(cfg.metric, MetricKind::Ml);
        assert_eq!(cfg.rate_pps, 8);
        assert_eq!(cfg.protocol.window_s, 40.0);
        assert_eq!(cfg.radio.loss.range_m, 200.0);
        assert_eq!(cfg.radio.loss.p_edge, 0.5);
        assert_eq!(cfg.cost.div, 20.0);
    }

    #[test]
    fn sweep_table_yields_sweep() {
        let loaded = parse_config(
            "seed = 10\n[sweep]\nmetrics = [\"ETX\", \"MD\"]\nrates = [1, 16]\nreplications = 2",
        )
        .unwrap();
        let LoadedConfig::Sweep(s) = loaded else {
            panic!("expected a sweep")
        };
        assert_eq!(s.metrics, vec![MetricKind::Etx, MetricKind::Md]);
        assert_eq!(s.base_seed, 10);
        assert_eq!(s.run_count(), 8);
        let seeds: Vec<u64> = s.runs().iter().map(|r| r.seed).collect();
        assert_eq!(seeds, vec![10, 11, 10, 11, 10, 11, 10, 11]);
    }

    #[test]
    fn default_sweep_dimensions() {
        let s = SweepConfig::new(RunConfig::default());
        assert_eq!(s.run_count(), 4 * 16 * 5);
        let mut d = s.clone();
        d.apply_desk_scale();
        assert_eq!(d.base.duration_s, 300.0);
        assert_eq!(d.rates, vec![1, 4, 8, 12, 16]);
        assert_eq!(d.replications, 3);
    }

    #[test]
    fn bad_values_are_rejected() {
        for (doc, key) in [
            ("metric = \"AODV\"", "metric"),
            ("node_count = 1", "node_count"),
            ("warmup_s = 900", "warmup_s"),
            ("radio.p_edge = 1.5", "radio"),
            ("protocol.owd_alpha = 0", "protocol.owd_alpha"),
            ("protocol.flooding = \"gossip\"", "protocol.flooding"),
            ("[sweep]\nrates = [0]", "sweep.rates"),
            ("duration_s = \"long\"", "duration_s"),
        ] {
            assert_eq!(key_of(parse_config(doc).unwrap_err()), key, "{doc}");
        }
    }

    #[test]
    fn syntax_errors_are_reported() {
        assert!(matches!(
            parse_config("rate_pps = = 3"),
            Err(ConfigError::Syntax(_))
        ));
    }
}
