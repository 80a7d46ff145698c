//! CBR flows, hop-by-hop forwarding decisions and run statistics.

use std::collections::VecDeque;
use std::io;

use hdrhistogram::Histogram;

use crate::engine::{RngStream, SimTime};
use crate::error::SimError;
use crate::metrics::MetricKind;
use crate::olsr::Route;
use crate::NodeId;

pub const INITIAL_TTL: u8 = 32;
const RECORD_RING: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowSpec {
    pub src: NodeId,
    pub dst: NodeId,
    pub rate_pps: u32,
    pub payload_bytes: u32,
    pub start: SimTime,
    pub stop: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataPacket {
    pub flow: usize,
    pub seq: u64,
    pub src: NodeId,
    pub dst: NodeId,
    pub sent_at: SimTime,
    pub ttl: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DropCause {
    NoRoute,
    QueueDrop,
    LinkLoss,
    TtlExpired,
}

impl DropCause {
    pub const ALL: [DropCause; 4] = [
        DropCause::NoRoute,
        DropCause::QueueDrop,
        DropCause::LinkLoss,
        DropCause::TtlExpired,
    ];

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketRecord {
    pub flow: usize,
    pub seq: u64,
    pub sent_at: SimTime,
    pub delivered_at: Option<SimTime>,
    pub drop_cause: Option<DropCause>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DropCounts([u64; 4]);

impl DropCounts {
    pub fn get(&self, cause: DropCause) -> u64 {
        self.0[cause.index()]
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }
}

/// Draws `count` source/destination pairs with distinct endpoints.
pub fn choose_flow_pairs(
    nodes: &[NodeId],
    count: usize,
    rng: &mut RngStream,
) -> Vec<(NodeId, NodeId)> {
    if nodes.len() < 2 {
        return Vec::new();
    }
    (0..count)
        .map(|_| {
            let src = nodes[rng.below(nodes.len())];
            loop {
                let dst = nodes[rng.below(nodes.len())];
                if dst != src {
                    break (src, dst);
                }
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
struct FlowState {
    spec: FlowSpec,
    first_tick: SimTime,
    emitted: u64,
}

/// Per-run CBR generator.
#[derive(Debug, Default)]
pub struct Traffic {
    flows: Vec<FlowState>,
}

impl Traffic {
    /// Registers `specs` and returns, per flow, the time of its first
    /// packet: the flow start plus a random offset in `[0, 1/rate)`.
    pub fn start_flows(
        &mut self,
        specs: &[FlowSpec],
        rng: &mut RngStream,
    ) -> Result<Vec<(usize, SimTime)>, SimError> {
        let mut first = Vec::with_capacity(specs.len());
        for spec in specs {
            if spec.src == spec.dst {
                return Err(SimError::InvalidFlow(spec.src));
            }
            if spec.rate_pps == 0 {
                return Err(SimError::Invariant("flow rate must be positive".into()));
            }
            let offset = rng.uniform() / spec.rate_pps as f64;
            let first_tick = spec.start + SimTime::from_secs_f64(offset);
            let id = self.flows.len();
            self.flows.push(FlowState {
                spec: *spec,
                first_tick,
                emitted: 0,
            });
            if first_tick < spec.stop {
                first.push((id, first_tick));
            }
        }
        Ok(first)
    }

    pub fn flow(&self, id: usize) -> &FlowSpec {
        &self.flows[id].spec
    }

    pub fn flow_count(&self) -> usize {
        self.flows.len()
    }

    /// Emits the next packet of `flow` and returns it with the time of the
    /// following tick, if that falls before the flow stops.
    pub fn emit(&mut self, flow: usize, now: SimTime) -> (DataPacket, Option<SimTime>) {
        let f = &mut self.flows[flow];
        let pkt = DataPacket {
            flow,
            seq: f.emitted,
            src: f.spec.src,
            dst: f.spec.dst,
            sent_at: now,
            ttl: INITIAL_TTL,
        };
        f.emitted += 1;
        let next = f.first_tick + SimTime::from_secs_f64(f.emitted as f64 / f.spec.rate_pps as f64);
        (pkt, (next < f.spec.stop).then_some(next))
    }
}

/// Result of handing a data packet to a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Forward {
    Deliver,
    Drop(DropCause),
    Send {
        next_hop: NodeId,
        packet: DataPacket,
    },
}

pub fn forward_data(node: NodeId, packet: &DataPacket, route: Option<&Route>) -> Forward {
    if packet.dst == node {
        return Forward::Deliver;
    }
    let Some(route) = route else {
        return Forward::Drop(DropCause::NoRoute);
    };
    if packet.ttl <= 1 {
        return Forward::Drop(DropCause::TtlExpired);
    }
    Forward::Send {
        next_hop: route.next_hop,
        packet: DataPacket {
            ttl: packet.ttl - 1,
            ..*packet
        },
    }
}

/// Control transmissions by message type. Relayed TCs count once per relay.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ControlCounters {
    pub hello: u64,
    pub tc_originated: u64,
    pub tc_relayed: u64,
    pub probe: u64,
}

impl ControlCounters {
    pub fn total(&self) -> u64 {
        self.hello + self.tc_originated + self.tc_relayed + self.probe
    }
}

/// Streaming data-plane accounting. Memory is bounded: delays go into a
/// histogram and only the latest packet records are kept.
#[derive(Debug)]
pub struct DataStats {
    pub sent: u64,
    pub delivered: u64,
    pub drops: DropCounts,
    delay_sum_ms: f64,
    delays_us: Histogram<u64>,
    recent: VecDeque<PacketRecord>,
}

impl Default for DataStats {
    fn default() -> Self {
        DataStats {
            sent: 0,
            delivered: 0,
            drops: DropCounts::default(),
            delay_sum_ms: 0.0,
            delays_us: Histogram::new_with_bounds(1, 3_600_000_000, 3).expect("static bounds"),
            recent: VecDeque::with_capacity(RECORD_RING),
        }
    }
}

impl DataStats {
    pub fn on_sent(&mut self) {
        self.sent += 1;
    }

    pub fn on_delivered(&mut self, pkt: &DataPacket, at: SimTime) {
        self.delivered += 1;
        let delay = at - pkt.sent_at;
        self.delay_sum_ms += delay.as_millis_f64();
        self.delays_us
            .saturating_record((delay.as_nanos() / 1000).max(1));
        self.remember(PacketRecord {
            flow: pkt.flow,
            seq: pkt.seq,
            sent_at: pkt.sent_at,
            delivered_at: Some(at),
            drop_cause: None,
        });
    }

    pub fn on_dropped(&mut self, pkt: &DataPacket, cause: DropCause) {
        self.drops.0[cause.index()] += 1;
        self.remember(PacketRecord {
            flow: pkt.flow,
            seq: pkt.seq,
            sent_at: pkt.sent_at,
            delivered_at: None,
            drop_cause: Some(cause),
        });
    }

    fn remember(&mut self, rec: PacketRecord) {
        if self.recent.len() == RECORD_RING {
            self.recent.pop_front();
        }
        self.recent.push_back(rec);
    }

    pub fn recent(&self) -> impl Iterator<Item = &PacketRecord> {
        self.recent.iter()
    }

    pub fn mean_delay_ms(&self) -> f64 {
        if self.delivered == 0 {
            f64::NAN
        } else {
            self.delay_sum_ms / self.delivered as f64
        }
    }

    pub fn delay_quantile_ms(&self, q: f64) -> f64 {
        if self.delivered == 0 {
            f64::NAN
        } else {
            self.delays_us.value_at_quantile(q) as f64 / 1000.0
        }
    }
}

/// Aggregates of one finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunStats {
    pub seed: u64,
    pub metric: MetricKind,
    pub rate_pps: u32,
    pub node_count: usize,
    pub data_sent: u64,
    pub data_delivered: u64,
    pub in_flight: u64,
    pub throughput_bps: f64,
    pub pdr: f64,
    pub e2ed_ms_mean: f64,
    pub e2ed_ms_p95: f64,
    /// `None` when nothing was delivered.
    pub nrl: Option<f64>,
    pub control: ControlCounters,
    pub control_tx: u64,
    pub op_cost_total: f64,
    pub route_recomputations: u64,
    pub drops: DropCounts,
    pub loops_observed: u64,
    pub events_executed: u64,
    pub measurement_window_s: f64,
}

pub struct FinalizeInput<'a> {
    pub seed: u64,
    pub metric: MetricKind,
    pub rate_pps: u32,
    pub node_count: usize,
    pub payload_bytes: u32,
    pub measurement_window_s: f64,
    pub data: &'a DataStats,
    pub in_flight: u64,
    pub control: ControlCounters,
    pub op_cost_total: f64,
    pub route_recomputations: u64,
    pub loops_observed: u64,
    pub events_executed: u64,
}

/// Normalized routing load: control transmissions per delivered packet.
pub fn normalized_routing_load(control_tx: u64, delivered: u64) -> Option<f64> {
    (delivered > 0).then(|| control_tx as f64 / delivered as f64)
}

pub fn finalize(input: FinalizeInput<'_>) -> Result<RunStats, SimError> {
    let d = input.data;
    if d.sent != d.delivered + d.drops.total() + input.in_flight {
        return Err(SimError::Invariant(format!(
            "packet conservation: sent {} != delivered {} + dropped {} + in flight {}",
            d.sent,
            d.delivered,
            d.drops.total(),
            input.in_flight
        )));
    }
    let throughput_bps = if input.measurement_window_s > 0.0 {
        (d.delivered * input.payload_bytes as u64 * 8) as f64 / input.measurement_window_s
    } else {
        0.0
    };
    let control_tx = input.control.total();
    Ok(RunStats {
        seed: input.seed,
        metric: input.metric,
        rate_pps: input.rate_pps,
        node_count: input.node_count,
        data_sent: d.sent,
        data_delivered: d.delivered,
        in_flight: input.in_flight,
        throughput_bps,
        pdr: if d.sent == 0 {
            0.0
        } else {
            d.delivered as f64 / d.sent as f64
        },
        e2ed_ms_mean: d.mean_delay_ms(),
        e2ed_ms_p95: d.delay_quantile_ms(0.95),
        nrl: normalized_routing_load(control_tx, d.delivered),
        control: input.control,
        control_tx,
        op_cost_total: input.op_cost_total,
        route_recomputations: input.route_recomputations,
        drops: d.drops,
        loops_observed: input.loops_observed,
        events_executed: input.events_executed,
        measurement_window_s: input.measurement_window_s,
    })
}

pub const RUN_COLUMNS: [&str; 16] = [
    "seed",
    "metric",
    "rate_pps",
    "data_sent",
    "data_delivered",
    "throughput_bps",
    "pdr",
    "e2ed_ms_mean",
    "e2ed_ms_p95",
    "nrl",
    "control_tx",
    "op_cost_total",
    "drop_no_route",
    "drop_queue",
    "drop_link_loss",
    "drop_ttl_expired",
];

pub(crate) fn fmt_real(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        "inf".into()
    } else {
        format!("{x:.6}")
    }
}

impl RunStats {
    pub fn nrl_or_inf(&self) -> f64 {
        self.nrl.unwrap_or(f64::INFINITY)
    }

    pub fn csv_record(&self) -> Vec<String> {
        vec![
            self.seed.to_string(),
            self.metric.to_string(),
            self.rate_pps.to_string(),
            self.data_sent.to_string(),
            self.data_delivered.to_string(),
            fmt_real(self.throughput_bps),
            fmt_real(self.pdr),
            fmt_real(self.e2ed_ms_mean),
            fmt_real(self.e2ed_ms_p95),
            fmt_real(self.nrl_or_inf()),
            self.control_tx.to_string(),
            fmt_real(self.op_cost_total),
            self.drops.get(DropCause::NoRoute).to_string(),
            self.drops.get(DropCause::QueueDrop).to_string(),
            self.drops.get(DropCause::LinkLoss).to_string(),
            self.drops.get(DropCause::TtlExpired).to_string(),
        ]
    }
}

pub fn write_runs_csv<W: io::Write>(out: W, runs: &[RunStats]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RUN_COLUMNS)?;
    for r in runs {
        w.write_record(r.csv_record())?;
    }
    w.flush()?;
    Ok(())
}
