//! One simulation run: wires the OLSR nodes, the radio channel and the CBR
//! flows to the event queue and dispatches every event.

use std::rc::Rc;

use crate::config::RunConfig;
use crate::engine::{RngStream, RunOutcome, Scheduler, SimTime, StreamRole};
use crate::error::SimError;
use crate::experiment::{screen_topology, ConnectivityReport};
use crate::metrics::OpCounter;
use crate::olsr::{walk_next_hops, OlsrNode, RouteWalk};
use crate::radio::{place_nodes, Channel, Destination, Frame, Payload, Position, TxOutcome};
use crate::traffic::{
    choose_flow_pairs, finalize, forward_data, ControlCounters, DataPacket, DataStats, DropCause,
    FinalizeInput, FlowSpec, Forward, RunStats, Traffic,
};
use crate::NodeId;

#[derive(Debug, Clone)]
pub enum EventKind {
    HelloTimer(NodeId),
    TcTimer(NodeId),
    ProbeTimer(NodeId),
    FrameArrival { to: NodeId, frame: Rc<Frame> },
    QueueService(NodeId),
    FlowTick(usize),
    RouteRecompute(NodeId),
    StatsSample,
    End,
}

#[derive(Debug)]
pub struct Simulation {
    cfg: RunConfig,
    sched: Scheduler<EventKind>,
    channel: Channel,
    nodes: Vec<OlsrNode>,
    traffic: Traffic,
    flows: Vec<FlowSpec>,
    data: DataStats,
    in_flight: u64,
    control: ControlCounters,
    ops: OpCounter,
    recomputations: u64,
    loops: u64,
    jitter: RngStream,
    connectivity: ConnectivityReport,
    end: SimTime,
}

impl Simulation {
    /// Places nodes from the run's topology stream and builds the run.
    pub fn new(cfg: &RunConfig) -> Result<Self, SimError> {
        let mut topo = RngStream::new(cfg.seed, StreamRole::Topology);
        let positions = place_nodes(cfg.node_count, cfg.arena_side_m, &mut topo);
        Self::with_positions(cfg, positions)
    }

    pub fn with_positions(cfg: &RunConfig, positions: Vec<Position>) -> Result<Self, SimError> {
        let n = positions.len();
        let mut traffic_rng = RngStream::new(cfg.seed, StreamRole::Traffic);
        let ids: Vec<NodeId> = (0..n).map(NodeId::from_index).collect();
        let pairs = choose_flow_pairs(&ids, cfg.flow_pairs, &mut traffic_rng);
        let (connectivity, pairs) =
            screen_topology(&positions, &cfg.radio.loss, &pairs, &mut traffic_rng)?;

        let channel = Channel::new(
            positions,
            cfg.radio,
            RngStream::new(cfg.seed, StreamRole::Loss),
        );
        let nodes = ids
            .iter()
            .map(|&id| OlsrNode::new(id, cfg.protocol))
            .collect();
        let end = SimTime::from_secs_f64(cfg.duration_s);
        let warmup = SimTime::from_secs_f64(cfg.warmup_s);
        let flows: Vec<FlowSpec> = pairs
            .iter()
            .map(|&(src, dst)| FlowSpec {
                src,
                dst,
                rate_pps: cfg.rate_pps,
                payload_bytes: cfg.payload_bytes,
                start: warmup,
                stop: end,
            })
            .collect();

        let mut sim = Simulation {
            cfg: cfg.clone(),
            sched: Scheduler::new(),
            channel,
            nodes,
            traffic: Traffic::default(),
            flows,
            data: DataStats::default(),
            in_flight: 0,
            control: ControlCounters::default(),
            ops: OpCounter::new(cfg.cost),
            recomputations: 0,
            loops: 0,
            jitter: RngStream::new(cfg.seed, StreamRole::Jitter),
            connectivity,
            end,
        };
        sim.schedule_initial(&mut traffic_rng, warmup)?;
        Ok(sim)
    }

    fn schedule_initial(
        &mut self,
        traffic_rng: &mut RngStream,
        warmup: SimTime,
    ) -> Result<(), SimError> {
        let p = self.cfg.protocol;
        let probes = self.cfg.metric.uses_probes();
        for i in 0..self.nodes.len() {
            let id = NodeId::from_index(i);
            let at = SimTime::from_secs_f64(self.jitter.uniform() * p.hello_interval_s);
            self.sched.schedule(at, EventKind::HelloTimer(id))?;
            let at = SimTime::from_secs_f64(self.jitter.uniform() * p.tc_interval_s);
            self.sched.schedule(at, EventKind::TcTimer(id))?;
            if probes {
                let at = SimTime::from_secs_f64(self.jitter.uniform() * p.probe_interval_s);
                self.sched.schedule(at, EventKind::ProbeTimer(id))?;
            }
        }
        for (flow, at) in self.traffic.start_flows(&self.flows, traffic_rng)? {
            self.sched.schedule(at, EventKind::FlowTick(flow))?;
        }
        if warmup < self.end {
            self.sched.schedule(warmup, EventKind::StatsSample)?;
        }
        self.sched.schedule(self.end, EventKind::End)?;
        Ok(())
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn now(&self) -> SimTime {
        self.sched.now()
    }

    pub fn nodes(&self) -> &[OlsrNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &OlsrNode {
        &self.nodes[id.index()]
    }

    pub fn channel(&self) -> &Channel {
        &self.channel
    }

    pub fn flows(&self) -> &[FlowSpec] {
        &self.flows
    }

    pub fn control(&self) -> &ControlCounters {
        &self.control
    }

    pub fn data(&self) -> &DataStats {
        &self.data
    }

    pub fn ops(&self) -> &OpCounter {
        &self.ops
    }

    pub fn connectivity(&self) -> &ConnectivityReport {
        &self.connectivity
    }

    /// Executes all events up to `t` (capped at the run's end).
    pub fn run_until(&mut self, t: SimTime) -> Result<RunOutcome, SimError> {
        let t = t.min(self.end);
        let start = self.sched.events_executed();
        while let Some(ev) = self.sched.pop_until(t) {
            self.handle(ev.kind)?;
        }
        self.sched.advance_to(t);
        Ok(RunOutcome {
            events_executed: self.sched.events_executed() - start,
            clock: self.sched.now(),
        })
    }

    /// Runs to the configured duration and returns the run's statistics.
    pub fn run(mut self) -> Result<RunStats, SimError> {
        self.run_until(self.end)?;
        self.finalize()
    }

    pub fn finalize(&self) -> Result<RunStats, SimError> {
        let in_flight = self.count_in_flight();
        if in_flight != self.in_flight {
            return Err(SimError::Invariant(format!(
                "{} data packets are queued or in the air but {} are unaccounted for",
                in_flight, self.in_flight
            )));
        }
        finalize(FinalizeInput {
            seed: self.cfg.seed,
            metric: self.cfg.metric,
            rate_pps: self.cfg.rate_pps,
            node_count: self.nodes.len(),
            payload_bytes: self.cfg.payload_bytes,
            measurement_window_s: self.cfg.measurement_window_s(),
            data: &self.data,
            in_flight,
            control: self.control,
            op_cost_total: self.ops.weighted_cost(),
            route_recomputations: self.recomputations,
            loops_observed: self.loops,
            events_executed: self.sched.events_executed(),
        })
    }

    /// Data packets sitting in transmit queues or propagating to a receiver.
    pub fn count_in_flight(&self) -> u64 {
        let queued: usize = (0..self.nodes.len())
            .map(|i| {
                self.channel
                    .queued_frames(NodeId::from_index(i))
                    .filter(|f| matches!(f.payload, Payload::Data(_)))
                    .count()
            })
            .sum();
        let airborne = self
            .sched
            .pending_events()
            .filter(|ev| {
                matches!(&ev.kind, EventKind::FrameArrival { frame, .. }
                    if matches!(frame.payload, Payload::Data(_)))
            })
            .count();
        (queued + airborne) as u64
    }

    /// Walks every node's current table from `src` towards `dst`.
    pub fn walk_route(&self, src: NodeId, dst: NodeId) -> RouteWalk {
        walk_next_hops(
            |n| self.nodes[n.index()].route(dst).map(|r| r.next_hop),
            src,
            dst,
        )
    }

    fn handle(&mut self, kind: EventKind) -> Result<(), SimError> {
        let now = self.sched.now();
        match kind {
            EventKind::HelloTimer(n) => {
                self.emit_hello(n)?;
                let next = self.next_period(self.cfg.protocol.hello_interval_s);
                self.sched.schedule_in(next, EventKind::HelloTimer(n))?;
            }
            EventKind::TcTimer(n) => {
                self.emit_tc(n)?;
                let next = self.next_period(self.cfg.protocol.tc_interval_s);
                self.sched.schedule_in(next, EventKind::TcTimer(n))?;
            }
            EventKind::ProbeTimer(n) => {
                let probe = self.nodes[n.index()].build_probe(now);
                self.send_control(n, Payload::Probe(probe))?;
                let next = self.next_period(self.cfg.protocol.probe_interval_s);
                self.sched.schedule_in(next, EventKind::ProbeTimer(n))?;
            }
            EventKind::FrameArrival { to, frame } => self.on_frame(to, &frame)?,
            EventKind::QueueService(n) => {
                let report = self.channel.complete_service(&mut self.sched, n)?;
                match &report.frame.payload {
                    Payload::Hello(_) => self.control.hello += 1,
                    Payload::Tc(tc) if tc.originator == n => self.control.tc_originated += 1,
                    Payload::Tc(_) => self.control.tc_relayed += 1,
                    Payload::Probe(_) => self.control.probe += 1,
                    Payload::Data(pkt) => {
                        if report.unicast_lost {
                            self.drop_data(pkt, DropCause::LinkLoss);
                        }
                    }
                }
            }
            EventKind::FlowTick(flow) => {
                let (pkt, next) = self.traffic.emit(flow, now);
                self.data.on_sent();
                self.in_flight += 1;
                self.forward(pkt.src, pkt)?;
                if let Some(at) = next {
                    self.sched.schedule(at, EventKind::FlowTick(flow))?;
                }
            }
            EventKind::RouteRecompute(n) => {
                let count = self.nodes.len();
                self.nodes[n.index()].recompute_routes(now, self.cfg.metric, count, &mut self.ops);
                self.recomputations += 1;
            }
            EventKind::StatsSample => {
                self.loops += self
                    .flows
                    .iter()
                    .filter(|f| matches!(self.walk_route(f.src, f.dst), RouteWalk::Loop { .. }))
                    .count() as u64;
                let next = now + SimTime::from_secs_f64(self.cfg.stats_interval_s);
                if next < self.end {
                    self.sched.schedule(next, EventKind::StatsSample)?;
                }
            }
            EventKind::End => {}
        }
        Ok(())
    }

    fn next_period(&mut self, interval_s: f64) -> SimTime {
        let j = self.cfg.protocol.jitter_s;
        let offset = if j > 0.0 {
            self.jitter.uniform_range(-j, j)
        } else {
            0.0
        };
        SimTime::from_secs_f64(interval_s + offset)
    }

    /// Broadcasts a HELLO reporting, per neighbor, how many of its HELLOs
    /// arrived during the last window.
    pub fn emit_hello(&mut self, n: NodeId) -> Result<(), SimError> {
        let now = self.sched.now();
        let hello = self.nodes[n.index()].build_hello(now);
        self.send_control(n, Payload::Hello(hello))?;
        self.request_recompute(n)
    }

    /// Originates a TC if any neighbor has selected `n` as MPR.
    pub fn emit_tc(&mut self, n: NodeId) -> Result<(), SimError> {
        let now = self.sched.now();
        if let Some(tc) = self.nodes[n.index()].build_tc(now) {
            self.send_control(n, Payload::Tc(tc))?;
        }
        Ok(())
    }

    fn send_control(&mut self, n: NodeId, payload: Payload) -> Result<(), SimError> {
        let frame = Frame {
            src: n,
            dst: Destination::Broadcast,
            size_bytes: self.cfg.radio.control_frame_bytes,
            payload,
            enqueue_time: self.sched.now(),
        };
        self.channel.transmit(&mut self.sched, n, frame)?;
        Ok(())
    }

    fn request_recompute(&mut self, n: NodeId) -> Result<(), SimError> {
        if let Some(at) = self.nodes[n.index()].request_recompute(self.sched.now()) {
            self.sched.schedule(at, EventKind::RouteRecompute(n))?;
        }
        Ok(())
    }

    fn on_frame(&mut self, to: NodeId, frame: &Frame) -> Result<(), SimError> {
        let now = self.sched.now();
        match &frame.payload {
            Payload::Hello(hello) => {
                self.nodes[to.index()].on_hello(hello, now);
                self.request_recompute(to)?;
            }
            Payload::Tc(tc) => {
                let out = self.nodes[to.index()].on_tc(frame.src, tc, now);
                if let Some(relay) = out.relay {
                    self.send_control(to, Payload::Tc(relay))?;
                }
                if out.changed {
                    self.request_recompute(to)?;
                }
            }
            Payload::Probe(probe) => {
                self.nodes[to.index()].on_probe(probe, now);
                if self.cfg.metric.uses_probes() {
                    self.request_recompute(to)?;
                }
            }
            Payload::Data(pkt) => self.forward(to, *pkt)?,
        }
        Ok(())
    }

    fn forward(&mut self, node: NodeId, pkt: DataPacket) -> Result<(), SimError> {
        let route = self.nodes[node.index()].route(pkt.dst);
        match forward_data(node, &pkt, route) {
            Forward::Deliver => {
                self.data.on_delivered(&pkt, self.sched.now());
                self.in_flight -= 1;
            }
            Forward::Drop(cause) => self.drop_data(&pkt, cause),
            Forward::Send { next_hop, packet } => {
                let frame = Frame {
                    src: node,
                    dst: Destination::Unicast(next_hop),
                    size_bytes: self.cfg.payload_bytes + self.cfg.radio.data_header_bytes,
                    payload: Payload::Data(packet),
                    enqueue_time: self.sched.now(),
                };
                if self.channel.transmit(&mut self.sched, node, frame)? == TxOutcome::QueueDrop {
                    self.drop_data(&packet, DropCause::QueueDrop);
                }
            }
        }
        Ok(())
    }

    fn drop_data(&mut self, pkt: &DataPacket, cause: DropCause) {
        self.data.on_dropped(pkt, cause);
        self.in_flight -= 1;
    }
}
