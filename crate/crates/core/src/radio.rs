//! Static node placement, distance-based link loss and per-node drop-tail
//! transmit queues.
//!
//! There is no MAC contention model. A node serializes its own frames at the
//! channel bitrate; once a frame has been sent, each intended receiver draws
//! an independent Bernoulli trial against the link's success probability.

use std::collections::VecDeque;
use std::rc::Rc;

use crate::engine::{RngStream, Scheduler, SimTime};
use crate::error::SimError;
use crate::network::EventKind;
use crate::olsr::{HelloMessage, ProbeMessage, TcMessage};
use crate::traffic::DataPacket;
use crate::NodeId;

const SPEED_OF_LIGHT: f64 = 3e8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Two-segment loss model: full quality up to `d0_m`, then a linear fall
/// to `p_edge` at `range_m`, and nothing beyond.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossModel {
    pub range_m: f64,
    pub d0_m: f64,
    pub p_near: f64,
    pub p_edge: f64,
}

impl Default for LossModel {
    fn default() -> Self {
        LossModel {
            range_m: 250.0,
            d0_m: 100.0,
            p_near: 1.0,
            p_edge: 0.6,
        }
    }
}

impl LossModel {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.p_near) || !(0.0..=1.0).contains(&self.p_edge) {
            return Err("probabilities must lie in [0, 1]".into());
        }
        if self.p_edge > self.p_near {
            return Err("p_edge must not exceed p_near".into());
        }
        if !(self.d0_m >= 0.0 && self.range_m > 0.0) || self.d0_m > self.range_m {
            return Err("need 0 <= d0_m <= range_m and range_m > 0".into());
        }
        Ok(())
    }
}

pub fn link_success_probability(a: &Position, b: &Position, m: &LossModel) -> f64 {
    let d = a.distance(b);
    if d > m.range_m {
        0.0
    } else if d <= m.d0_m {
        m.p_near
    } else {
        let frac = (d - m.d0_m) / (m.range_m - m.d0_m);
        m.p_near + (m.p_edge - m.p_near) * frac
    }
}

/// Uniform placement of `n` nodes in a `side × side` square.
pub fn place_nodes(n: usize, side: f64, rng: &mut RngStream) -> Vec<Position> {
    (0..n)
        .map(|_| {
            let x = rng.uniform() * side;
            let y = rng.uniform() * side;
            Position { x, y }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Destination {
    Broadcast,
    Unicast(NodeId),
}

#[derive(Debug, Clone)]
pub enum Payload {
    Hello(HelloMessage),
    Tc(TcMessage),
    Probe(ProbeMessage),
    Data(DataPacket),
}

impl Payload {
    pub fn is_control(&self) -> bool {
        !matches!(self, Payload::Data(_))
    }
}

#[derive(Debug, Clone)]
pub struct Frame {
    pub src: NodeId,
    pub dst: Destination,
    pub size_bytes: u32,
    pub payload: Payload,
    pub enqueue_time: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioConfig {
    pub loss: LossModel,
    pub bitrate_bps: f64,
    pub queue_capacity: usize,
    /// Size of Hello, Tc and Probe frames.
    pub control_frame_bytes: u32,
    pub data_header_bytes: u32,
}

impl Default for RadioConfig {
    fn default() -> Self {
        RadioConfig {
            loss: LossModel::default(),
            bitrate_bps: 1e6,
            queue_capacity: 50,
            control_frame_bytes: 134,
            data_header_bytes: 20,
        }
    }
}

/// Drop-tail FIFO. The frame at the head is the one in service.
#[derive(Debug)]
pub struct TxQueue {
    capacity: usize,
    next_seq: u64,
    last_served: Option<u64>,
    pending: VecDeque<(u64, Frame)>,
}

impl TxQueue {
    pub fn new(capacity: usize) -> Self {
        TxQueue {
            capacity,
            next_seq: 0,
            last_served: None,
            pending: VecDeque::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    /// Appends `frame` unless the queue is full, in which case the frame is
    /// handed back.
    pub fn push(&mut self, frame: Frame) -> Result<(), Frame> {
        if self.pending.len() >= self.capacity {
            return Err(frame);
        }
        self.pending.push_back((self.next_seq, frame));
        self.next_seq += 1;
        Ok(())
    }

    pub fn head(&self) -> Option<&Frame> {
        self.pending.front().map(|(_, f)| f)
    }

    pub fn pop(&mut self) -> Option<Frame> {
        let (seq, frame) = self.pending.pop_front()?;
        assert!(
            self.last_served.is_none_or(|s| seq > s),
            "transmit queue served out of order"
        );
        self.last_served = Some(seq);
        Some(frame)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxOutcome {
    Enqueued,
    QueueDrop,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ChannelCounters {
    pub frames_sent: u64,
    pub queue_drops: u64,
    pub receptions: u64,
    pub losses: u64,
}

/// What happened when a node finished sending its head-of-line frame.
#[derive(Debug)]
pub struct ServiceReport {
    pub frame: Rc<Frame>,
    /// Set for unicast frames that the addressed neighbor did not receive.
    pub unicast_lost: bool,
}

#[derive(Debug, Clone, Copy)]
struct RadioLink {
    peer: NodeId,
    p: f64,
    propagation: SimTime,
}

/// Shared medium for one run: who hears whom, and every node's queue.
#[derive(Debug)]
pub struct Channel {
    config: RadioConfig,
    positions: Vec<Position>,
    links: Vec<Vec<RadioLink>>,
    queues: Vec<TxQueue>,
    loss_rng: RngStream,
    pub counters: ChannelCounters,
}

impl Channel {
    pub fn new(positions: Vec<Position>, config: RadioConfig, loss_rng: RngStream) -> Self {
        let n = positions.len();
        let mut links = vec![Vec::new(); n];
        for (i, a) in positions.iter().enumerate() {
            for (j, b) in positions.iter().enumerate() {
                if i == j {
                    continue;
                }
                let p = link_success_probability(a, b, &config.loss);
                if p > 0.0 {
                    links[i].push(RadioLink {
                        peer: NodeId::from_index(j),
                        p,
                        propagation: SimTime::from_secs_f64(a.distance(b) / SPEED_OF_LIGHT),
                    });
                }
            }
        }
        Channel {
            config,
            positions,
            links,
            queues: (0..n)
                .map(|_| TxQueue::new(config.queue_capacity))
                .collect(),
            loss_rng,
            counters: ChannelCounters::default(),
        }
    }

    pub fn config(&self) -> &RadioConfig {
        &self.config
    }

    pub fn node_count(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[Position] {
        &self.positions
    }

    /// Success probability of `a -> b` (zero when out of range).
    pub fn link_probability(&self, a: NodeId, b: NodeId) -> f64 {
        self.links[a.index()]
            .iter()
            .find(|l| l.peer == b)
            .map_or(0.0, |l| l.p)
    }

    pub fn in_range(&self, a: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.links[a.index()].iter().map(|l| l.peer)
    }

    pub fn queue_len(&self, node: NodeId) -> usize {
        self.queues[node.index()].len()
    }

    /// Frames waiting in (or being sent from) `node`'s queue.
    pub fn queued_frames(&self, node: NodeId) -> impl Iterator<Item = &Frame> {
        self.queues[node.index()].pending.iter().map(|(_, f)| f)
    }

    pub fn service_time(&self, size_bytes: u32) -> SimTime {
        SimTime::from_secs_f64(size_bytes as f64 * 8.0 / self.config.bitrate_bps)
    }

    /// Hands `frame` to `sender`'s transmit queue, starting service if the
    /// queue was idle.
    pub fn transmit(
        &mut self,
        sched: &mut Scheduler<EventKind>,
        sender: NodeId,
        frame: Frame,
    ) -> Result<TxOutcome, SimError> {
        let q = &mut self.queues[sender.index()];
        let was_idle = q.is_empty();
        let size = frame.size_bytes;
        if q.push(frame).is_err() {
            self.counters.queue_drops += 1;
            return Ok(TxOutcome::QueueDrop);
        }
        if was_idle {
            sched.schedule_in(self.service_time(size), EventKind::QueueService(sender))?;
        }
        Ok(TxOutcome::Enqueued)
    }

    /// Completes transmission of `sender`'s head-of-line frame: draws a loss
    /// trial per receiver, schedules the arrivals and starts the next frame.
    pub fn complete_service(
        &mut self,
        sched: &mut Scheduler<EventKind>,
        sender: NodeId,
    ) -> Result<ServiceReport, SimError> {
        let frame = self.queues[sender.index()]
            .pop()
            .ok_or_else(|| SimError::Invariant(format!("service event on idle queue {sender}")))?;
        let frame = Rc::new(frame);
        self.counters.frames_sent += 1;

        let mut unicast_lost = false;
        match frame.dst {
            Destination::Broadcast => {
                for i in 0..self.links[sender.index()].len() {
                    let link = self.links[sender.index()][i];
                    self.deliver(sched, &frame, link)?;
                }
            }
            Destination::Unicast(to) => {
                match self.links[sender.index()]
                    .iter()
                    .find(|l| l.peer == to)
                    .copied()
                {
                    Some(link) => unicast_lost = !self.deliver(sched, &frame, link)?,
                    None => {
                        self.counters.losses += 1;
                        unicast_lost = true;
                    }
                }
            }
        }

        if let Some(next) = self.queues[sender.index()].head() {
            let st = self.service_time(next.size_bytes);
            sched.schedule_in(st, EventKind::QueueService(sender))?;
        }
        Ok(ServiceReport {
            frame,
            unicast_lost,
        })
    }

    fn deliver(
        &mut self,
        sched: &mut Scheduler<EventKind>,
        frame: &Rc<Frame>,
        link: RadioLink,
    ) -> Result<bool, SimError> {
        if self.loss_rng.bernoulli(link.p) {
            self.counters.receptions += 1;
            sched.schedule_in(
                link.propagation,
                EventKind::FrameArrival {
                    to: link.peer,
                    frame: Rc::clone(frame),
                },
            )?;
            Ok(true)
        } else {
            self.counters.losses += 1;
            Ok(false)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::StreamRole;
    use crate::olsr::ProbeMessage;

    fn pos(x: f64, y: f64) -> Position {
        Position { x, y }
    }

    fn probe_frame(src: NodeId, dst: Destination, size: u32) -> Frame {
        Frame {
            src,
            dst,
            size_bytes: size,
            payload: Payload::Probe(ProbeMessage {
                originator: src,
                sent_at: SimTime::ZERO,
                seq: 0,
            }),
            enqueue_time: SimTime::ZERO,
        }
    }

    /// Runs the channel alone, returning `(time, receiver)` for every arrival.
    fn drain(ch: &mut Channel, sched: &mut Scheduler<EventKind>) -> Vec<(SimTime, NodeId)> {
        let mut arrivals = Vec::new();
        while let Some(ev) = sched.pop_until(SimTime::MAX) {
            match ev.kind {
                EventKind::QueueService(n) => {
                    ch.complete_service(sched, n).unwrap();
                }
                EventKind::FrameArrival { to, .. } => arrivals.push((ev.fire_at, to)),
                other => panic!("unexpected event {other:?}"),
            }
        }
        arrivals
    }

    #[test]
    fn probability_boundaries() {
        let m = LossModel::default();
        let o = pos(0.0, 0.0);
        assert_eq!(link_success_probability(&o, &o, &m), 1.0);
        assert_eq!(link_success_probability(&o, &pos(250.1, 0.0), &m), 0.0);
        assert_eq!(link_success_probability(&o, &pos(250.0, 0.0), &m), 0.6);
    }

    #[test]
    fn probability_interpolates_linearly() {
        let m = LossModel {
            range_m: 250.0,
            d0_m: 100.0,
            p_near: 1.0,
            p_edge: 0.6,
        };
        let p = link_success_probability(&pos(0.0, 0.0), &pos(175.0, 0.0), &m);
        assert!((p - 0.8).abs() < 1e-12);
    }

    #[test]
    fn probability_is_symmetric() {
        let m = LossModel::default();
        let mut rng = RngStream::new(3, StreamRole::Topology);
        let ps = place_nodes(40, 500.0, &mut rng);
        for a in &ps {
            for b in &ps {
                assert_eq!(
                    link_success_probability(a, b, &m),
                    link_success_probability(b, a, &m)
                );
            }
        }
    }

    #[test]
    fn placement_stays_in_arena_and_is_seeded() {
        let mut r1 = RngStream::new(11, StreamRole::Topology);
        let mut r2 = RngStream::new(11, StreamRole::Topology);
        let a = place_nodes(50, 1000.0, &mut r1);
        let b = place_nodes(50, 1000.0, &mut r2);
        assert_eq!(a.len(), 50);
        assert_eq!(a, b);
        assert!(a
            .iter()
            .all(|p| (0.0..=1000.0).contains(&p.x) && (0.0..=1000.0).contains(&p.y)));
    }

    #[test]
    fn degenerate_arena_puts_everyone_at_origin() {
        let mut r = RngStream::new(1, StreamRole::Topology);
        let ps = place_nodes(2, 0.0, &mut r);
        assert!(ps.iter().all(|p| p.x == 0.0 && p.y == 0.0));
    }

    #[test]
    fn full_queue_drops() {
        let cfg = RadioConfig {
            queue_capacity: 2,
            ..Default::default()
        };
        let mut ch = Channel::new(
            vec![pos(0.0, 0.0), pos(10.0, 0.0)],
            cfg,
            RngStream::new(0, StreamRole::Loss),
        );
        let mut sched = Scheduler::new();
        let n0 = NodeId(0);
        for _ in 0..2 {
            let out = ch
                .transmit(&mut sched, n0, probe_frame(n0, Destination::Broadcast, 134))
                .unwrap();
            assert_eq!(out, TxOutcome::Enqueued);
        }
        let out = ch
            .transmit(&mut sched, n0, probe_frame(n0, Destination::Broadcast, 134))
            .unwrap();
        assert_eq!(out, TxOutcome::QueueDrop);
        assert_eq!(ch.counters.queue_drops, 1);
        assert_eq!(ch.queue_len(n0), 2);
        assert_eq!(drain(&mut ch, &mut sched).len(), 2);
    }

    #[test]
    fn arrival_time_is_service_plus_propagation() {
        let mut ch = Channel::new(
            vec![pos(0.0, 0.0), pos(30.0, 0.0)],
            RadioConfig::default(),
            RngStream::new(0, StreamRole::Loss),
        );
        let mut sched = Scheduler::new();
        ch.transmit(
            &mut sched,
            NodeId(0),
            probe_frame(NodeId(0), Destination::Unicast(NodeId(1)), 134),
        )
        .unwrap();
        let arrivals = drain(&mut ch, &mut sched);
        // 134 B at 1 Mb/s plus 30 m / c = 100 ns.
        assert_eq!(
            arrivals,
            vec![(SimTime::from_nanos(1_072_000 + 100), NodeId(1))]
        );
    }

    #[test]
    fn back_to_back_frames_serialize() {
        let mut ch = Channel::new(
            vec![pos(0.0, 0.0), pos(0.0, 0.0)],
            RadioConfig::default(),
            RngStream::new(0, StreamRole::Loss),
        );
        let mut sched = Scheduler::new();
        for _ in 0..3 {
            ch.transmit(
                &mut sched,
                NodeId(0),
                probe_frame(NodeId(0), Destination::Broadcast, 125),
            )
            .unwrap();
        }
        let times: Vec<u64> = drain(&mut ch, &mut sched)
            .iter()
            .map(|(t, _)| t.as_nanos())
            .collect();
        assert_eq!(times, vec![1_000_000, 2_000_000, 3_000_000]);
    }

    #[test]
    fn broadcast_reaches_every_in_range_node() {
        let positions = vec![
            pos(0.0, 0.0),
            pos(50.0, 0.0),
            pos(0.0, 80.0),
            pos(60.0, 60.0),
            pos(900.0, 900.0),
        ];
        let mut ch = Channel::new(
            positions,
            RadioConfig::default(),
            RngStream::new(0, StreamRole::Loss),
        );
        let mut sched = Scheduler::new();
        ch.transmit(
            &mut sched,
            NodeId(0),
            probe_frame(NodeId(0), Destination::Broadcast, 134),
        )
        .unwrap();
        let mut rx: Vec<NodeId> = drain(&mut ch, &mut sched)
            .into_iter()
            .map(|(_, n)| n)
            .collect();
        rx.sort();
        assert_eq!(rx, vec![NodeId(1), NodeId(2), NodeId(3)]);
    }

    #[test]
    fn empirical_delivery_matches_link_probability() {
        let m = LossModel {
            range_m: 250.0,
            d0_m: 100.0,
            p_near: 1.0,
            p_edge: 0.6,
        };
        let cfg = RadioConfig {
            loss: m,
            queue_capacity: 20_000,
            ..Default::default()
        };
        let mut ch = Channel::new(
            vec![pos(0.0, 0.0), pos(175.0, 0.0)],
            cfg,
            RngStream::new(99, StreamRole::Loss),
        );
        let mut sched = Scheduler::new();
        let n = 10_000;
        for _ in 0..n {
            ch.transmit(
                &mut sched,
                NodeId(0),
                probe_frame(NodeId(0), Destination::Unicast(NodeId(1)), 64),
            )
            .unwrap();
        }
        let got = drain(&mut ch, &mut sched).len() as f64 / n as f64;
        assert!((got - 0.8).abs() <= 0.02, "delivery fraction {got}");
    }
}
