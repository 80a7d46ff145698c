//! Per-node OLSR state: HELLO link sensing with delivery-ratio windows, MPR
//! selection, TC processing, delay probes and route computation.
//!
//! Handlers here never touch the event queue or the radio. They update node
//! state and return what should be sent; the network layer does the
//! scheduling.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::engine::SimTime;
use crate::metrics::{compute_paths, LinkGraph, LinkSample, MetricKind, OpCounter, PathWeight};
use crate::NodeId;

/// How TC messages are relayed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flooding {
    /// Only MPRs of the previous hop retransmit.
    Mpr,
    /// Every node retransmits every new TC once. Baseline for comparison.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolConfig {
    pub hello_interval_s: f64,
    pub window_s: f64,
    pub tc_interval_s: f64,
    pub probe_interval_s: f64,
    /// Half-width of the uniform jitter added to every periodic emission.
    pub jitter_s: f64,
    pub owd_alpha: f64,
    pub neighbor_hold_mult: f64,
    pub topology_hold_mult: f64,
    pub recompute_debounce_s: f64,
    pub tc_ttl: u8,
    pub flooding: Flooding,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            hello_interval_s: 2.0,
            window_s: 20.0,
            tc_interval_s: 5.0,
            probe_interval_s: 2.0,
            jitter_s: 0.2,
            owd_alpha: 0.25,
            neighbor_hold_mult: 3.0,
            topology_hold_mult: 3.0,
            recompute_debounce_s: 1.0,
            tc_ttl: 255,
            flooding: Flooding::Mpr,
        }
    }
}

impl ProtocolConfig {
    /// HELLOs a neighbor should deliver in one full window.
    pub fn expected_per_window(&self) -> f64 {
        self.window_s / self.hello_interval_s
    }

    fn neighbor_hold(&self) -> SimTime {
        SimTime::from_secs_f64(self.neighbor_hold_mult * self.hello_interval_s)
    }

    fn topology_hold(&self) -> SimTime {
        SimTime::from_secs_f64(self.topology_hold_mult * self.tc_interval_s)
    }

    fn window(&self) -> SimTime {
        SimTime::from_secs_f64(self.window_s)
    }

    fn hello_interval(&self) -> SimTime {
        SimTime::from_secs_f64(self.hello_interval_s)
    }

    fn window_slots(&self) -> u32 {
        self.expected_per_window().round().max(1.0) as u32
    }
}

/// `marks / expected`, clamped to `[0, 1]`.
pub fn delivery_ratio(marks: usize, expected: f64) -> f64 {
    if expected <= 0.0 {
        return 0.0;
    }
    (marks as f64 / expected).clamp(0.0, 1.0)
}

/// A neighbor's HELLOs over its last `w/t` emissions, keyed by sequence
/// number so that emission jitter and queueing delay cannot push a HELLO
/// across the window edge.
#[derive(Debug, Clone, Default)]
pub struct ReceptionWindow {
    /// `(arrival, seq)`, oldest first, seq strictly increasing.
    marks: VecDeque<(SimTime, u32)>,
}

impl ReceptionWindow {
    /// Records a HELLO. Duplicates and stale sequence numbers are ignored.
    pub fn mark(&mut self, at: SimTime, seq: u32) {
        if self.marks.back().is_none_or(|&(_, last)| seq > last) {
            self.marks.push_back((at, seq));
        }
    }

    /// Sequence number the neighbor has most likely reached by `now`: the
    /// newest one heard, plus one per interval that has gone by without a
    /// HELLO once half an interval of lateness is allowed for.
    pub fn newest_seq(&self, now: SimTime, interval: SimTime) -> Option<u32> {
        let &(at, seq) = self.marks.back()?;
        let elapsed = now.saturating_sub(at).as_nanos() as f64 / interval.as_nanos().max(1) as f64;
        let missed = ((elapsed + 0.5).floor() - 1.0).max(0.0) as u32;
        Some(seq.saturating_add(missed))
    }

    /// HELLOs received among the neighbor's last `slots` emissions. Nothing
    /// counts once the neighbor has been silent for `window`.
    pub fn count(&mut self, now: SimTime, interval: SimTime, slots: u32, window: SimTime) -> usize {
        let Some(newest) = self.newest_seq(now, interval) else {
            return 0;
        };
        let silent = self
            .marks
            .back()
            .is_some_and(|&(at, _)| now.saturating_sub(at) >= window);
        let oldest = newest.saturating_sub(slots.saturating_sub(1));
        while self
            .marks
            .front()
            .is_some_and(|&(_, s)| s < oldest || silent)
        {
            self.marks.pop_front();
        }
        self.marks.len()
    }

    /// Sequence number of the oldest HELLO still in the window.
    pub fn oldest_seq(&self) -> Option<u32> {
        self.marks.front().map(|&(_, s)| s)
    }

    pub fn is_empty(&self) -> bool {
        self.marks.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborReport {
    pub neighbor: NodeId,
    /// HELLOs from `neighbor` received during the last window.
    pub received: u32,
    pub symmetric: bool,
    /// The reporting node has chosen `neighbor` as one of its MPRs.
    pub mpr: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HelloMessage {
    pub originator: NodeId,
    pub neighbor_reports: Vec<NeighborReport>,
    pub seq: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TcAdvert {
    pub neighbor: NodeId,
    pub d_f: f64,
    pub d_r: f64,
    pub owd_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TcMessage {
    pub originator: NodeId,
    pub advertised: Vec<TcAdvert>,
    pub seq: u32,
    pub ttl: u8,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeMessage {
    pub originator: NodeId,
    pub sent_at: SimTime,
    pub seq: u32,
}

#[derive(Debug, Clone)]
pub struct LinkQualityRecord {
    pub neighbor: NodeId,
    pub rx_window: ReceptionWindow,
    pub d_r: f64,
    pub d_f: f64,
    pub owd_ms: Option<f64>,
    pub first_heard: Option<SimTime>,
    /// Sequence number of the first HELLO heard from the neighbor.
    pub first_seq: Option<u32>,
    pub last_heard: SimTime,
    /// Symmetric neighbors the neighbor reported, with their expiry.
    two_hop: BTreeSet<NodeId>,
    two_hop_until: SimTime,
    mpr_selector_until: Option<SimTime>,
}

impl LinkQualityRecord {
    fn new(neighbor: NodeId, now: SimTime) -> Self {
        LinkQualityRecord {
            neighbor,
            rx_window: ReceptionWindow::default(),
            d_r: 0.0,
            d_f: 0.0,
            owd_ms: None,
            first_heard: None,
            first_seq: None,
            last_heard: now,
            two_hop: BTreeSet::new(),
            two_hop_until: SimTime::ZERO,
            mpr_selector_until: None,
        }
    }

    pub fn q(&self) -> f64 {
        self.d_f * self.d_r
    }

    pub fn is_symmetric(&self) -> bool {
        self.d_f > 0.0 && self.d_r > 0.0
    }

    /// HELLOs expected so far: a full window's worth once the neighbor has
    /// been heard for that long, pro-rated by its emissions before that.
    fn expected(&self, now: SimTime, cfg: &ProtocolConfig) -> f64 {
        let full = cfg.expected_per_window();
        match (
            self.first_seq,
            self.rx_window.newest_seq(now, cfg.hello_interval()),
        ) {
            (Some(first), Some(newest)) if newest >= first => {
                ((newest - first + 1) as f64).min(full)
            }
            _ => full,
        }
    }

    fn refresh(&mut self, now: SimTime, cfg: &ProtocolConfig) {
        let marks =
            self.rx_window
                .count(now, cfg.hello_interval(), cfg.window_slots(), cfg.window());
        self.d_r = delivery_ratio(marks, self.expected(now, cfg));
        if marks == 0 {
            // Nothing heard for a full window: the link is gone.
            self.d_f = 0.0;
        }
    }

    fn link_sample(&self) -> LinkSample {
        LinkSample {
            d_f: self.d_f,
            d_r: self.d_r,
            owd_ms: self.owd_ms,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopologyEntry {
    pub d_f: f64,
    pub d_r: f64,
    pub owd_ms: Option<f64>,
    pub expires: SimTime,
}

impl TopologyEntry {
    pub fn q(&self) -> f64 {
        self.d_f * self.d_r
    }
}

/// Remote links learned from TC messages, keyed `(originator, neighbor)`.
#[derive(Debug, Clone, Default)]
pub struct TopologyBase {
    entries: BTreeMap<(NodeId, NodeId), TopologyEntry>,
    latest_seq: BTreeMap<NodeId, u32>,
}

impl TopologyBase {
    /// Installs `msg` if it is newer than what we hold for its originator.
    /// Returns true when the base changed.
    pub fn apply(&mut self, msg: &TcMessage, now: SimTime, hold: SimTime) -> bool {
        if let Some(&seq) = self.latest_seq.get(&msg.originator) {
            if msg.seq <= seq {
                return false;
            }
        }
        self.latest_seq.insert(msg.originator, msg.seq);
        let orig = msg.originator;
        self.entries.retain(|(from, _), _| *from != orig);
        for a in &msg.advertised {
            self.entries.insert(
                (orig, a.neighbor),
                TopologyEntry {
                    d_f: a.d_f,
                    d_r: a.d_r,
                    owd_ms: a.owd_ms,
                    expires: now + hold,
                },
            );
        }
        true
    }

    pub fn expire(&mut self, now: SimTime) -> bool {
        let before = self.entries.len();
        self.entries.retain(|_, e| e.expires > now);
        before != self.entries.len()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&(NodeId, NodeId), &TopologyEntry)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Route {
    pub next_hop: NodeId,
    pub weight: PathWeight,
    pub hop_count: u32,
}

pub type RoutingTable = BTreeMap<NodeId, Route>;

/// Greedy MPR selection.
///
/// `neighbors` maps each symmetric neighbor to its link quality and the
/// nodes it reaches. Neighbors that are the only way to some 2-hop node are
/// taken first; then the neighbor covering the most still-uncovered 2-hop
/// nodes is added repeatedly (ties: higher quality, then lower id).
pub fn select_mprs(
    me: NodeId,
    neighbors: &BTreeMap<NodeId, (f64, BTreeSet<NodeId>)>,
) -> BTreeSet<NodeId> {
    let strict_two_hop: BTreeSet<NodeId> = neighbors
        .values()
        .flat_map(|(_, reach)| reach.iter().copied())
        .filter(|n| *n != me && !neighbors.contains_key(n))
        .collect();

    let mut mprs = BTreeSet::new();
    let mut uncovered = strict_two_hop.clone();
    for target in &strict_two_hop {
        let mut via = neighbors.iter().filter(|(_, (_, r))| r.contains(target));
        if let (Some((only, _)), None) = (via.next(), via.next()) {
            mprs.insert(*only);
        }
    }
    for m in &mprs {
        for t in &neighbors[m].1 {
            uncovered.remove(t);
        }
    }

    while !uncovered.is_empty() {
        let mut best: Option<(NodeId, usize, f64)> = None;
        for (n, (q, reach)) in neighbors {
            if mprs.contains(n) {
                continue;
            }
            let gain = reach.iter().filter(|t| uncovered.contains(t)).count();
            if gain == 0 {
                continue;
            }
            let wins = match best {
                None => true,
                Some((_, g, bq)) => gain > g || (gain == g && *q > bq),
            };
            if wins {
                best = Some((*n, gain, *q));
            }
        }
        let Some((pick, _, _)) = best else { break };
        mprs.insert(pick);
        for t in &neighbors[&pick].1 {
            uncovered.remove(t);
        }
    }
    mprs
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RouteWalk {
    Reached { hops: usize },
    NoRoute { at: NodeId },
    Loop { at: NodeId },
}

/// Follows next hops from `src` towards `dst`.
pub fn walk_next_hops<F>(next_hop: F, src: NodeId, dst: NodeId) -> RouteWalk
where
    F: Fn(NodeId) -> Option<NodeId>,
{
    let mut visited = BTreeSet::from([src]);
    let mut at = src;
    let mut hops = 0;
    while at != dst {
        let Some(next) = next_hop(at) else {
            return RouteWalk::NoRoute { at };
        };
        if !visited.insert(next) {
            return RouteWalk::Loop { at: next };
        }
        at = next;
        hops += 1;
    }
    RouteWalk::Reached { hops }
}

/// What to do with a received TC.
#[derive(Debug, Clone, PartialEq)]
pub struct TcOutcome {
    pub changed: bool,
    pub relay: Option<TcMessage>,
}

#[derive(Debug, Clone)]
pub struct OlsrNode {
    id: NodeId,
    cfg: ProtocolConfig,
    links: BTreeMap<NodeId, LinkQualityRecord>,
    mprs: BTreeSet<NodeId>,
    topology: TopologyBase,
    seen_tc: BTreeMap<(NodeId, u32), (SimTime, bool)>,
    routes: RoutingTable,
    hello_seq: u32,
    tc_seq: u32,
    probe_seq: u32,
    recompute_pending: bool,
    last_recompute: Option<SimTime>,
}

impl OlsrNode {
    pub fn new(id: NodeId, cfg: ProtocolConfig) -> Self {
        OlsrNode {
            id,
            cfg,
            links: BTreeMap::new(),
            mprs: BTreeSet::new(),
            topology: TopologyBase::default(),
            seen_tc: BTreeMap::new(),
            routes: RoutingTable::new(),
            hello_seq: 0,
            tc_seq: 0,
            probe_seq: 0,
            recompute_pending: false,
            last_recompute: None,
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.cfg
    }

    pub fn link(&self, neighbor: NodeId) -> Option<&LinkQualityRecord> {
        self.links.get(&neighbor)
    }

    pub fn links(&self) -> impl Iterator<Item = &LinkQualityRecord> {
        self.links.values()
    }

    pub fn mprs(&self) -> &BTreeSet<NodeId> {
        &self.mprs
    }

    pub fn topology(&self) -> &TopologyBase {
        &self.topology
    }

    pub fn routes(&self) -> &RoutingTable {
        &self.routes
    }

    pub fn route(&self, dest: NodeId) -> Option<&Route> {
        self.routes.get(&dest)
    }

    /// Recomputes every delivery ratio at `now` and forgets links silent for
    /// a full window.
    pub fn refresh(&mut self, now: SimTime) {
        let cfg = self.cfg;
        for rec in self.links.values_mut() {
            rec.refresh(now, &cfg);
        }
        let window = cfg.window();
        self.links
            .retain(|_, r| !(r.rx_window.is_empty() && now.saturating_sub(r.last_heard) > window));
        self.topology.expire(now);
    }

    pub fn symmetric_neighbors(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.links
            .values()
            .filter(|r| r.is_symmetric())
            .map(|r| r.neighbor)
    }

    pub fn mpr_selectors(&self, now: SimTime) -> BTreeSet<NodeId> {
        self.links
            .values()
            .filter(|r| r.is_symmetric() && r.mpr_selector_until.is_some_and(|t| t > now))
            .map(|r| r.neighbor)
            .collect()
    }

    pub fn build_hello(&mut self, now: SimTime) -> HelloMessage {
        self.refresh(now);
        let window = self.cfg.window();
        let interval = self.cfg.hello_interval();
        let slots = self.cfg.window_slots();
        let neighbor_reports = self
            .links
            .values_mut()
            .filter_map(|r| {
                let received = r.rx_window.count(now, interval, slots, window) as u32;
                (received > 0).then(|| NeighborReport {
                    neighbor: r.neighbor,
                    received,
                    symmetric: r.is_symmetric(),
                    mpr: false,
                })
            })
            .map(|mut rep| {
                rep.mpr = self.mprs.contains(&rep.neighbor);
                rep
            })
            .collect();
        self.hello_seq = self.hello_seq.wrapping_add(1);
        HelloMessage {
            originator: self.id,
            neighbor_reports,
            seq: self.hello_seq,
        }
    }

    pub fn on_hello(&mut self, msg: &HelloMessage, now: SimTime) {
        let cfg = self.cfg;
        let me = self.id;
        let rec = self
            .links
            .entry(msg.originator)
            .or_insert_with(|| LinkQualityRecord::new(msg.originator, now));
        rec.rx_window.mark(now, msg.seq);
        rec.first_heard.get_or_insert(now);
        rec.first_seq.get_or_insert(msg.seq);
        rec.last_heard = now;
        rec.refresh(now, &cfg);

        let about_me = msg.neighbor_reports.iter().find(|r| r.neighbor == me);
        rec.d_f = about_me.map_or(0.0, |r| {
            delivery_ratio(r.received as usize, rec.expected(now, &cfg))
        });
        rec.mpr_selector_until = about_me
            .filter(|r| r.mpr)
            .map(|_| now + cfg.neighbor_hold());
        rec.two_hop = msg
            .neighbor_reports
            .iter()
            .filter(|r| r.symmetric && r.neighbor != me)
            .map(|r| r.neighbor)
            .collect();
        rec.two_hop_until = now + cfg.neighbor_hold();

        self.mprs = self.compute_mprs(now);
    }

    fn compute_mprs(&self, now: SimTime) -> BTreeSet<NodeId> {
        let neighbors: BTreeMap<NodeId, (f64, BTreeSet<NodeId>)> = self
            .links
            .values()
            .filter(|r| r.is_symmetric())
            .map(|r| {
                let reach = if r.two_hop_until > now {
                    r.two_hop.clone()
                } else {
                    BTreeSet::new()
                };
                (r.neighbor, (r.q(), reach))
            })
            .collect();
        select_mprs(self.id, &neighbors)
    }

    /// Builds this node's TC, or `None` when no neighbor has selected it as
    /// MPR.
    pub fn build_tc(&mut self, now: SimTime) -> Option<TcMessage> {
        self.refresh(now);
        if self.mpr_selectors(now).is_empty() {
            return None;
        }
        let advertised = self
            .links
            .values()
            .filter(|r| r.is_symmetric())
            .map(|r| TcAdvert {
                neighbor: r.neighbor,
                d_f: r.d_f,
                d_r: r.d_r,
                owd_ms: r.owd_ms,
            })
            .collect();
        self.tc_seq += 1;
        let msg = TcMessage {
            originator: self.id,
            advertised,
            seq: self.tc_seq,
            ttl: self.cfg.tc_ttl,
        };
        self.seen_tc.insert((self.id, msg.seq), (now, true));
        Some(msg)
    }

    pub fn on_tc(&mut self, prev_hop: NodeId, msg: &TcMessage, now: SimTime) -> TcOutcome {
        if msg.originator == self.id {
            return TcOutcome {
                changed: false,
                relay: None,
            };
        }
        let key = (msg.originator, msg.seq);
        let changed = match self.seen_tc.get(&key) {
            Some(_) => false,
            None => {
                self.seen_tc.insert(key, (now, false));
                self.topology.apply(msg, now, self.cfg.topology_hold())
            }
        };

        let already_relayed = self.seen_tc.get(&key).is_some_and(|(_, r)| *r);
        let may_relay = match self.cfg.flooding {
            Flooding::Full => true,
            Flooding::Mpr => self.mpr_selectors(now).contains(&prev_hop),
        };
        let relay = if !already_relayed && may_relay && msg.ttl > 1 {
            if let Some(entry) = self.seen_tc.get_mut(&key) {
                entry.1 = true;
            }
            Some(TcMessage {
                ttl: msg.ttl - 1,
                ..msg.clone()
            })
        } else {
            None
        };

        self.prune_seen(now);
        TcOutcome { changed, relay }
    }

    fn prune_seen(&mut self, now: SimTime) {
        let keep = self.cfg.topology_hold() + self.cfg.topology_hold();
        if self.seen_tc.len() > 4096 {
            self.seen_tc
                .retain(|_, (t, _)| now.saturating_sub(*t) <= keep);
        }
    }

    pub fn build_probe(&mut self, now: SimTime) -> ProbeMessage {
        self.probe_seq += 1;
        ProbeMessage {
            originator: self.id,
            sent_at: now,
            seq: self.probe_seq,
        }
    }

    pub fn on_probe(&mut self, msg: &ProbeMessage, now: SimTime) {
        let alpha = self.cfg.owd_alpha;
        let sample = (now - msg.sent_at).as_millis_f64();
        let rec = self
            .links
            .entry(msg.originator)
            .or_insert_with(|| LinkQualityRecord::new(msg.originator, now));
        rec.owd_ms = Some(match rec.owd_ms {
            None => sample,
            Some(prev) => (1.0 - alpha) * prev + alpha * sample,
        });
    }

    /// Asks for a route recomputation. Returns the time it should run, or
    /// `None` if one is already pending.
    pub fn request_recompute(&mut self, now: SimTime) -> Option<SimTime> {
        if self.recompute_pending {
            return None;
        }
        self.recompute_pending = true;
        let debounce = SimTime::from_secs_f64(self.cfg.recompute_debounce_s);
        Some(match self.last_recompute {
            Some(last) if last + debounce > now => last + debounce,
            _ => now,
        })
    }

    /// Link-state graph as this node currently sees it: its own symmetric
    /// links plus every unexpired TC entry. A remote link known only from
    /// one end is assumed to work in both directions.
    pub fn snapshot(&mut self, now: SimTime, node_count: usize) -> LinkGraph {
        self.refresh(now);
        let mut g = LinkGraph::new(node_count);
        let sample = |e: &TopologyEntry| LinkSample {
            d_f: e.d_f,
            d_r: e.d_r,
            owd_ms: e.owd_ms,
        };
        let in_range = |n: NodeId| n.index() < node_count;
        for (&(from, to), e) in self.topology.entries() {
            if from != self.id && in_range(from) && in_range(to) {
                g.set_link(from, to, sample(e));
            }
        }
        for (&(from, to), e) in self.topology.entries() {
            if to != self.id && in_range(from) && in_range(to) && g.link(to, from).is_none() {
                g.set_link(to, from, sample(e));
            }
        }
        for rec in self.links.values() {
            if in_range(rec.neighbor) {
                g.set_link(self.id, rec.neighbor, rec.link_sample());
            }
        }
        g
    }

    pub fn recompute_routes(
        &mut self,
        now: SimTime,
        metric: MetricKind,
        node_count: usize,
        ctr: &mut OpCounter,
    ) -> &RoutingTable {
        self.recompute_pending = false;
        self.last_recompute = Some(now);
        let graph = self.snapshot(now, node_count);
        self.routes = compute_paths(metric, &graph, self.id, ctr)
            .into_iter()
            .map(|(dest, p)| {
                (
                    dest,
                    Route {
                        next_hop: p.next_hop,
                        weight: p.weight,
                        hop_count: p.weight.hops,
                    },
                )
            })
            .collect();
        &self.routes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: f64) -> SimTime {
        SimTime::from_secs_f64(s)
    }

    fn n(i: u32) -> NodeId {
        NodeId(i)
    }

    fn hello(from: u32, seq: u32, reports: &[(u32, u32, bool, bool)]) -> HelloMessage {
        HelloMessage {
            originator: n(from),
            neighbor_reports: reports
                .iter()
                .map(|&(nb, received, symmetric, mpr)| NeighborReport {
                    neighbor: n(nb),
                    received,
                    symmetric,
                    mpr,
                })
                .collect(),
            seq,
        }
    }

    #[test]
    fn delivery_ratio_examples() {
        assert_eq!(delivery_ratio(10, 10.0), 1.0);
        assert_eq!(delivery_ratio(0, 10.0), 0.0);
        assert_eq!(delivery_ratio(11, 10.0), 1.0);
        // w = 40, t = 2
        let cfg = ProtocolConfig {
            window_s: 40.0,
            ..Default::default()
        };
        assert_eq!(delivery_ratio(14, cfg.expected_per_window()), 0.7);
    }

    #[test]
    fn reception_window_keeps_last_slots_by_sequence() {
        let mut w = ReceptionWindow::default();
        for k in 0..20u32 {
            w.mark(t(k as f64 * 2.0), k);
        }
        // Seqs 10..=19 are the last ten emissions.
        assert_eq!(w.count(t(38.0), t(2.0), 10, t(20.0)), 10);
        assert_eq!(w.oldest_seq(), Some(10));
        // Late arrival of seq 20 is tolerated for half an interval.
        assert_eq!(w.count(t(40.9), t(2.0), 10, t(20.0)), 10);
        // By 41 s it counts as lost and seq 10 falls out.
        assert_eq!(w.count(t(41.0), t(2.0), 10, t(20.0)), 9);
        assert_eq!(w.count(t(100.0), t(2.0), 10, t(20.0)), 0);
    }

    #[test]
    fn queueing_jitter_does_not_move_window_edge() {
        let mut w = ReceptionWindow::default();
        // Emissions every 2 s with up to 0.4 s of wander on arrival.
        for k in 0..30u32 {
            let wobble = if k % 3 == 0 { 0.39 } else { 0.0 };
            w.mark(t(k as f64 * 2.0 + wobble), k);
        }
        for probe in [58.0, 58.2, 58.39, 59.0, 59.5] {
            assert_eq!(w.count(t(probe), t(2.0), 10, t(20.0)), 10, "at {probe}");
        }
    }

    #[test]
    fn duplicate_and_stale_hellos_are_ignored() {
        let mut w = ReceptionWindow::default();
        w.mark(t(0.0), 5);
        w.mark(t(0.1), 5);
        w.mark(t(0.2), 4);
        assert_eq!(w.count(t(1.0), t(2.0), 10, t(20.0)), 1);
    }

    #[test]
    fn reverse_ratio_counts_window_receptions() {
        let mut node = OlsrNode::new(n(0), ProtocolConfig::default());
        // Neighbor sends every 2 s from t=0; we hear 7 of the 10 in (20, 40].
        for k in 0..=20 {
            let heard = k <= 10 || [11, 13, 14, 16, 17, 19, 20].contains(&k);
            if heard {
                node.on_hello(&hello(1, k, &[]), t(k as f64 * 2.0));
            }
        }
        assert!((node.link(n(1)).unwrap().d_r - 0.7).abs() < 1e-12);
    }

    #[test]
    fn forward_ratio_comes_from_neighbor_report() {
        let mut node = OlsrNode::new(n(0), ProtocolConfig::default());
        for k in 0..=10 {
            node.on_hello(
                &hello(1, k, &[(0, k.min(10), true, false)]),
                t(k as f64 * 2.0),
            );
        }
        let rec = node.link(n(1)).unwrap();
        assert_eq!(rec.d_f, 1.0);
        assert!(rec.is_symmetric());
    }

    #[test]
    fn missing_report_means_zero_forward_ratio() {
        let mut node = OlsrNode::new(n(0), ProtocolConfig::default());
        node.on_hello(&hello(1, 0, &[(5, 3, true, false)]), t(1.0));
        let rec = node.link(n(1)).unwrap();
        assert_eq!(rec.d_f, 0.0);
        assert!(!rec.is_symmetric());
    }

    #[test]
    fn silent_window_excludes_link() {
        let mut node = OlsrNode::new(n(0), ProtocolConfig::default());
        for k in 0..5 {
            node.on_hello(&hello(1, k, &[(0, k + 1, true, false)]), t(k as f64 * 2.0));
        }
        assert!(node.link(n(1)).unwrap().is_symmetric());
        node.refresh(t(8.0 + 20.0));
        assert!(node.link(n(1)).is_none_or(|r| r.d_r == 0.0));
        let g = node.snapshot(t(8.0 + 20.0), 2);
        assert!(g.link(n(0), n(1)).is_none());
    }

    #[test]
    fn bootstrap_window_is_pro_rated() {
        let mut node = OlsrNode::new(n(0), ProtocolConfig::default());
        node.on_hello(&hello(1, 0, &[]), t(3.0));
        node.on_hello(&hello(1, 1, &[]), t(5.0));
        // Known for 2 s: expect 2 HELLOs, have 2.
        assert_eq!(node.link(n(1)).unwrap().d_r, 1.0);
    }

    #[test]
    fn hello_without_neighbors_is_still_built() {
        let mut node = OlsrNode::new(n(3), ProtocolConfig::default());
        let h = node.build_hello(t(0.5));
        assert_eq!(h.originator, n(3));
        assert!(h.neighbor_reports.is_empty());
    }

    #[test]
    fn hello_reports_counts_and_mpr_flags() {
        let mut node = OlsrNode::new(n(0), ProtocolConfig::default());
        // 1 is the only way to 2.
        for k in 0..3 {
            let at = t(k as f64 * 2.0);
            node.on_hello(
                &hello(1, k, &[(0, k + 1, true, false), (2, 3, true, false)]),
                at,
            );
        }
        assert_eq!(node.mprs(), &BTreeSet::from([n(1)]));
        let h = node.build_hello(t(4.5));
        assert_eq!(h.neighbor_reports.len(), 1);
        let r = h.neighbor_reports[0];
        assert_eq!(
            (r.neighbor, r.received, r.symmetric, r.mpr),
            (n(1), 3, true, true)
        );
    }

    #[test]
    fn mpr_star_selects_hub() {
        let mut nb = BTreeMap::new();
        nb.insert(n(1), (1.0, BTreeSet::from([n(0), n(5), n(6), n(7)])));
        nb.insert(n(2), (1.0, BTreeSet::from([n(0)])));
        nb.insert(n(3), (1.0, BTreeSet::from([n(0), n(2)])));
        assert_eq!(select_mprs(n(0), &nb), BTreeSet::from([n(1)]));
    }

    #[test]
    fn mpr_without_two_hop_is_empty() {
        let mut nb = BTreeMap::new();
        nb.insert(n(1), (1.0, BTreeSet::from([n(0), n(2)])));
        nb.insert(n(2), (1.0, BTreeSet::from([n(0), n(1)])));
        assert!(select_mprs(n(0), &nb).is_empty());
    }

    #[test]
    fn mpr_ties_prefer_quality_then_id() {
        let mut nb = BTreeMap::new();
        nb.insert(n(1), (0.5, BTreeSet::from([n(9), n(10)])));
        nb.insert(n(2), (0.9, BTreeSet::from([n(9), n(10)])));
        nb.insert(n(3), (0.9, BTreeSet::from([n(9), n(10)])));
        assert_eq!(select_mprs(n(0), &nb), BTreeSet::from([n(2)]));
    }

    fn tc(orig: u32, seq: u32, ttl: u8) -> TcMessage {
        TcMessage {
            originator: n(orig),
            advertised: vec![TcAdvert {
                neighbor: n(1),
                d_f: 1.0,
                d_r: 1.0,
                owd_ms: None,
            }],
            seq,
            ttl,
        }
    }

    /// Node 1 in a chain 0 - 1 - 2 where both ends picked 1 as MPR.
    fn chain_middle() -> OlsrNode {
        let mut b = OlsrNode::new(n(1), ProtocolConfig::default());
        for k in 0..3 {
            let at = t(k as f64);
            b.on_hello(&hello(0, k, &[(1, k + 1, true, true)]), at);
            b.on_hello(&hello(2, k, &[(1, k + 1, true, true)]), at);
        }
        b
    }

    #[test]
    fn mpr_relays_tc_once() {
        let mut b = chain_middle();
        assert_eq!(b.mpr_selectors(t(3.0)), BTreeSet::from([n(0), n(2)]));
        let first = b.on_tc(n(0), &tc(0, 1, 255), t(3.0));
        assert!(first.changed);
        assert_eq!(first.relay.as_ref().unwrap().ttl, 254);
        let again = b.on_tc(n(2), &tc(0, 1, 254), t(3.1));
        assert!(!again.changed);
        assert!(again.relay.is_none());
    }

    #[test]
    fn non_selector_previous_hop_is_not_relayed() {
        let mut b = chain_middle();
        let out = b.on_tc(n(7), &tc(7, 1, 255), t(3.0));
        assert!(out.changed);
        assert!(out.relay.is_none());
        // A later copy from a selector may still be relayed, once.
        let out = b.on_tc(n(0), &tc(7, 1, 254), t(3.1));
        assert!(!out.changed);
        assert!(out.relay.is_some());
    }

    #[test]
    fn ttl_one_is_not_relayed() {
        let mut b = chain_middle();
        assert!(b.on_tc(n(0), &tc(0, 1, 1), t(3.0)).relay.is_none());
    }

    #[test]
    fn topology_keeps_newest_tc_only() {
        let mut base = TopologyBase::default();
        let hold = t(15.0);
        assert!(base.apply(&tc(4, 2, 9), t(0.0), hold));
        assert!(!base.apply(&tc(4, 1, 9), t(1.0), hold));
        assert!(!base.apply(&tc(4, 2, 9), t(1.0), hold));
        assert_eq!(base.len(), 1);
        assert!(base.expire(t(15.0)));
        assert!(base.is_empty());
    }

    #[test]
    fn tc_is_suppressed_without_selectors() {
        let mut a = OlsrNode::new(n(0), ProtocolConfig::default());
        a.on_hello(&hello(1, 0, &[(0, 1, true, false)]), t(0.0));
        assert!(a.build_tc(t(1.0)).is_none());
        a.on_hello(&hello(1, 1, &[(0, 2, true, true)]), t(2.0));
        let msg = a.build_tc(t(2.5)).unwrap();
        assert_eq!(msg.advertised.len(), 1);
        assert_eq!(msg.advertised[0].neighbor, n(1));
        assert!(a.build_tc(t(3.0)).unwrap().seq > msg.seq);
    }

    #[test]
    fn probe_delay_is_smoothed() {
        let mut node = OlsrNode::new(n(0), ProtocolConfig::default());
        let probe = |sent: f64| ProbeMessage {
            originator: n(1),
            sent_at: t(sent),
            seq: 0,
        };
        node.on_probe(&probe(1.0), t(1.005));
        assert!((node.link(n(1)).unwrap().owd_ms.unwrap() - 5.0).abs() < 1e-9);

        let mut node = OlsrNode::new(n(0), ProtocolConfig::default());
        node.on_probe(&probe(1.0), t(1.004));
        node.on_probe(&probe(2.0), t(2.008));
        assert!((node.link(n(1)).unwrap().owd_ms.unwrap() - 5.0).abs() < 1e-9);
    }

    #[test]
    fn recompute_is_debounced() {
        let mut node = OlsrNode::new(n(0), ProtocolConfig::default());
        assert_eq!(node.request_recompute(t(10.0)), Some(t(10.0)));
        assert_eq!(node.request_recompute(t(10.2)), None);
        node.recompute_routes(t(10.0), MetricKind::Etx, 4, &mut OpCounter::default());
        assert_eq!(node.request_recompute(t(10.3)), Some(t(11.0)));
        node.recompute_routes(t(11.0), MetricKind::Etx, 4, &mut OpCounter::default());
        assert_eq!(node.request_recompute(t(13.0)), Some(t(13.0)));
    }

    #[test]
    fn routes_use_learned_topology() {
        // 0 hears 1 directly; 1's TC advertises 2.
        let mut node = OlsrNode::new(n(0), ProtocolConfig::default());
        for k in 0..3 {
            node.on_hello(&hello(1, k, &[(0, k + 1, true, false)]), t(k as f64));
        }
        node.on_tc(
            n(1),
            &TcMessage {
                originator: n(1),
                advertised: vec![TcAdvert {
                    neighbor: n(2),
                    d_f: 0.8,
                    d_r: 0.5,
                    owd_ms: None,
                }],
                seq: 1,
                ttl: 255,
            },
            t(2.5),
        );
        let table = node.recompute_routes(t(2.5), MetricKind::Etx, 3, &mut OpCounter::default());
        let r = table[&n(2)];
        assert_eq!(r.next_hop, n(1));
        assert_eq!(r.hop_count, 2);
        assert!((r.weight.value - 3.5).abs() < 1e-12);
    }
}
