//! Routing-metric algebras and metric-generic path computation.
//!
//! Each [`MetricKind`] is an algebra of four parts: a per-link weight, a
//! path combine operator, a preference order and an identity path. Every
//! arithmetic operation performed while evaluating a metric is charged to a
//! caller-owned [`OpCounter`], which is how the per-metric computational
//! overhead is measured.
//!
//! | kind   | link weight    | combine | preferred path                      |
//! |--------|----------------|---------|-------------------------------------|
//! | HOP    | 1              | `+`     | smallest sum                        |
//! | ETX    | 1 / (d_f·d_r)  | `+`     | smallest sum, then fewer hops       |
//! | INVETX | d_f·d_r        | `+`     | fewer hops, then largest sum        |
//! | ML     | d_f·d_r        | `×`     | largest product, then fewer hops    |
//! | MD     | one-way delay  | `+`     | smallest sum, then fewer hops       |

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::MetricError;
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MetricKind {
    Hop,
    Etx,
    InvEtx,
    Ml,
    Md,
}

impl MetricKind {
    pub const ALL: [MetricKind; 5] = [
        MetricKind::Hop,
        MetricKind::Etx,
        MetricKind::InvEtx,
        MetricKind::Ml,
        MetricKind::Md,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Hop => "HOP",
            MetricKind::Etx => "ETX",
            MetricKind::InvEtx => "INVETX",
            MetricKind::Ml => "ML",
            MetricKind::Md => "MD",
        }
    }

    /// Whether nodes must send delay probes to evaluate this metric.
    pub fn uses_probes(self) -> bool {
        self == MetricKind::Md
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "HOP" => Ok(MetricKind::Hop),
            "ETX" => Ok(MetricKind::Etx),
            "INVETX" => Ok(MetricKind::InvEtx),
            "ML" => Ok(MetricKind::Ml),
            "MD" => Ok(MetricKind::Md),
            _ => Err(format!(
                "unknown metric {s:?} (expected one of HOP, ETX, INVETX, ML, MD)"
            )),
        }
    }
}

/// Relative cost of each arithmetic operation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    pub add: f64,
    pub mult: f64,
    pub div: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            add: 1.0,
            mult: 3.0,
            div: 8.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OpCounter {
    pub adds: u64,
    pub mults: u64,
    pub divs: u64,
    pub compares: u64,
    pub cost: CostModel,
}

impl OpCounter {
    pub fn new(cost: CostModel) -> Self {
        OpCounter {
            cost,
            ..Default::default()
        }
    }

    /// `add·adds + mult·mults + div·divs`. Comparisons are tallied but not
    /// priced.
    pub fn weighted_cost(&self) -> f64 {
        self.cost.add * self.adds as f64
            + self.cost.mult * self.mults as f64
            + self.cost.div * self.divs as f64
    }

    pub fn absorb(&mut self, other: &OpCounter) {
        self.adds += other.adds;
        self.mults += other.mults;
        self.divs += other.divs;
        self.compares += other.compares;
    }
}

/// The quality figures a metric can consume for one directed link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkSample {
    pub d_f: f64,
    pub d_r: f64,
    pub owd_ms: Option<f64>,
}

impl LinkSample {
    pub fn new(d_f: f64, d_r: f64) -> Self {
        LinkSample {
            d_f,
            d_r,
            owd_ms: None,
        }
    }

    pub fn with_delay(mut self, owd_ms: f64) -> Self {
        self.owd_ms = Some(owd_ms);
        self
    }

    /// Delivery probability of the link in both directions.
    pub fn q(&self) -> f64 {
        self.d_f * self.d_r
    }

    pub fn is_admissible(&self) -> bool {
        self.q() > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathWeight {
    pub value: f64,
    pub hops: u32,
}

impl PathWeight {
    /// Weight of the empty path.
    pub fn identity(kind: MetricKind) -> Self {
        let value = match kind {
            MetricKind::Ml => 1.0,
            _ => 0.0,
        };
        PathWeight { value, hops: 0 }
    }
}

pub fn link_weight(
    kind: MetricKind,
    link: &LinkSample,
    ctr: &mut OpCounter,
) -> Result<f64, MetricError> {
    if !link.is_admissible() {
        return Err(MetricError::ExcludedLink);
    }
    match kind {
        MetricKind::Hop => Ok(1.0),
        MetricKind::Etx => {
            ctr.mults += 1;
            ctr.divs += 1;
            Ok(1.0 / (link.d_f * link.d_r))
        }
        MetricKind::InvEtx | MetricKind::Ml => {
            ctr.mults += 1;
            Ok(link.d_f * link.d_r)
        }
        MetricKind::Md => link.owd_ms.ok_or(MetricError::MissingDelay),
    }
}

pub fn combine(kind: MetricKind, pw: PathWeight, lw: f64, ctr: &mut OpCounter) -> PathWeight {
    let value = match kind {
        MetricKind::Ml => {
            ctr.mults += 1;
            pw.value * lw
        }
        _ => {
            ctr.adds += 1;
            pw.value + lw
        }
    };
    PathWeight {
        value,
        hops: pw.hops + 1,
    }
}

/// True when `a` is strictly preferred over `b`.
pub fn better(kind: MetricKind, a: &PathWeight, b: &PathWeight, ctr: &mut OpCounter) -> bool {
    ctr.compares += 1;
    match kind {
        MetricKind::Hop | MetricKind::Etx | MetricKind::Md => {
            a.value < b.value || (a.value == b.value && a.hops < b.hops)
        }
        MetricKind::Ml => a.value > b.value || (a.value == b.value && a.hops < b.hops),
        MetricKind::InvEtx => a.hops < b.hops || (a.hops == b.hops && a.value > b.value),
    }
}

/// Folds `combine` over the link weights of an explicit path.
pub fn fold_path(
    kind: MetricKind,
    links: &[LinkSample],
    ctr: &mut OpCounter,
) -> Result<PathWeight, MetricError> {
    links.iter().try_fold(PathWeight::identity(kind), |pw, l| {
        let lw = link_weight(kind, l, ctr)?;
        Ok(combine(kind, pw, lw, ctr))
    })
}

/// Closed-form arithmetic profile of evaluating one `n_links` path, seeding
/// the accumulator with the first link instead of the identity.
pub fn route_cost_profile(kind: MetricKind, n_links: u64, cost: CostModel) -> OpCounter {
    let n = n_links.max(1);
    let mut c = OpCounter::new(cost);
    match kind {
        MetricKind::Etx => {
            c.mults = n;
            c.divs = n;
            c.adds = n - 1;
        }
        MetricKind::InvEtx => {
            c.mults = n;
            c.adds = n - 1;
        }
        MetricKind::Ml => {
            c.mults = n + (n - 1);
        }
        MetricKind::Hop | MetricKind::Md => {
            c.adds = n - 1;
        }
    }
    c
}

/// Directed link-state graph over nodes `0..n`. Edges whose delivery
/// probability is zero are never stored.
#[derive(Debug, Clone, Default)]
pub struct LinkGraph {
    adj: Vec<Vec<(NodeId, LinkSample)>>,
}

impl LinkGraph {
    pub fn new(n: usize) -> Self {
        LinkGraph {
            adj: vec![Vec::new(); n],
        }
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    /// Inserts or replaces the edge `from -> to`. Returns false when the
    /// edge is inadmissible and was left out.
    pub fn set_link(&mut self, from: NodeId, to: NodeId, link: LinkSample) -> bool {
        let out = &mut self.adj[from.index()];
        let pos = out.binary_search_by_key(&to, |(n, _)| *n);
        if !link.is_admissible() {
            if let Ok(i) = pos {
                out.remove(i);
            }
            return false;
        }
        match pos {
            Ok(i) => out[i].1 = link,
            Err(i) => out.insert(i, (to, link)),
        }
        true
    }

    pub fn link(&self, from: NodeId, to: NodeId) -> Option<&LinkSample> {
        let out = &self.adj[from.index()];
        out.binary_search_by_key(&to, |(n, _)| *n)
            .ok()
            .map(|i| &out[i].1)
    }

    /// Outgoing edges of `from`, ordered by neighbor id.
    pub fn links_from(&self, from: NodeId) -> &[(NodeId, LinkSample)] {
        &self.adj[from.index()]
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathEntry {
    pub next_hop: NodeId,
    pub weight: PathWeight,
}

/// Best path from `src` to every reachable node under `kind`.
///
/// Additive and multiplicative metrics use a label-setting search ordered by
/// [`better`]. INVETX first layers the graph by hop distance and then keeps,
/// per node, the predecessor that maximizes the running sum.
pub fn compute_paths(
    kind: MetricKind,
    graph: &LinkGraph,
    src: NodeId,
    ctr: &mut OpCounter,
) -> BTreeMap<NodeId, PathEntry> {
    match kind {
        MetricKind::InvEtx => hop_layered_paths(kind, graph, src, ctr),
        _ => label_setting_paths(kind, graph, src, ctr),
    }
}

fn label_setting_paths(
    kind: MetricKind,
    graph: &LinkGraph,
    src: NodeId,
    ctr: &mut OpCounter,
) -> BTreeMap<NodeId, PathEntry> {
    let n = graph.node_count();
    let mut label: Vec<Option<PathWeight>> = vec![None; n];
    let mut next_hop: Vec<Option<NodeId>> = vec![None; n];
    let mut settled = vec![false; n];
    label[src.index()] = Some(PathWeight::identity(kind));

    loop {
        // O(V^2) selection; graphs here have at most a few hundred nodes and
        // the scan keeps the settle order a pure function of node ids.
        let mut pick: Option<usize> = None;
        for v in 0..n {
            if settled[v] {
                continue;
            }
            let Some(lv) = label[v] else { continue };
            match pick {
                None => pick = Some(v),
                Some(p) => {
                    let lp = label[p].expect("picked node is labelled");
                    if better(kind, &lv, &lp, ctr) {
                        pick = Some(v);
                    }
                }
            }
        }
        let Some(u) = pick else { break };
        settled[u] = true;
        let lu = label[u].expect("picked node is labelled");
        for (v, link) in graph.links_from(NodeId::from_index(u)) {
            if settled[v.index()] {
                continue;
            }
            let Ok(lw) = link_weight(kind, link, ctr) else {
                continue;
            };
            let cand = combine(kind, lu, lw, ctr);
            let improves = match &label[v.index()] {
                None => true,
                Some(cur) => better(kind, &cand, cur, ctr),
            };
            if improves {
                label[v.index()] = Some(cand);
                next_hop[v.index()] = if u == src.index() {
                    Some(*v)
                } else {
                    next_hop[u]
                };
            }
        }
    }

    collect_routes(src, &label, &next_hop)
}

fn hop_layered_paths(
    kind: MetricKind,
    graph: &LinkGraph,
    src: NodeId,
    ctr: &mut OpCounter,
) -> BTreeMap<NodeId, PathEntry> {
    let n = graph.node_count();
    let mut label: Vec<Option<PathWeight>> = vec![None; n];
    let mut next_hop: Vec<Option<NodeId>> = vec![None; n];
    label[src.index()] = Some(PathWeight::identity(kind));
    let mut hops: Vec<Option<u32>> = vec![None; n];
    hops[src.index()] = Some(0);
    let mut layer = vec![src.index()];
    let mut depth = 0;
    while !layer.is_empty() {
        let mut next_layer = Vec::new();
        for &u in &layer {
            let lu = label[u].expect("layer nodes are labelled");
            for (v, link) in graph.links_from(NodeId::from_index(u)) {
                let vi = v.index();
                if hops[vi].is_some_and(|h| h != depth + 1) {
                    continue;
                }
                let Ok(lw) = link_weight(kind, link, ctr) else {
                    continue;
                };
                let cand = combine(kind, lu, lw, ctr);
                let improves = match &label[vi] {
                    None => true,
                    Some(cur) => better(kind, &cand, cur, ctr),
                };
                if hops[vi].is_none() {
                    hops[vi] = Some(depth + 1);
                    next_layer.push(vi);
                }
                if improves {
                    label[vi] = Some(cand);
                    next_hop[vi] = if u == src.index() {
                        Some(*v)
                    } else {
                        next_hop[u]
                    };
                }
            }
        }
        next_layer.sort_unstable();
        layer = next_layer;
        depth += 1;
    }

    collect_routes(src, &label, &next_hop)
}

fn collect_routes(
    src: NodeId,
    label: &[Option<PathWeight>],
    next_hop: &[Option<NodeId>],
) -> BTreeMap<NodeId, PathEntry> {
    label
        .iter()
        .zip(next_hop)
        .enumerate()
        .filter(|(v, _)| *v != src.index())
        .filter_map(|(v, (l, nh))| {
            Some((
                NodeId::from_index(v),
                PathEntry {
                    next_hop: (*nh)?,
                    weight: (*l)?,
                },
            ))
        })
        .collect()
}
