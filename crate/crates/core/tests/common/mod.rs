#![allow(dead_code, clippy::needless_range_loop)]

use meshsim::engine::{RngStream, StreamRole};
use meshsim::metrics::{LinkGraph, LinkSample, MetricKind};
use meshsim::NodeId;

pub fn rng(seed: u64) -> RngStream {
    RngStream::new(seed, StreamRole::Topology)
}

/// Dense adjacency used by the oracles; `None` means no link, a sample with
/// zero quality is kept so the oracle can prove it is ignored.
#[derive(Debug, Clone)]
pub struct DenseGraph {
    pub n: usize,
    pub links: Vec<Vec<Option<LinkSample>>>,
}

impl DenseGraph {
    pub fn to_link_graph(&self) -> LinkGraph {
        let mut g = LinkGraph::new(self.n);
        for (u, row) in self.links.iter().enumerate() {
            for (v, l) in row.iter().enumerate() {
                if let Some(l) = l {
                    g.set_link(NodeId::from_index(u), NodeId::from_index(v), *l);
                }
            }
        }
        g
    }

    pub fn scale_delays(&self, k: f64) -> DenseGraph {
        let mut out = self.clone();
        for row in &mut out.links {
            for l in row.iter_mut().flatten() {
                l.owd_ms = l.owd_ms.map(|d| d * k);
            }
        }
        out
    }
}

fn ratio(rng: &mut RngStream) -> f64 {
    // (0, 1], with an occasional perfect link so ties get exercised.
    if rng.bernoulli(0.15) {
        1.0
    } else {
        1.0 - rng.uniform()
    }
}

pub fn random_sample(rng: &mut RngStream) -> LinkSample {
    LinkSample::new(ratio(rng), ratio(rng)).with_delay(rng.uniform_range(0.2, 25.0))
}

/// Random directed graph on `n` nodes whose usable links connect it: a
/// random spanning tree (both directions) plus extra edges, some of them
/// dead.
pub fn random_connected_graph(rng: &mut RngStream, n: usize, extra_p: f64) -> DenseGraph {
    let mut links = vec![vec![None; n]; n];
    for v in 1..n {
        let u = rng.below(v);
        links[u][v] = Some(random_sample(rng));
        links[v][u] = Some(random_sample(rng));
    }
    for u in 0..n {
        for v in 0..n {
            if u != v && links[u][v].is_none() && rng.bernoulli(extra_p) {
                let mut s = random_sample(rng);
                if rng.bernoulli(0.1) {
                    s.d_f = 0.0;
                }
                links[u][v] = Some(s);
            }
        }
    }
    DenseGraph { n, links }
}

/// Weight of an explicit path, written straight from the metric
/// definitions. Accumulates from the source outwards.
pub fn direct_weight(kind: MetricKind, path: &[LinkSample]) -> f64 {
    match kind {
        MetricKind::Hop => path.iter().fold(0.0, |acc, _| acc + 1.0),
        MetricKind::Etx => path.iter().fold(0.0, |acc, l| acc + 1.0 / (l.d_f * l.d_r)),
        MetricKind::InvEtx => path.iter().fold(0.0, |acc, l| acc + l.d_f * l.d_r),
        MetricKind::Ml => path.iter().fold(1.0, |acc, l| acc * (l.d_f * l.d_r)),
        MetricKind::Md => path.iter().fold(0.0, |acc, l| acc + l.owd_ms.unwrap()),
    }
}

/// True when `(va, ha)` should be chosen over `(vb, hb)`.
pub fn oracle_prefers(kind: MetricKind, (va, ha): (f64, u32), (vb, hb): (f64, u32)) -> bool {
    match kind {
        MetricKind::Hop => ha < hb,
        MetricKind::Etx | MetricKind::Md => va < vb || (va == vb && ha < hb),
        MetricKind::Ml => va > vb || (va == vb && ha < hb),
        MetricKind::InvEtx => ha < hb || (ha == hb && va > vb),
    }
}

/// Best `(value, hops)` over every simple path from `src` to every node,
/// found by exhaustive depth-first enumeration.
pub fn exhaustive_best(kind: MetricKind, g: &DenseGraph, src: usize) -> Vec<Option<(f64, u32)>> {
    let mut best = vec![None; g.n];
    let mut on_path = vec![false; g.n];
    let mut links = Vec::new();
    on_path[src] = true;
    dfs(kind, g, src, &mut on_path, &mut links, &mut best);
    best[src] = None;
    best
}

fn dfs(
    kind: MetricKind,
    g: &DenseGraph,
    at: usize,
    on_path: &mut [bool],
    links: &mut Vec<LinkSample>,
    best: &mut [Option<(f64, u32)>],
) {
    for v in 0..g.n {
        let Some(l) = g.links[at][v] else { continue };
        if on_path[v] || l.d_f * l.d_r <= 0.0 {
            continue;
        }
        links.push(l);
        let cand = (direct_weight(kind, links), links.len() as u32);
        if best[v].is_none_or(|b| oracle_prefers(kind, cand, b)) {
            best[v] = Some(cand);
        }
        on_path[v] = true;
        dfs(kind, g, v, on_path, links, best);
        on_path[v] = false;
        links.pop();
    }
}
