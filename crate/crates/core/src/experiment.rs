//! Connectivity screening, single runs, sweeps and result files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use rayon::prelude::*;

use crate::config::{RunConfig, SweepConfig};
use crate::engine::RngStream;
use crate::error::{ExperimentError, SimError};
use crate::metrics::{route_cost_profile, CostModel, MetricKind};
use crate::network::Simulation;
use crate::radio::{link_success_probability, LossModel, Position};
use crate::traffic::{fmt_real, write_runs_csv, RunStats};
use crate::NodeId;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectivityReport {
    pub node_count: usize,
    pub components: usize,
    pub giant_size: usize,
    /// Flow pairs that spanned two components and were redrawn.
    pub resampled_pairs: usize,
}

impl ConnectivityReport {
    pub fn is_connected(&self) -> bool {
        self.components == 1
    }
}

/// Component label of every node in the radio-reachability graph. Labels
/// are assigned in order of each component's lowest node id.
pub fn components(positions: &[Position], loss: &LossModel) -> Vec<usize> {
    let n = positions.len();
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    for start in 0..n {
        if label[start] != usize::MAX {
            continue;
        }
        label[start] = next;
        let mut stack = vec![start];
        while let Some(u) = stack.pop() {
            for v in 0..n {
                if label[v] == usize::MAX
                    && link_success_probability(&positions[u], &positions[v], loss) > 0.0
                {
                    label[v] = next;
                    stack.push(v);
                }
            }
        }
        next += 1;
    }
    label
}

/// Reports connectivity and redraws, inside the largest component, any flow
/// pair whose endpoints cannot reach each other. The placement itself is
/// never changed.
pub fn screen_topology(
    positions: &[Position],
    loss: &LossModel,
    pairs: &[(NodeId, NodeId)],
    rng: &mut RngStream,
) -> Result<(ConnectivityReport, Vec<(NodeId, NodeId)>), SimError> {
    let label = components(positions, loss);
    let count = label.iter().copied().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; count];
    for &l in &label {
        sizes[l] += 1;
    }
    // Largest component; ties go to the one containing the lowest id.
    let giant = (0..count).fold(0, |best, c| if sizes[c] > sizes[best] { c } else { best });
    let giant_size = sizes.get(giant).copied().unwrap_or(0);
    if giant_size < 2 {
        return Err(SimError::DegenerateTopology { giant: giant_size });
    }
    let members: Vec<NodeId> = (0..positions.len())
        .filter(|&i| label[i] == giant)
        .map(NodeId::from_index)
        .collect();

    let mut resampled = 0;
    let fixed = pairs
        .iter()
        .map(|&(s, d)| {
            if label[s.index()] == label[d.index()] {
                return (s, d);
            }
            resampled += 1;
            let src = members[rng.below(members.len())];
            loop {
                let dst = members[rng.below(members.len())];
                if dst != src {
                    return (src, dst);
                }
            }
        })
        .collect();

    Ok((
        ConnectivityReport {
            node_count: positions.len(),
            components: count,
            giant_size,
            resampled_pairs: resampled,
        },
        fixed,
    ))
}

pub fn run_single(cfg: &RunConfig) -> Result<RunStats, SimError> {
    Simulation::new(cfg)?.run()
}

#[derive(Debug, Clone)]
pub struct SweepResults {
    pub config: SweepConfig,
    /// In `(metric, rate, replication)` order.
    pub runs: Vec<RunStats>,
}

/// Executes every run of the sweep. Runs are independent and execute in
/// parallel; results come back in configuration order.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResults, ExperimentError> {
    cfg.validate()?;
    let runs = cfg
        .runs()
        .par_iter()
        .map(|rc| {
            run_single(rc).map_err(|source| ExperimentError::Run {
                metric: rc.metric,
                rate_pps: rc.rate_pps,
                seed: rc.seed,
                source,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SweepResults {
        config: cfg.clone(),
        runs,
    })
}

/// Quantities aggregated per `(metric, rate)` group.
pub const MEASURES: [&str; 9] = [
    "data_sent",
    "data_delivered",
    "throughput_bps",
    "pdr",
    "e2ed_ms_mean",
    "e2ed_ms_p95",
    "nrl",
    "control_tx",
    "op_cost_total",
];

fn measure(r: &RunStats, name: &str) -> f64 {
    match name {
        "data_sent" => r.data_sent as f64,
        "data_delivered" => r.data_delivered as f64,
        "throughput_bps" => r.throughput_bps,
        "pdr" => r.pdr,
        "e2ed_ms_mean" => r.e2ed_ms_mean,
        "e2ed_ms_p95" => r.e2ed_ms_p95,
        "nrl" => r.nrl_or_inf(),
        "control_tx" => r.control_tx as f64,
        "op_cost_total" => r.op_cost_total,
        _ => unreachable!("unknown measure {name}"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; NaN with fewer than two values.
    pub std: f64,
}

pub fn mean_std(xs: &[f64]) -> MeanStd {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() < 2 {
        f64::NAN
    } else {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    MeanStd { mean, std }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    pub metric: MetricKind,
    pub rate_pps: u32,
    pub runs: usize,
    /// One entry per name in [`MEASURES`].
    pub values: Vec<MeanStd>,
}

impl GroupSummary {
    pub fn get(&self, measure: &str) -> MeanStd {
        let i = MEASURES
            .iter()
            .position(|m| *m == measure)
            .unwrap_or_else(|| panic!("unknown measure {measure}"));
        self.values[i]
    }
}

impl SweepResults {
    /// Mean and standard deviation per `(metric, rate)`, in sweep order.
    pub fn summarize(&self) -> Vec<GroupSummary> {
        let mut groups: BTreeMap<(usize, usize), Vec<&RunStats>> = BTreeMap::new();
        for r in &self.runs {
            let mi = self
                .config
                .metrics
                .iter()
                .position(|m| *m == r.metric)
                .unwrap_or(usize::MAX);
            let ri = self
                .config
                .rates
                .iter()
                .position(|x| *x == r.rate_pps)
                .unwrap_or(usize::MAX);
            groups.entry((mi, ri)).or_default().push(r);
        }
        groups
            .into_values()
            .map(|rs| GroupSummary {
                metric: rs[0].metric,
                rate_pps: rs[0].rate_pps,
                runs: rs.len(),
                values: MEASURES
                    .iter()
                    .map(|m| mean_std(&rs.iter().map(|r| measure(r, m)).collect::<Vec<_>>()))
                    .collect(),
            })
            .collect()
    }

    /// Writes `runs.csv`, `summary.csv`, `summary_long.csv` and the
    /// whitespace-separated `fig_*.dat` tables into `dir`.
    pub fn write_outputs(&self, dir: &Path) -> Result<(), ExperimentError> {
        fs::create_dir_all(dir)?;
        write_runs_csv(fs::File::create(dir.join("runs.csv"))?, &self.runs)?;
        let summary = self.summarize();
        write_summary_csv(fs::File::create(dir.join("summary.csv"))?, &summary)?;
        write_summary_long(fs::File::create(dir.join("summary_long.csv"))?, &summary)?;
        for (file, m) in [
            ("fig_throughput.dat", "throughput_bps"),
            ("fig_e2ed.dat", "e2ed_ms_mean"),
            ("fig_nrl.dat", "nrl"),
            ("fig_opcost.dat", "op_cost_total"),
        ] {
            fs::write(dir.join(file), figure_table(&self.config, &summary, m))?;
        }
        fs::write(
            dir.join("fig_opcost_profile.dat"),
            cost_profile_table(self.config.base.cost, 50),
        )?;
        Ok(())
    }
}

fn write_summary_csv<W: io::Write>(out: W, groups: &[GroupSummary]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["metric".to_string(), "rate_pps".into(), "runs".into()];
    for m in MEASURES {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_std"));
    }
    w.write_record(&header)?;
    for g in groups {
        let mut row = vec![
            g.metric.to_string(),
            g.rate_pps.to_string(),
            g.runs.to_string(),
        ];
        for v in &g.values {
            row.push(fmt_real(v.mean));
            row.push(fmt_real(v.std));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_summary_long<W: io::Write>(out: W, groups: &[GroupSummary]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["metric", "rate_pps", "measure", "mean", "std", "runs"])?;
    for g in groups {
        for (m, v) in MEASURES.iter().zip(&g.values) {
            w.write_record([
                g.metric.to_string(),
                g.rate_pps.to_string(),
                m.to_string(),
                fmt_real(v.mean),
                fmt_real(v.std),
                g.runs.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One row per rate, one column per metric, holding the group mean.
fn figure_table(cfg: &SweepConfig, groups: &[GroupSummary], measure: &str) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "# {measure} (mean over {} replications)\n# rate_pps",
        cfg.replications
    );
    for m in &cfg.metrics {
        let _ = write!(s, " {m}");
    }
    s.push('\n');
    for &rate in &cfg.rates {
        let _ = write!(s, "{rate}");
        for &metric in &cfg.metrics {
            let v = groups
                .iter()
                .find(|g| g.metric == metric && g.rate_pps == rate)
                .map_or(f64::NAN, |g| g.get(measure).mean);
            let _ = write!(s, " {}", fmt_real(v));
        }
        s.push('\n');
    }
    s
}

/// Per-path arithmetic cost against path length for the three
/// delivery-ratio metrics.
pub fn cost_profile_table(cost: CostModel, max_links: u64) -> String {
    let kinds = [MetricKind::InvEtx, MetricKind::Ml, MetricKind::Etx];
    let mut s = String::from("# weighted arithmetic cost per path\n# n_links");
    for k in kinds {
        let _ = write!(s, " {k}");
    }
    s.push('\n');
    for n in 1..=max_links {
        let _ = write!(s, "{n}");
        for k in kinds {
            let _ = write!(
                s,
                " {}",
                fmt_real(route_cost_profile(k, n, cost).weighted_cost())
            );
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::StreamRole;

    fn pos(x: f64, y: f64) -> Position {
        Position { x, y }
    }

    #[test]
    fn connected_graph_keeps_pairs() {
        let ps = vec![pos(0.0, 0.0), pos(100.0, 0.0), pos(200.0, 0.0)];
        let pairs = vec![(NodeId(0), NodeId(2)), (NodeId(2), NodeId(1))];
        let (rep, out) = screen_topology(
            &ps,
            &LossModel::default(),
            &pairs,
            &mut RngStream::new(0, StreamRole::Traffic),
        )
        .unwrap();
        assert!(rep.is_connected());
        assert_eq!(rep.resampled_pairs, 0);
        assert_eq!(out, pairs);
    }

    #[test]
    fn spanning_pair_is_redrawn_inside_giant() {
        // Island {0,1,2} and island {3,4}.
        let ps = vec![
            pos(0.0, 0.0),
            pos(100.0, 0.0),
            pos(200.0, 0.0),
            pos(900.0, 900.0),
            pos(950.0, 900.0),
        ];
        let pairs = vec![(NodeId(0), NodeId(4)), (NodeId(3), NodeId(4))];
        let (rep, out) = screen_topology(
            &ps,
            &LossModel::default(),
            &pairs,
            &mut RngStream::new(0, StreamRole::Traffic),
        )
        .unwrap();
        assert_eq!(rep.components, 2);
        assert_eq!(rep.giant_size, 3);
        assert_eq!(rep.resampled_pairs, 1);
        let (s, d) = out[0];
        assert!(s != d && s.index() < 3 && d.index() < 3);
        // Same-island pair outside the giant component stays routable.
        assert_eq!(out[1], pairs[1]);
    }

    #[test]
    fn isolated_nodes_are_degenerate() {
        let ps = vec![pos(0.0, 0.0), pos(500.0, 0.0), pos(1000.0, 0.0)];
        let err = screen_topology(
            &ps,
            &LossModel::default(),
            &[],
            &mut RngStream::new(0, StreamRole::Traffic),
        )
        .unwrap_err();
        assert!(matches!(err, SimError::DegenerateTopology { giant: 1 }));
    }

    #[test]
    fn mean_and_sample_std() {
        let v = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(v.mean, 5.0);
        assert!((v.std - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
        assert!(mean_std(&[1.0]).std.is_nan());
    }

    #[test]
    fn profile_table_has_one_row_per_length() {
        let t = cost_profile_table(CostModel::default(), 4);
        let rows: Vec<&str> = t.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[3], "4 15.000000 21.000000 47.000000");
    }
}
