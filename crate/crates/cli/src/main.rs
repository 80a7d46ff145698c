use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use meshsim::traffic::write_runs_csv;
use meshsim::{
    load_config, run_single, run_sweep, ExperimentError, LoadedConfig, MetricKind, RunConfig,
    RunStats, SweepConfig,
};

/// OLSR link-metric simulator.
#[derive(Parser)]
#[command(name = "meshsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one (metric, rate, seed) point.
    Run(Opts),
    /// Sweep metrics x rates x replications and write CSV and figure tables.
    Sweep(Opts),
}

#[derive(Args)]
struct Opts {
    /// TOML config file. Flags override values it sets.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Routing metric (HOP, ETX, INVETX, ML, MD). Restricts a sweep to it.
    #[arg(long)]
    metric: Option<MetricKind>,
    /// Packets per second per flow. Restricts a sweep to it.
    #[arg(long)]
    rate: Option<u32>,
    /// Seed of the run, or of replication 0 in a sweep.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replications: Option<u32>,
    /// Simulated seconds, warm-up included.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long, default_value = "results")]
    out_dir: PathBuf,
    /// 300 s runs, 3 replications, rates 1, 4, 8, 12, 16.
    #[arg(long)]
    desk_scale: bool,
}

impl Opts {
    fn sweep_config(&self) -> Result<SweepConfig, ExperimentError> {
        let mut s = match &self.config {
            Some(p) => load_config(p)?.into_sweep(),
            None => SweepConfig::new(RunConfig::default()),
        };
        if self.desk_scale {
            s.apply_desk_scale();
        }
        if let Some(m) = self.metric {
            s.metrics = vec![m];
        }
        if let Some(r) = self.rate {
            s.rates = vec![r];
        }
        if let Some(seed) = self.seed {
            s.base_seed = seed;
            s.base.seed = seed;
        }
        if let Some(n) = self.replications {
            s.replications = n;
        }
        if let Some(d) = self.duration {
            s.base.duration_s = d;
        }
        s.validate()?;
        Ok(s)
    }

    fn run_config(&self) -> Result<RunConfig, ExperimentError> {
        let mut c = match &self.config {
            Some(p) => load_config(p)?,
            None => LoadedConfig::Run(RunConfig::default()),
        }
        .into_run();
        if self.desk_scale {
            c.duration_s = 300.0;
        }
        if let Some(m) = self.metric {
            c.metric = m;
        }
        if let Some(r) = self.rate {
            c.rate_pps = r;
        }
        if let Some(seed) = self.seed {
            c.seed = seed;
        }
        if let Some(d) = self.duration {
            c.duration_s = d;
        }
        c.validate()?;
        Ok(c)
    }
}

fn print_run(r: &RunStats) {
    println!(
        "{} rate={} seed={}: sent={} delivered={} pdr={:.4} throughput={:.1} b/s \
         e2ed={:.3} ms (p95 {:.3}) nrl={:.3} control_tx={} op_cost={:.0}",
        r.metric,
        r.rate_pps,
        r.seed,
        r.data_sent,
        r.data_delivered,
        r.pdr,
        r.throughput_bps,
        r.e2ed_ms_mean,
        r.e2ed_ms_p95,
        r.nrl_or_inf(),
        r.control_tx,
        r.op_cost_total,
    );
}

fn cmd_run(opts: &Opts) -> Result<(), ExperimentError> {
    let cfg = opts.run_config()?;
    let stats = run_single(&cfg).map_err(|source| ExperimentError::Run {
        metric: cfg.metric,
        rate_pps: cfg.rate_pps,
        seed: cfg.seed,
        source,
    })?;
    print_run(&stats);
    std::fs::create_dir_all(&opts.out_dir)?;
    write_runs_csv(
        std::fs::File::create(opts.out_dir.join("runs.csv"))?,
        &[stats],
    )?;
    Ok(())
}

fn cmd_sweep(opts: &Opts) -> Result<(), ExperimentError> {
    let cfg = opts.sweep_config()?;
    eprintln!(
        "sweep: {} runs ({} metrics x {} rates x {} replications, {} s each)",
        cfg.run_count(),
        cfg.metrics.len(),
        cfg.rates.len(),
        cfg.replications,
        cfg.base.duration_s
    );
    let results = run_sweep(&cfg)?;
    results.write_outputs(&opts.out_dir)?;
    for g in results.summarize() {
        println!(
            "{:<6} rate={:<3} throughput={:>10.1} e2ed={:>8.3} ms nrl={:>8.3} op_cost={:>12.0}",
            g.metric.to_string(),
            g.rate_pps,
            g.get("throughput_bps").mean,
            g.get("e2ed_ms_mean").mean,
            g.get("nrl").mean,
            g.get("op_cost_total").mean,
        );
    }
    eprintln!("wrote {}", opts.out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Run(o) => cmd_run(o),
        Command::Sweep(o) => cmd_sweep(o),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
