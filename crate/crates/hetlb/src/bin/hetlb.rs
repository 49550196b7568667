//! Command-line front end. Each verb runs one experiment and writes CSV into
//! the `--out` directory.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration error, 3 invariant
//! violation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hetlb::analysis::{
    compare_policies, lyapunov_grid, ssc_sweep, ComparisonSpec, ExperimentSpec, SdeSettings, SscSpec,
};
use hetlb::config::load_config;
use hetlb::coupling::coupled_run;
use hetlb::ctmc::{rate_conservation_check, simulate_stationary, simulate_transient, uniform_grid, RunSpec};
use hetlb::diffusion::{integrate_limit_sde, DiffusionParams, LimitState};
use hetlb::io::{
    comparison_header, couple_table, lyapunov_header, sde_table, stationary_table, trajectory_table, write_file,
};
use hetlb::lyapunov::LyapunovContext;
use hetlb::{Error, OccupancyState, PolicyKind, Result, SystemConfig};

#[derive(Parser, Debug)]
#[command(name = "hetlb", version, about = "Heterogeneous-server load balancing experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Args, Debug)]
struct Global {
    /// Flat key = value configuration file; defaults to two pools (γ = 0.2, 0.8; μ = 2.5, 0.625; β = 2) at n = 100.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed from the configuration file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, default_value_t = 1)]
    reps: usize,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[arg(long, global = true, default_value = "sa-jsq")]
    policy: PolicyKind,
}

#[derive(Subcommand, Debug)]
enum Verb {
    /// Transient path from an empty system.
    SimulateTransient {
        #[arg(long, default_value_t = 10.0)]
        horizon: f64,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
    },
    /// Batch-means stationary estimates and the rate-conservation check.
    SimulateStationary {
        #[arg(long, default_value_t = 2000.0)]
        duration: f64,
        #[arg(long)]
        warmup: Option<f64>,
        #[arg(long, default_value_t = 20)]
        batches: usize,
        /// Per-queue buffer; arrivals that would exceed it are blocked.
        #[arg(long)]
        cap: Option<usize>,
    },
    /// Reflected diffusion path.
    Sde {
        #[arg(long, default_value_t = 5e-3)]
        h: f64,
        #[arg(long, default_value_t = 50.0)]
        horizon: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        y_m1: f64,
        #[arg(long, default_value_t = 0.0)]
        y12: f64,
        #[arg(long, default_value_t = 1)]
        record_every: usize,
    },
    /// Coupled original/modified run with pathwise checks.
    Couple {
        #[arg(long, default_value_t = 100.0)]
        horizon: f64,
    },
    /// Lyapunov function, derivatives and PDE residual on a grid.
    LyapunovCheck {
        #[arg(long, default_value_t = 101)]
        grid: usize,
        #[arg(long, default_value_t = 1.0)]
        kappa: f64,
    },
    /// Stationary `Y_{+1}`, `Y_{+2}` across policies with common random numbers.
    ComparePolicies {
        #[arg(long, value_delimiter = ',', default_value = "sa-jsq,jsq,pod:2")]
        policies: Vec<PolicyKind>,
        #[arg(long, default_value_t = 2000.0)]
        duration: f64,
        #[arg(long, default_value_t = 20)]
        batches: usize,
        /// Adds diffusion reference rows with this step size.
        #[arg(long)]
        sde_h: Option<f64>,
    },
    /// State-space-collapse statistic across system sizes.
    SscSweep {
        #[arg(long, value_delimiter = ',', default_value = "100,300,700")]
        ns: Vec<usize>,
        #[arg(long, default_value_t = 10.0)]
        horizon: f64,
        /// Start of the supremum window.
        #[arg(long, default_value_t = 1.0)]
        from: f64,
    },
}

impl Verb {
    fn name(&self) -> &'static str {
        match self {
            Verb::SimulateTransient { .. } => "simulate-transient",
            Verb::SimulateStationary { .. } => "simulate-stationary",
            Verb::Sde { .. } => "sde",
            Verb::Couple { .. } => "couple",
            Verb::LyapunovCheck { .. } => "lyapunov-check",
            Verb::ComparePolicies { .. } => "compare-policies",
            Verb::SscSweep { .. } => "ssc-sweep",
        }
    }
}

fn load(g: &Global) -> Result<(SystemConfig, u64)> {
    match &g.config {
        Some(p) => {
            let file = load_config(p)?;
            Ok((file.system()?, g.seed.or(file.seed).unwrap_or(0)))
        }
        None => Ok((SystemConfig::fig1(100)?, g.seed.unwrap_or(0))),
    }
}

fn out_path(g: &Global, name: &str) -> PathBuf {
    g.out.join(name)
}

fn report(path: &Path) {
    println!("wrote {}", path.display());
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    if g.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(g.threads)
            .build_global()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    }
    let (cfg, seed) = load(g)?;
    let mut spec = ExperimentSpec {
        verb: cli.verb.name().to_string(),
        config: g.config.clone(),
        policy: g.policy,
        n_sweep: Vec::new(),
        replications: g.reps,
        seed,
        out: Some(g.out.clone()),
    };
    if let Verb::SscSweep { ns, .. } = &cli.verb {
        spec.n_sweep = ns.clone();
    }
    spec.validate(&cfg)?;

    match cli.verb {
        Verb::SimulateTransient { horizon, dt } => {
            let grid = uniform_grid(horizon, dt);
            for r in 0..g.reps {
                let tr =
                    simulate_transient(&cfg, g.policy, &OccupancyState::empty(&cfg), horizon, &grid, seed + r as u64)?;
                let (h, rows) = trajectory_table(&tr);
                let path = if g.reps == 1 {
                    out_path(g, "trajectory.csv")
                } else {
                    out_path(g, &format!("trajectory_{r}.csv"))
                };
                write_file(&path, &h, &rows)?;
                report(&path);
                println!("rep {r}: sup |Y_fast,1| = {:.6}, arrivals = {}", tr.sup_idle_fast, tr.arrivals);
            }
        }
        Verb::SimulateStationary { duration, warmup, batches, cap } => {
            let mut run = RunSpec::new(duration, seed).batches(batches).cap(cap);
            if let Some(w) = warmup {
                run = run.warmup(w);
            }
            for r in 0..g.reps {
                let est = simulate_stationary(&cfg, g.policy, &run.clone().replication(r as u64))?;
                let (h, rows) = stationary_table(&est);
                let path = if g.reps == 1 {
                    out_path(g, "stationary.csv")
                } else {
                    out_path(g, &format!("stationary_{r}.csv"))
                };
                write_file(&path, &h, &rows)?;
                report(&path);
                let rc = rate_conservation_check(&est, &cfg);
                println!(
                    "rep {r}: busy rate {:.6} ± {:.6} vs accepted throughput {:.6} (within 3 SE: {})",
                    rc.busy_rate.mean, rc.busy_rate.se, rc.throughput, rc.within1
                );
            }
        }
        Verb::Sde { h, horizon, y_m1, y12, record_every } => {
            let m = cfg.m();
            let p = DiffusionParams::new(cfg.beta, cfg.speeds[0], cfg.speeds[m - 1], h, horizon)?
                .record_every(record_every);
            let path = integrate_limit_sde(&p, &LimitState::pair(y_m1, y12, &p), seed)?;
            let (hd, rows) = sde_table(&path);
            let file = out_path(g, "sde.csv");
            write_file(&file, &hd, &rows)?;
            report(&file);
        }
        Verb::Couple { horizon } => {
            for r in 0..g.reps {
                let tr = coupled_run(&cfg, g.policy, horizon, seed + r as u64)?;
                let (h, rows) = couple_table(&tr);
                let path =
                    if g.reps == 1 { out_path(g, "couple.csv") } else { out_path(g, &format!("couple_{r}.csv")) };
                write_file(&path, &h, &rows)?;
                report(&path);
                println!("rep {r}: {} events, 0 violations", tr.events.len());
            }
        }
        Verb::LyapunovCheck { grid, kappa } => {
            let m = cfg.m();
            let ctx = LyapunovContext::new(cfg.n, cfg.beta, cfg.speeds[0], cfg.speeds[m - 1], kappa)?;
            let rows = lyapunov_grid(&ctx, grid);
            let path = out_path(g, "lyapunov.csv");
            write_file(&path, &lyapunov_header(), &rows)?;
            report(&path);
            let worst = rows.iter().map(|r| r.residual.abs()).fold(0.0, f64::max);
            println!("max |residual| = {worst:e}");
            if worst > 1e-8 {
                return Err(Error::InvariantViolation(format!("PDE residual {worst:e} exceeds 1e-8")));
            }
        }
        Verb::ComparePolicies { policies, duration, batches, sde_h } => {
            let cmp = ComparisonSpec {
                cfg: cfg.clone(),
                policies,
                run: RunSpec::new(duration, seed).batches(batches),
                replications: g.reps,
                include_modified: true,
                sde: sde_h.map(|h| SdeSettings { h, burn: 50.0, duration: duration.max(1000.0) }),
            };
            let rep = compare_policies(&cmp)?;
            let path = out_path(g, "comparison.csv");
            write_file(&path, &comparison_header(), &rep.to_rows())?;
            report(&path);
            for r in &rep.rows {
                println!(
                    "{:>10}  Y+1 {:>9.5} ± {:.5}   Y+2 {:>9.5} ± {:.5}",
                    r.label, r.y_plus1.mean, r.y_plus1.se, r.y_plus2.mean, r.y_plus2.se
                );
            }
        }
        Verb::SscSweep { ns, horizon, from } => {
            let rows = ssc_sweep(&SscSpec {
                base: cfg.clone(),
                ns,
                kind: g.policy,
                window: (from, horizon),
                replications: g.reps.max(2),
                seed,
            })?;
            let path = out_path(g, "ssc.csv");
            write_file(&path, &hetlb::analysis::ssc_header(), &rows)?;
            report(&path);
            for r in &rows {
                println!("n = {:>5}  mean sup = {:.5} ± {:.5}", r.n, r.mean_sup, r.se);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
