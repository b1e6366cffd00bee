//! Command-line front end: configuration, experiment commands, CSV and SVG output.

pub mod config;
pub mod svg;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use netpend_core::campaign::{feasible_region, find_optimum, run_sweep, SweepRecord};
use netpend_core::coloop::{run_episode, EpisodeResult, TrajectoryRow};
use netpend_core::fblchannel::per;
use netpend_core::Error as CoreError;

pub use config::{parse_config, ConfigError, RunConfig};
pub use svg::{emit_svg, Series};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Episode horizon (s) and episodes per point of a full-scale sweep.
pub const FULL_SCALE: (f64, usize) = (6000.0, 50);

#[derive(Debug, Parser)]
#[command(name = "netpend", version, about = "Networked inverted-pendulum co-simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Configuration document (`key = value` lines).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output file; standard output when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Episodes per grid point.
    #[arg(long, global = true, value_name = "N")]
    pub episodes: Option<usize>,
    /// Worker threads for sweeps; defaults to the available parallelism.
    #[arg(long, global = true, value_name = "N", env = "NETPEND_WORKERS")]
    pub workers: Option<usize>,
    /// Disable frame losses on both links.
    #[arg(long, global = true)]
    pub ideal_channel: bool,
    /// 6000 s episodes, 50 per grid point.
    #[arg(long, global = true)]
    pub paper_scale: bool,
    /// Also write an SVG plot next to `--out`.
    #[arg(long, global = true)]
    pub svg: bool,
    /// Per-tick trajectory CSV for `episode`.
    #[arg(long, global = true, value_name = "PATH")]
    pub trajectory: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Packet error rate over the grid.
    PerCurve,
    /// One closed-loop episode at `t_ctr`.
    Episode,
    /// Monte-Carlo sweep of the control cost over the grid.
    Sweep,
    /// Feasible (AoI, cost) points per reliability level.
    Feasible,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::PerCurve => "per-curve",
            Command::Episode => "episode",
            Command::Sweep => "sweep",
            Command::Feasible => "feasible",
        }
    }
}

/// Load the config document and apply command-line overrides.
pub fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            parse_config(&text)?
        }
        None => RunConfig::default(),
    };
    if cli.paper_scale {
        (cfg.horizon, cfg.episodes) = FULL_SCALE;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(n) = cli.episodes {
        cfg.episodes = n;
    }
    if cli.ideal_channel {
        cfg.per_override = Some(0.0);
    }
    cfg.workers = cli.workers;
    cfg.svg = cli.svg;
    cfg.validate()?;
    Ok(cfg)
}

pub fn workers(cfg: &RunConfig) -> usize {
    cfg.workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1)
}

/// Scientific notation with 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Comment block echoing the artifact version and the resolved configuration.
pub fn header(cfg: &RunConfig, command: Command) -> String {
    let mut h = format!("# netpend {VERSION} {}\n", command.name());
    for (k, v) in cfg.entries() {
        let _ = writeln!(h, "# {k} = {v}");
    }
    h
}

pub fn per_curve_csv(cfg: &RunConfig) -> String {
    let channel = cfg.channel();
    let mut out = header(cfg, Command::PerCurve);
    out.push_str("t_ctr,blocklength,epsilon,valid\n");
    for &t in &cfg.grid {
        let (eps, valid) = match per(&channel, t) {
            Ok(e) => (e, 1),
            Err(_) => (f64::NAN, 0),
        };
        let _ = writeln!(out, "{},{},{},{valid}", num(t), num(channel.blocklength(t)), num(eps));
    }
    out
}

pub fn run_configured_episode(cfg: &RunConfig, record: bool) -> Result<EpisodeResult> {
    let mut lc = cfg.loop_config();
    lc.record = record;
    Ok(run_episode(&lc)?)
}

pub fn episode_csv(cfg: &RunConfig, r: &EpisodeResult) -> String {
    let c = &r.event_counts;
    let mut out = header(cfg, Command::Episode);
    out.push_str(
        "t_ctr,cost,per_theoretical,per_empirical_ul,per_empirical_dl,aoi_mean,aoi_max,failed,\
         time_to_failure,diverged,max_abs_theta,sensor_noise,ul_loss,dl_loss,pendulum_fall\n",
    );
    let _ = writeln!(
        out,
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        num(cfg.t_ctr),
        num(r.cost),
        num(r.per_theoretical),
        num(r.per_empirical_ul),
        num(r.per_empirical_dl),
        num(r.aoi_mean),
        num(r.aoi_max),
        u8::from(r.failed),
        r.time_to_failure.map(num).unwrap_or_default(),
        u8::from(r.diverged),
        num(r.max_abs_theta),
        c.sensor_noise,
        c.ul_loss,
        c.dl_loss,
        c.pendulum_fall,
    );
    out
}

pub fn trajectory_csv(cfg: &RunConfig, rows: &[TrajectoryRow]) -> String {
    let mut out = header(cfg, Command::Episode);
    out.push_str("t,q,theta,q_dot,theta_dot,r,u,aoi,ul_lost,dl_lost\n");
    for row in rows {
        let s = &row.state;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            num(row.t),
            num(s.q),
            num(s.theta),
            num(s.q_dot),
            num(s.theta_dot),
            num(row.r),
            num(row.u),
            num(row.aoi),
            u8::from(row.ul_lost),
            u8::from(row.dl_lost),
        );
    }
    out
}

pub fn sweep(cfg: &RunConfig) -> Result<Vec<SweepRecord>> {
    Ok(run_sweep(&cfg.loop_config(), &cfg.grid, cfg.episodes, workers(cfg))?)
}

/// Grid interval of least mean cost, if any point is feasible.
pub fn optimum(records: &[SweepRecord]) -> Result<Option<f64>> {
    match find_optimum(records) {
        Ok(t) => Ok(Some(t)),
        Err(CoreError::NoFeasiblePoint) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

pub fn sweep_csv(cfg: &RunConfig, records: &[SweepRecord]) -> Result<String> {
    let best = optimum(records)?;
    let mut out = header(cfg, Command::Sweep);
    out.push_str(
        "t_ctr,episodes,cost_mean,cost_stderr,per_theoretical,aoi_mean,reliability,mttf_mean,feasible,optimum\n",
    );
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            num(r.t_ctr),
            r.episodes,
            num(r.cost_mean),
            num(r.cost_stderr),
            num(r.per_theoretical),
            num(r.aoi_mean),
            num(r.reliability),
            r.mttf_mean.map(num).unwrap_or_default(),
            u8::from(r.feasible),
            u8::from(best == Some(r.t_ctr)),
        );
    }
    Ok(out)
}

pub fn feasible_csv(cfg: &RunConfig, records: &[SweepRecord]) -> Result<String> {
    let mut out = header(cfg, Command::Feasible);
    out.push_str("min_reliability,t_ctr,aoi_mean,cost_mean,reliability\n");
    for &level in &cfg.reliability_levels {
        for p in feasible_region(records, level)? {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                num(level),
                num(p.source_t_ctr),
                num(p.aoi),
                num(p.error),
                num(p.reliability)
            );
        }
    }
    Ok(out)
}

fn log_series(name: String, points: impl Iterator<Item = (f64, f64)>) -> Option<Series> {
    let points: Vec<_> = points
        .filter(|&(x, y)| x.is_finite() && y.is_finite() && y > 1e-300)
        .map(|(x, y)| (x, y.log10()))
        .collect();
    (points.len() >= 2).then_some(Series { name, points })
}

pub fn sweep_svg(records: &[SweepRecord]) -> Result<String> {
    let series: Vec<Series> = [
        log_series("cost_mean".into(), records.iter().map(|r| (r.t_ctr, r.cost_mean))),
        log_series(
            "per_theoretical".into(),
            records
                .iter()
                .filter(|r| r.per_theoretical > 1e-12)
                .map(|r| (r.t_ctr, r.per_theoretical)),
        ),
    ]
    .into_iter()
    .flatten()
    .collect();
    emit_svg(&series, "t_ctr (s)", "log10 value")
}

pub fn feasible_svg(cfg: &RunConfig, records: &[SweepRecord]) -> Result<String> {
    let mut series = Vec::new();
    for &level in &cfg.reliability_levels {
        let mut pts: Vec<(f64, f64)> = feasible_region(records, level)?
            .into_iter()
            .map(|p| (p.aoi, p.error))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        series.extend(log_series(format!("reliability >= {level}"), pts.into_iter()));
    }
    emit_svg(&series, "mean AoI (s)", "log10 cost_mean")
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_svg(cli: &Cli, svg: Result<String>) -> Result<()> {
    let path = cli
        .out
        .as_ref()
        .map(|p| p.with_extension("svg"))
        .context("--svg needs --out to place the plot")?;
    let svg = svg?;
    std::fs::write(&path, svg).with_context(|| format!("writing {}", path.display()))
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve(cli)?;
    if cfg.svg && cli.out.is_none() {
        bail!("--svg needs --out to place the plot");
    }
    let out = cli.out.as_deref();
    match cli.command {
        Command::PerCurve => write_output(out, &per_curve_csv(&cfg)),
        Command::Episode => {
            let r = run_configured_episode(&cfg, cli.trajectory.is_some())?;
            if let (Some(path), Some(rows)) = (&cli.trajectory, &r.trajectory) {
                std::fs::write(path, trajectory_csv(&cfg, rows))
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            write_output(out, &episode_csv(&cfg, &r))
        }
        Command::Sweep => {
            let records = sweep(&cfg)?;
            write_output(out, &sweep_csv(&cfg, &records)?)?;
            if cfg.svg {
                write_svg(cli, sweep_svg(&records))?;
            }
            Ok(())
        }
        Command::Feasible => {
            let records = sweep(&cfg)?;
            write_output(out, &feasible_csv(&cfg, &records)?)?;
            if cfg.svg {
                write_svg(cli, feasible_svg(&cfg, &records))?;
            }
            Ok(())
        }
    }
}

/// Process exit code for an error: 2 for configuration problems, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<ConfigError>().is_some() {
        2
    } else {
        1
    }
}
