//! Monte-Carlo sweeps over the control interval.
//!
//! Every episode draws from substreams keyed by `(seed, episode_index)`, so a
//! sweep is a pure function of its inputs no matter how many workers run it
//! or in which order episodes finish.

use rayon::prelude::*;

use crate::coloop::{simulate, EpisodeResult, LoopConfig};
use crate::error::{invalid, Error, Result};

/// Cart position, pendulum angle and reference at one sampling tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostSample {
    pub q: f64,
    pub theta: f64,
    pub r: f64,
}

/// Mean over ticks of `0.5 theta^2 + 0.5 (q - r)^2`.
pub fn control_cost(samples: &[CostSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Contract("control cost of an empty sample list".into()));
    }
    let sum: f64 = samples
        .iter()
        .map(|s| 0.5 * s.theta * s.theta + 0.5 * (s.q - s.r) * (s.q - s.r))
        .sum();
    Ok(sum / samples.len() as f64)
}

/// Aggregate over the episodes of one grid point.
///
/// `cost_stderr` is the unbiased sample standard deviation over `sqrt(N)`;
/// it is reported as zero when `episodes == 1`. A point whose controller
/// design or channel model failed has `feasible == false` and NaN statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub t_ctr: f64,
    pub episodes: usize,
    pub cost_mean: f64,
    pub cost_stderr: f64,
    pub per_theoretical: f64,
    pub aoi_mean: f64,
    /// Fraction of episodes that never fell.
    pub reliability: f64,
    /// Mean time to failure over the failed episodes.
    pub mttf_mean: Option<f64>,
    pub feasible: bool,
}

impl SweepRecord {
    fn infeasible(t_ctr: f64) -> Self {
        Self {
            t_ctr,
            episodes: 0,
            cost_mean: f64::NAN,
            cost_stderr: f64::NAN,
            per_theoretical: f64::NAN,
            aoi_mean: f64::NAN,
            reliability: 0.0,
            mttf_mean: None,
            feasible: false,
        }
    }
}

/// A point of the (AoI, error) performance plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerformancePoint {
    pub aoi: f64,
    pub error: f64,
    pub reliability: f64,
    pub source_t_ctr: f64,
}

/// Failure fraction and mean time to failure (absent when nothing failed).
pub fn mttf_stats(results: &[EpisodeResult]) -> Result<(f64, Option<f64>)> {
    if results.is_empty() {
        return Err(Error::Contract("MTTF of an empty episode list".into()));
    }
    let times: Vec<f64> = results.iter().filter_map(|r| r.time_to_failure).collect();
    let rate = times.len() as f64 / results.len() as f64;
    let mean = (!times.is_empty()).then(|| times.iter().sum::<f64>() / times.len() as f64);
    Ok((rate, mean))
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn aggregate(t_ctr: f64, results: &[EpisodeResult]) -> Result<SweepRecord> {
    let (failure_rate, mttf_mean) = mttf_stats(results)?;
    let costs: Vec<f64> = results.iter().map(|r| r.cost).collect();
    let (cost_mean, cost_stderr) = mean_and_stderr(&costs);
    let aoi: Vec<f64> = results.iter().map(|r| r.aoi_mean).collect();
    Ok(SweepRecord {
        t_ctr,
        episodes: results.len(),
        cost_mean,
        cost_stderr,
        per_theoretical: results[0].per_theoretical,
        aoi_mean: mean_and_stderr(&aoi).0,
        reliability: 1.0 - failure_rate,
        mttf_mean,
        feasible: true,
    })
}

/// Run `episodes_per_point` episodes at every control interval of `grid`.
///
/// `base.t_ctr` and `base.episode_index` are overridden per job. `workers`
/// bounds the thread pool; results do not depend on it.
pub fn run_sweep(
    base: &LoopConfig,
    grid: &[f64],
    episodes_per_point: usize,
    workers: usize,
) -> Result<Vec<SweepRecord>> {
    if grid.is_empty() {
        return Err(invalid("grid", "must contain at least one control interval"));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("grid", "must be strictly increasing"));
    }
    if episodes_per_point == 0 {
        return Err(invalid("episodes_per_point", "must be >= 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Contract(format!("worker pool: {e}")))?;

    pool.install(|| {
        let designs: Vec<_> = grid
            .par_iter()
            .map(|&t_ctr| {
                let cfg = LoopConfig {
                    t_ctr,
                    ..base.clone()
                };
                cfg.validate()?;
                cfg.loss_probability()?;
                cfg.design_gain().map(|g| (cfg, g))
            })
            .collect();

        let jobs: Vec<(usize, u64)> = designs
            .iter()
            .enumerate()
            .filter(|(_, d)| d.is_ok())
            .flat_map(|(i, _)| (0..episodes_per_point as u64).map(move |e| (i, e)))
            .collect();

        let outcomes: Vec<Result<EpisodeResult>> = jobs
            .par_iter()
            .map(|&(i, e)| {
                let (cfg, gain) = designs[i].as_ref().expect("filtered to feasible designs");
                let cfg = LoopConfig {
                    episode_index: e,
                    record: false,
                    ..cfg.clone()
                };
                simulate(&cfg, gain)
            })
            .collect();

        let mut outcomes = outcomes.into_iter();
        grid.iter()
            .zip(&designs)
            .map(|(&t_ctr, design)| {
                if design.is_err() {
                    return Ok(SweepRecord::infeasible(t_ctr));
                }
                let results: Result<Vec<_>> =
                    outcomes.by_ref().take(episodes_per_point).collect();
                match results {
                    Ok(results) => aggregate(t_ctr, &results),
                    Err(_) => Ok(SweepRecord::infeasible(t_ctr)),
                }
            })
            .collect()
    })
}

/// Control interval of the least mean cost; ties go to the smaller interval.
pub fn find_optimum(records: &[SweepRecord]) -> Result<f64> {
    records
        .iter()
        .filter(|r| r.feasible && !r.cost_mean.is_nan())
        .min_by(|a, b| {
            a.cost_mean
                .total_cmp(&b.cost_mean)
                .then(a.t_ctr.total_cmp(&b.t_ctr))
        })
        .map(|r| r.t_ctr)
        .ok_or(Error::NoFeasiblePoint)
}

/// Performance points of every feasible record whose reliability reaches `min_reliability`.
pub fn feasible_region(records: &[SweepRecord], min_reliability: f64) -> Result<Vec<PerformancePoint>> {
    if !(0.0..=1.0).contains(&min_reliability) {
        return Err(invalid(
            "min_reliability",
            format!("must lie in [0, 1], got {min_reliability}"),
        ));
    }
    Ok(records
        .iter()
        .filter(|r| r.feasible && r.reliability >= min_reliability)
        .map(|r| PerformancePoint {
            aoi: r.aoi_mean,
            error: r.cost_mean,
            reliability: r.reliability,
            source_t_ctr: r.t_ctr,
        })
        .collect())
}
