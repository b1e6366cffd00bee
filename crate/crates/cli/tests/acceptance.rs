//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use nalgebra::DMatrix;

use netpend_cli::{feasible_csv, per_curve_csv, sweep, sweep_csv, RunConfig};
use netpend_core::campaign::{feasible_region, find_optimum, SweepRecord};
use netpend_core::coloop::{run_episode, LoopConfig};
use netpend_core::fblchannel::{per, ChannelParams};
use netpend_core::lincontrol::{
    design_controller, discretize, lqr_gain, spectral_radius, DiscreteModel, LqrWeights,
    DEFAULT_RICCATI_MAX_ITER, DEFAULT_RICCATI_TOL,
};
use netpend_core::plant::{derivative, linearize, step, total_energy, PlantParams, PlantState};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// erfc-based oracle values computed with mpmath at 50 digits
const PER_N90: f64 = 0.014134000031129648;

fn per_formula() -> Outcome {
    let ch = ChannelParams::default();
    let eps = per(&ch, 0.090).map_err(|e| e.to_string())?;
    let at_capacity = per(&ch, 0.064).map_err(|e| e.to_string())?;
    check(
        (eps - PER_N90).abs() < 1e-12 && (eps - 0.01414).abs() < 1e-3 && (at_capacity - 0.5).abs() < 1e-12,
        format!("per(n=90) = {eps:.12}, per(rate = capacity) = {at_capacity:.15}"),
    )
}

fn per_monotone() -> Outcome {
    let ch = ChannelParams::default();
    let eps: Vec<f64> = (1..=50)
        .map(|i| per(&ch, i as f64 * 0.01))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let bad = eps.windows(2).position(|w| !(w[1] < w[0]));
    check(
        bad.is_none(),
        match bad {
            None => format!("strictly decreasing over 50 grid points, {:.3e} .. {:.3e}", eps[0], eps[49]),
            Some(i) => format!("not decreasing between {} ms and {} ms", 10 * (i + 1), 10 * (i + 2)),
        },
    )
}

fn flagship_config(workers: usize) -> RunConfig {
    RunConfig {
        workers: Some(workers),
        ..RunConfig::default()
    }
}

fn fig3_shape(records: &[SweepRecord]) -> Outcome {
    let best = find_optimum(records).map_err(|e| e.to_string())?;
    let i = records.iter().position(|r| r.t_ctr == best).unwrap();
    let n = records.len();
    let costs: Vec<f64> = records.iter().map(|r| r.cost_mean).collect();
    let interior = i > 0 && i + 1 < n;
    let unimodal =
        costs[..=i].windows(2).all(|w| w[1] <= w[0]) && costs[i..].windows(2).all(|w| w[1] >= w[0]);
    let top = costs[i] + records[i].cost_stderr;
    let separated = [0, n - 1]
        .iter()
        .all(|&j| top < records[j].cost_mean - records[j].cost_stderr);
    check(
        records.iter().all(|r| r.feasible) && interior && unimodal && separated,
        format!(
            "argmin t_ctr = {best} s (index {i} of {n}), cost {:.4} vs endpoints {:.4e} / {:.4e}",
            costs[i],
            costs[0],
            costs[n - 1]
        ),
    )
}

fn ideal_baseline(delay_periods: usize) -> Outcome {
    let cfg = RunConfig {
        delay_periods,
        per_override: Some(0.0),
        episodes: 1,
        workers: Some(4),
        ..RunConfig::default()
    };
    let records = sweep(&cfg).map_err(|e| e.to_string())?;
    let costs: Vec<f64> = records.iter().map(|r| r.cost_mean).collect();
    check(
        costs.windows(2).all(|w| w[1] >= w[0]),
        format!("costs {costs:.4?}"),
    )
}

fn controller() -> Outcome {
    let scalar = DiscreteModel {
        ad: DMatrix::from_element(1, 1, 1.0),
        bd: DMatrix::from_element(1, 1, 1.0),
        t_ctr: 1.0,
    };
    let unit = LqrWeights {
        state_weights: vec![1.0],
        control_weight: 1.0,
    };
    let k = lqr_gain(&scalar, &unit, DEFAULT_RICCATI_TOL, DEFAULT_RICCATI_MAX_ITER)
        .map_err(|e| e.to_string())?
        .gain
        .as_slice()[0];
    if (k - 0.618034).abs() > 1e-6 {
        return Err(format!("scalar gain {k}"));
    }

    let plant = PlantParams::default();
    let weights = LqrWeights::default();
    let lin = linearize(&plant);
    let mut worst = 0.0f64;
    for t in netpend_cli::config::DEFAULT_GRID.into_iter().chain([0.01, 0.02, 0.05]) {
        let model = discretize(&lin, t).map_err(|e| e.to_string())?;
        let design = design_controller(&plant, t, &weights, 2, false).map_err(|e| e.to_string())?;
        let kx = DMatrix::from_row_slice(1, 4, design.gain.as_slice());
        let rho = spectral_radius(&(&model.ad - &model.bd * kx)).map_err(|e| e.to_string())?;
        worst = worst.max(rho);
    }
    if worst >= 1.0 {
        return Err(format!("closed-loop spectral radius {worst}"));
    }

    let ideal = LoopConfig {
        t_ctr: 0.01,
        horizon: 60.0,
        loss_override: Some(0.0),
        ..LoopConfig::default()
    };
    let r = run_episode(&ideal).map_err(|e| e.to_string())?;
    check(
        !r.failed && r.max_abs_theta < 0.3,
        format!("K = {k:.9}, worst rho = {worst:.6}, max |theta| = {:.4} rad", r.max_abs_theta),
    )
}

fn numerics() -> Outcome {
    let p = PlantParams::default();
    let run = |x0: PlantState, dt: f64, steps: usize, p: &PlantParams| {
        (0..steps).try_fold(x0, |x, _| step(&x, 0.0, dt, p))
    };
    let x0 = PlantState::new(0.0, 0.1, 0.0, 0.0);
    let err = |e: netpend_core::Error| e.to_string();
    let reference = run(x0, 0.01 / 64.0, 6400, &p).map_err(err)?.to_vector();
    let coarse = (run(x0, 0.01, 100, &p).map_err(err)?.to_vector() - reference).amax();
    let fine = (run(x0, 0.005, 200, &p).map_err(err)?.to_vector() - reference).amax();
    let ratio = coarse / fine;

    let frictionless = PlantParams {
        cart_friction: 0.0,
        ..p
    };
    let mut x = x0;
    let e0 = total_energy(&x, &frictionless);
    let mut drift = 0.0f64;
    for _ in 0..10_000 {
        x = step(&x, 0.0, 1e-3, &frictionless).map_err(err)?;
        drift = drift.max((total_energy(&x, &frictionless) - e0).abs() / e0.abs().max(1.0));
    }

    let lin = linearize(&p);
    let h = 1e-6;
    let mut jac_err = 0.0f64;
    for j in 0..5 {
        let (mut plus, mut minus) = ([0.0; 4], [0.0; 4]);
        let (mut fp, mut fm) = (0.0, 0.0);
        if j < 4 {
            plus[j] = h;
            minus[j] = -h;
        } else {
            fp = h;
            fm = -h;
        }
        let state = |v: [f64; 4]| PlantState::new(v[0], v[1], v[2], v[3]);
        let col = (derivative(&state(plus), fp, &p).to_vector() - derivative(&state(minus), fm, &p).to_vector())
            / (2.0 * h);
        for i in 0..4 {
            let exact = if j < 4 { lin.a[(i, j)] } else { lin.b[i] };
            jac_err = jac_err.max((col[i] - exact).abs());
        }
    }
    check(
        (12.0..=20.0).contains(&ratio) && drift < 1e-6 && jac_err < 1e-6,
        format!("halving ratio {ratio:.2}, energy drift {drift:.2e}, Jacobian error {jac_err:.2e}"),
    )
}

fn statistics() -> Outcome {
    let lossy = LoopConfig {
        t_ctr: 0.08,
        horizon: 820.0,
        seed: 7,
        ..LoopConfig::default()
    };
    let r = run_episode(&lossy).map_err(|e| e.to_string())?;
    let frames = r.event_counts.ul_frames as f64;
    let eps = r.per_theoretical;
    let sigma = (eps * (1.0 - eps) / frames).sqrt();
    let z = (r.per_empirical_ul - eps).abs() / sigma;

    let fresh = LoopConfig {
        t_ctr: 0.05,
        horizon: 600.0,
        delay_periods: 1,
        loss_override: Some(0.0),
        ..LoopConfig::default()
    };
    let a = run_episode(&fresh).map_err(|e| e.to_string())?;
    let rel = a.aoi_mean / (1.5 * fresh.t_ctr);
    check(
        frames >= 1e4 && z <= 4.0 && (rel - 1.0).abs() <= 0.01,
        format!(
            "UL loss {:.5} vs eps {eps:.5} over {frames} frames ({z:.2} sigma), AoI / 1.5T = {rel:.5}",
            r.per_empirical_ul
        ),
    )
}

fn nesting(records: &[SweepRecord]) -> Outcome {
    let levels = netpend_cli::config::DEFAULT_RELIABILITY_LEVELS;
    let regions: Vec<_> = levels
        .iter()
        .map(|&l| feasible_region(records, l))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let mut pairs = 0;
    for (i, outer) in regions.iter().enumerate() {
        for inner in &regions[i..] {
            if !inner.iter().all(|p| outer.contains(p)) {
                return Err(format!("region at level {} is not nested", levels[i]));
            }
            pairs += 1;
        }
    }
    let sizes: Vec<usize> = regions.iter().map(Vec::len).collect();
    check(true, format!("{pairs} level pairs nested, region sizes {sizes:?}"))
}

fn determinism(flagship: &str) -> Outcome {
    let repeat = sweep_csv(&flagship_config(1), &sweep(&flagship_config(1)).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    if repeat != flagship {
        return Err("flagship sweep differs between 4 workers and 1 worker".into());
    }
    let small = RunConfig {
        horizon: 30.0,
        episodes: 3,
        grid: vec![0.07, 0.09, 0.2],
        ..RunConfig::default()
    };
    for workers in [2, 3] {
        let cfg = RunConfig {
            workers: Some(workers),
            ..small.clone()
        };
        let base = RunConfig {
            workers: Some(1),
            ..small.clone()
        };
        let a = feasible_csv(&cfg, &sweep(&cfg).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let b = feasible_csv(&base, &sweep(&base).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        if a != b {
            return Err(format!("feasible CSV differs with {workers} workers"));
        }
    }
    let episode = |cfg: &RunConfig| -> Result<String, String> {
        let r = netpend_cli::run_configured_episode(cfg, true).map_err(|e| e.to_string())?;
        Ok(netpend_cli::episode_csv(cfg, &r) + &netpend_cli::trajectory_csv(cfg, r.trajectory.as_deref().unwrap()))
    };
    let one = RunConfig {
        horizon: 60.0,
        ..RunConfig::default()
    };
    check(
        episode(&one)? == episode(&one)? && per_curve_csv(&one) == per_curve_csv(&one),
        "sweep (1 vs 4 workers), feasible (1/2/3 workers), episode and per-curve repeat byte-identically".into(),
    )
}

fn one_period_shape() -> Outcome {
    let cfg = RunConfig {
        delay_periods: 1,
        ..flagship_config(4)
    };
    fig3_shape(&sweep(&cfg).map_err(|e| e.to_string())?)
}

fn both_delays(two: Outcome, one: Outcome) -> Outcome {
    match (two, one) {
        (Ok(a), Ok(b)) => Ok(format!("delay 2: {a}; delay 1: {b}")),
        (Err(e), _) => Err(format!("delay 2: {e}")),
        (_, Err(e)) => Err(format!("delay 1: {e}")),
    }
}

fn main() {
    let flagship_cfg = flagship_config(4);
    let flagship = sweep(&flagship_cfg);
    let flagship_text = flagship
        .as_ref()
        .map_err(|e| e.to_string())
        .and_then(|r| sweep_csv(&flagship_cfg, r).map_err(|e| e.to_string()));
    let with_records = |f: fn(&[SweepRecord]) -> Outcome| match &flagship {
        Ok(r) => f(r),
        Err(e) => Err(format!("flagship sweep failed: {e}")),
    };

    let results: Vec<(&str, Outcome)> = vec![
        ("1 PER formula fidelity", per_formula()),
        ("2 PER monotonicity", per_monotone()),
        ("3 cost curve shape", both_delays(with_records(fig3_shape), one_period_shape())),
        ("4 ideal-channel baseline", both_delays(ideal_baseline(2), ideal_baseline(1))),
        ("5 controller correctness", controller()),
        ("6 numerics", numerics()),
        ("7 statistical consistency", statistics()),
        ("8 feasible region nesting", with_records(nesting)),
        (
            "9 determinism",
            flagship_text.and_then(|t| determinism(&t)),
        ),
    ];

    let mut failures = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(detail) => {
                failures += 1;
                println!("FAIL criterion {name}: {detail}");
            }
        }
    }
    if failures > 0 {
        eprintln!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
