//! Closed-loop episode: sensor, uplink, controller, downlink, actuator, plant.
//!
//! Timing per control period `T` (tick `k` at `t = kT`):
//!
//! 1. a downlink command scheduled for tick `k` takes effect (zero-order hold otherwise);
//! 2. the sensor samples `x(kT)`;
//! 3. the uplink frame carrying the sample occupies `[kT, (k+1)T)` and is erased with probability `eps`;
//! 4. at `(k+1)T` the controller computes a command from its freshest delivered state;
//! 5. the downlink frame is erased with probability `eps`; if delivered the command
//!    takes effect at tick `k + delay_periods`;
//! 6. the plant integrates over `[kT, (k+1)T)` with the force held constant.
//!
//! Lost frames are never retransmitted; the next sample supersedes them.

mod aoi;
mod events;

use std::collections::VecDeque;

use rand_distr::{Distribution, Normal};

pub use aoi::{aoi_time_average, summarize as summarize_aoi, AoiSummary, Delivery};
pub use events::{classify_event, classify_named, Cause, ErrorClass, ErrorEvent, EventCounts};

use crate::campaign::{control_cost, CostSample};
use crate::error::{invalid, Error, Result};
use crate::fblchannel::{per, sample_loss, ChannelParams, Link, RngStream};
use crate::lincontrol::{control_force, design_controller, Gain, LqrWeights};
use crate::plant::{reference, step, PlantParams, PlantState, ReferenceSignal};

/// Largest integration substep (s).
pub const MAX_SUBSTEP: f64 = 1e-3;

/// `|theta|` beyond which the pendulum counts as fallen.
pub const FALL_ANGLE: f64 = std::f64::consts::FRAC_PI_2;

#[derive(Debug, Clone, PartialEq)]
pub struct LoopConfig {
    /// Control interval, equal to the sensor sampling interval and the frame length (s).
    pub t_ctr: f64,
    /// Episode duration (s).
    pub horizon: f64,
    /// Sensor-to-actuation latency in control periods, 1 or 2.
    pub delay_periods: usize,
    pub plant: PlantParams,
    /// Shared by uplink and downlink.
    pub channel: ChannelParams,
    pub weights: LqrWeights,
    pub reference: ReferenceSignal,
    /// Plant state at `t = 0`, also the controller's initial estimate.
    pub initial_state: PlantState,
    /// Standard deviations of additive Gaussian sensor noise on `[q, theta, q_dot, theta_dot]`.
    pub sensor_noise_std: [f64; 4],
    /// Design the gain on the model augmented with in-flight commands.
    pub latency_compensation: bool,
    /// Replace the channel's packet error rate on both links (test hook and ideal-channel runs).
    pub loss_override: Option<f64>,
    pub seed: u64,
    pub episode_index: u64,
    /// Keep the per-tick trajectory and the event log.
    pub record: bool,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            t_ctr: 0.09,
            horizon: 600.0,
            delay_periods: 2,
            plant: PlantParams::default(),
            channel: ChannelParams::default(),
            weights: LqrWeights::default(),
            reference: ReferenceSignal::default(),
            initial_state: PlantState::default(),
            sensor_noise_std: [0.0; 4],
            latency_compensation: true,
            loss_override: None,
            seed: 1,
            episode_index: 0,
            record: false,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_ctr.is_finite() && self.t_ctr > 0.0) {
            return Err(invalid("t_ctr", format!("must be finite and > 0, got {}", self.t_ctr)));
        }
        if !(self.horizon.is_finite() && self.horizon >= self.t_ctr) {
            return Err(invalid(
                "horizon",
                format!("must be finite and >= t_ctr ({}), got {}", self.t_ctr, self.horizon),
            ));
        }
        if !(1..=2).contains(&self.delay_periods) {
            return Err(invalid(
                "delay_periods",
                format!("must be 1 or 2, got {}", self.delay_periods),
            ));
        }
        if !self.initial_state.is_finite() {
            return Err(invalid("initial_state", "entries must be finite"));
        }
        if self.sensor_noise_std.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(invalid("sensor_noise_std", "entries must be finite and >= 0"));
        }
        if let Some(eps) = self.loss_override {
            if !(0.0..=1.0).contains(&eps) {
                return Err(invalid("loss_override", format!("must lie in [0, 1], got {eps}")));
            }
        }
        self.plant.validate()?;
        self.channel.validate()?;
        self.weights.validate()?;
        self.reference.validate()
    }

    /// Last tick index `K = floor(horizon / t_ctr)`.
    pub fn last_tick(&self) -> usize {
        // tolerate ratios such as 600 / 0.1 landing just below an integer
        (self.horizon / self.t_ctr * (1.0 + 1e-12)).floor() as usize
    }

    /// RK4 substeps per control period: `dt_int = min(1 ms, t_ctr / 10)`.
    pub fn substeps(&self) -> usize {
        let dt = MAX_SUBSTEP.min(self.t_ctr / 10.0);
        ((self.t_ctr / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize
    }

    /// Packet error rate in force on both links.
    pub fn loss_probability(&self) -> Result<f64> {
        match self.loss_override {
            Some(eps) => Ok(eps),
            None => per(&self.channel, self.t_ctr),
        }
    }

    pub fn design_gain(&self) -> Result<Gain> {
        design_controller(
            &self.plant,
            self.t_ctr,
            &self.weights,
            self.delay_periods,
            self.latency_compensation,
        )
        .map(|d| d.gain)
    }
}

/// State of the loop at one tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub state: PlantState,
    pub r: f64,
    /// Force driving the plant over the following period.
    pub u: f64,
    /// Age of the controller's freshest state at `t`.
    pub aoi: f64,
    pub ul_lost: bool,
    pub dl_lost: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub cost: f64,
    pub per_theoretical: f64,
    pub per_empirical_ul: f64,
    pub per_empirical_dl: f64,
    pub aoi_mean: f64,
    pub aoi_max: f64,
    pub failed: bool,
    pub time_to_failure: Option<f64>,
    /// The state became non-finite; `cost` then covers only the finite prefix.
    pub diverged: bool,
    pub max_abs_theta: f64,
    pub event_counts: EventCounts,
    pub trajectory: Option<Vec<TrajectoryRow>>,
    pub events: Option<Vec<ErrorEvent>>,
}

pub fn run_episode(config: &LoopConfig) -> Result<EpisodeResult> {
    config.validate()?;
    let gain = config.design_gain()?;
    simulate(config, &gain)
}

/// Run one episode with a precomputed gain.
pub fn simulate(config: &LoopConfig, gain: &Gain) -> Result<EpisodeResult> {
    config.validate()?;
    let expected = if config.latency_compensation {
        4 + config.delay_periods
    } else {
        4
    };
    if gain.as_slice().len() != expected {
        return Err(Error::Contract(format!(
            "gain has {} entries, loop expects {expected}",
            gain.as_slice().len()
        )));
    }
    let eps = config.loss_probability()?;
    Episode::new(config, gain, eps).run()
}

struct Episode<'a> {
    cfg: &'a LoopConfig,
    gain: &'a Gain,
    eps: f64,
    ul_rng: RngStream,
    dl_rng: RngStream,
    sensor_rng: RngStream,
    noise: [Option<Normal<f64>>; 4],
    counts: EventCounts,
    events: Option<Vec<ErrorEvent>>,
}

impl<'a> Episode<'a> {
    fn new(cfg: &'a LoopConfig, gain: &'a Gain, eps: f64) -> Self {
        let noise = cfg
            .sensor_noise_std
            .map(|s| (s > 0.0).then(|| Normal::new(0.0, s).expect("validated std")));
        Self {
            cfg,
            gain,
            eps,
            ul_rng: RngStream::for_link(cfg.seed, cfg.episode_index, Link::Uplink),
            dl_rng: RngStream::for_link(cfg.seed, cfg.episode_index, Link::Downlink),
            sensor_rng: RngStream::for_link(cfg.seed, cfg.episode_index, Link::Sensor),
            noise,
            counts: EventCounts::default(),
            events: cfg.record.then(Vec::new),
        }
    }

    fn log(&mut self, time: f64, cause: Cause) {
        self.counts.record(cause);
        if let Some(events) = &mut self.events {
            events.push(ErrorEvent { time, cause });
        }
    }

    /// Sensor reading, or `None` when it is exact.
    fn measure(&mut self, x: &PlantState) -> Option<PlantState> {
        if self.noise.iter().all(Option::is_none) {
            return None;
        }
        let mut y = x.to_vector();
        for (i, dist) in self.noise.iter().enumerate() {
            if let Some(d) = dist {
                y[i] += d.sample(&mut self.sensor_rng);
            }
        }
        Some(PlantState::from_vector(&y))
    }

    fn run(mut self) -> Result<EpisodeResult> {
        let cfg = self.cfg;
        let t_ctr = cfg.t_ctr;
        let last = cfg.last_tick();
        let substeps = cfg.substeps();
        let h = t_ctr / substeps as f64;
        let delay = cfg.delay_periods;
        let compensate = cfg.latency_compensation;
        let force_limit = cfg.plant.force_limit;

        let mut x = self.cfg.initial_state;
        let mut estimate = x;
        let mut freshest = 0.0;
        let mut force = 0.0;
        let mut scheduled: Vec<Option<f64>> = vec![None; last + delay + 1];
        // commands driving periods k .. k + delay - 1, as sent by the controller
        let mut in_flight: VecDeque<f64> = std::iter::repeat_n(0.0, delay).collect();
        let mut in_flight_buf = vec![0.0; delay];

        let mut samples = Vec::with_capacity(last + 1);
        let mut deliveries = Vec::with_capacity(last + 1);
        let mut trajectory = cfg.record.then(|| Vec::with_capacity(last + 1));
        let mut time_to_failure = None;
        let mut diverged = false;
        let mut max_abs_theta = 0.0f64;

        'ticks: for k in 0..=last {
            let t = k as f64 * t_ctr;
            if let Some(u) = scheduled[k] {
                force = u;
            }
            let r = reference(&cfg.reference, t);
            samples.push(CostSample {
                q: x.q,
                theta: x.theta,
                r,
            });

            let measured = match self.measure(&x) {
                Some(y) => {
                    self.log(t, Cause::SensorNoise);
                    y
                }
                None => x,
            };

            self.counts.ul_frames += 1;
            let ul_lost = sample_loss(self.eps, &mut self.ul_rng);
            let arrival = t + t_ctr;
            if ul_lost {
                self.log(t, Cause::UlLoss);
            } else {
                self.counts.ul_delivered += 1;
                estimate = measured;
                if arrival <= cfg.horizon {
                    deliveries.push(Delivery {
                        generated: t,
                        delivered: arrival,
                    });
                }
            }

            for (slot, w) in in_flight_buf.iter_mut().zip(&in_flight) {
                *slot = *w;
            }
            let feedback: &[f64] = if compensate { &in_flight_buf } else { &[] };
            let u = control_force(
                self.gain,
                &estimate,
                reference(&cfg.reference, arrival),
                feedback,
                force_limit,
            );
            in_flight.pop_front();
            in_flight.push_back(u);

            self.counts.dl_frames += 1;
            let dl_lost = sample_loss(self.eps, &mut self.dl_rng);
            if dl_lost {
                self.log(t, Cause::DlLoss);
            } else {
                self.counts.dl_delivered += 1;
                scheduled[k + delay] = Some(u);
            }

            if let Some(rows) = &mut trajectory {
                rows.push(TrajectoryRow {
                    t,
                    state: x,
                    r,
                    u: force,
                    aoi: t - freshest,
                    ul_lost,
                    dl_lost,
                });
            }
            // the sample sent at k reaches the controller before tick k + 1 is recorded
            if !ul_lost {
                freshest = t;
            }

            if k == last {
                break;
            }
            let applied = cfg.plant.saturate(force);
            for i in 0..substeps {
                match step(&x, applied, h, &cfg.plant) {
                    Ok(next) => x = next,
                    Err(_) => {
                        diverged = true;
                        let when = t + (i + 1) as f64 * h;
                        if time_to_failure.is_none() {
                            time_to_failure = Some(when);
                            self.log(when, Cause::PendulumFall);
                        }
                        break 'ticks;
                    }
                }
                max_abs_theta = max_abs_theta.max(x.theta.abs());
                if time_to_failure.is_none() && x.theta.abs() > FALL_ANGLE {
                    let when = t + (i + 1) as f64 * h;
                    time_to_failure = Some(when);
                    self.log(when, Cause::PendulumFall);
                }
            }
        }

        let cost = control_cost(&samples)?;
        let aoi = summarize_aoi(&deliveries, cfg.horizon)?;
        let frames = self.counts.ul_frames as f64;
        Ok(EpisodeResult {
            cost,
            per_theoretical: self.eps,
            per_empirical_ul: self.counts.ul_loss as f64 / frames,
            per_empirical_dl: self.counts.dl_loss as f64 / self.counts.dl_frames as f64,
            aoi_mean: aoi.mean,
            aoi_max: aoi.max,
            failed: time_to_failure.is_some(),
            time_to_failure,
            diverged,
            max_abs_theta,
            event_counts: self.counts,
            trajectory,
            events: self.events,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn short(t_ctr: f64, horizon: f64) -> LoopConfig {
        LoopConfig {
            t_ctr,
            horizon,
            ..LoopConfig::default()
        }
    }

    #[test]
    fn tick_and_substep_counts() {
        assert_eq!(short(0.1, 600.0).last_tick(), 6000);
        assert_eq!(short(0.07, 600.0).last_tick(), 8571);
        assert_eq!(short(0.09, 600.0).substeps(), 90);
        assert_eq!(short(0.005, 1.0).substeps(), 10);
    }

    #[test]
    fn validation_rejects_bad_delay_and_horizon() {
        let mut c = short(0.1, 10.0);
        c.delay_periods = 3;
        assert!(matches!(
            c.validate(),
            Err(Error::InvalidParameter { name: "delay_periods", .. })
        ));
        let c = short(0.1, 0.05);
        assert!(matches!(
            c.validate(),
            Err(Error::InvalidParameter { name: "horizon", .. })
        ));
    }

    #[test]
    fn gain_shape_must_match_loop() {
        let c = short(0.1, 1.0);
        let plain = Gain::new(vec![0.0; 4]);
        assert!(matches!(simulate(&c, &plain), Err(Error::Contract(_))));
    }

    #[test]
    fn ideal_channel_has_no_transmission_events() {
        let mut c = short(0.05, 30.0);
        c.loss_override = Some(0.0);
        let r = run_episode(&c).unwrap();
        assert_eq!(r.event_counts.ul_loss + r.event_counts.dl_loss, 0);
        assert_eq!(r.per_empirical_ul, 0.0);
        assert!(!r.failed);
        assert!(r.cost > 0.0);
    }

    #[test]
    fn frame_accounting_balances() {
        let mut c = short(0.08, 60.0);
        c.record = true;
        let r = run_episode(&c).unwrap();
        let n = r.event_counts;
        assert_eq!(n.ul_loss + n.ul_delivered, n.ul_frames);
        assert_eq!(n.dl_loss + n.dl_delivered, n.dl_frames);
        assert_eq!(n.ul_frames as usize, c.last_tick() + 1);
        let events = r.events.unwrap();
        let ul = events.iter().filter(|e| e.cause == Cause::UlLoss).count() as u64;
        assert_eq!(ul, n.ul_loss);
        assert!(events.iter().all(|e| e.class() == classify_event(e.cause)));
    }

    #[test]
    fn sensor_noise_produces_value_events() {
        let mut c = short(0.05, 5.0);
        c.loss_override = Some(0.0);
        c.sensor_noise_std = [0.001, 0.001, 0.0, 0.0];
        let r = run_episode(&c).unwrap();
        assert_eq!(r.event_counts.sensor_noise, c.last_tick() as u64 + 1);
        assert_eq!(r.event_counts.by_class(ErrorClass::Value), r.event_counts.sensor_noise);
    }

    #[test]
    fn trajectory_has_one_row_per_tick() {
        let mut c = short(0.1, 2.0);
        c.record = true;
        c.loss_override = Some(0.0);
        let r = run_episode(&c).unwrap();
        let rows = r.trajectory.unwrap();
        assert_eq!(rows.len(), 21);
        assert_eq!(rows[0].aoi, 0.0);
        // delay 2: the first command acts at tick 2
        assert_eq!(rows[0].u, 0.0);
        assert_eq!(rows[1].u, 0.0);
        assert!(rows[2].u != 0.0);
        assert_abs_diff_eq!(rows[5].aoi, 0.1, epsilon = 1e-12);
    }

    #[test]
    fn loss_free_aoi_with_single_period_delay() {
        let mut c = short(0.05, 60.0);
        c.delay_periods = 1;
        c.loss_override = Some(0.0);
        let r = run_episode(&c).unwrap();
        assert_abs_diff_eq!(r.aoi_mean / c.t_ctr, 1.5, epsilon = 0.015);
        // age never drops below one frame after the first delivery
        assert!(r.aoi_max >= c.t_ctr);
    }

    #[test]
    fn total_loss_lets_the_pendulum_fall() {
        let mut c = short(0.02, 30.0);
        c.loss_override = Some(1.0);
        c.initial_state = PlantState::new(0.0, 0.05, 0.0, 0.0);
        c.record = true;
        let r = run_episode(&c).unwrap();
        assert!(r.failed);
        assert_eq!(r.event_counts.pendulum_fall, 1);
        assert_eq!(r.event_counts.ul_delivered, 0);
        let ttf = r.time_to_failure.unwrap();
        assert!(ttf > 0.0 && ttf < 30.0);
    }

    #[test]
    fn episodes_are_deterministic() {
        let mut c = short(0.08, 30.0);
        c.record = true;
        c.episode_index = 5;
        assert_eq!(run_episode(&c).unwrap(), run_episode(&c).unwrap());
        let mut other = c.clone();
        other.episode_index = 6;
        assert_ne!(run_episode(&c).unwrap(), run_episode(&other).unwrap());
    }
}
