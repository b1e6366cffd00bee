//! Flat `key = value` run configuration with `#` comments.

use std::fmt;

use netpend_core::coloop::LoopConfig;
use netpend_core::fblchannel::{db_to_linear, ChannelParams};
use netpend_core::lincontrol::LqrWeights;
use netpend_core::plant::{PlantParams, PlantState, ReferenceSignal};

/// Control intervals (s) of the default sweep grid.
pub const DEFAULT_GRID: [f64; 10] = [0.07, 0.08, 0.09, 0.1, 0.11, 0.125, 0.15, 0.2, 0.3, 0.5];

pub const DEFAULT_RELIABILITY_LEVELS: [f64; 6] = [0.0, 0.25, 0.5, 0.75, 0.9, 1.0];

/// Accepted keys with the values each one expects.
pub const KEYS: &[(&str, &str)] = &[
    ("t_ctr", "a number > 0 (s)"),
    ("horizon", "a number >= t_ctr (s)"),
    ("delay_periods", "1 or 2"),
    ("latency_compensation", "true or false"),
    ("cart_mass", "a number > 0 (kg)"),
    ("pole_mass", "a number > 0 (kg)"),
    ("pole_length", "a number > 0 (m)"),
    ("gravity", "a number > 0 (m/s^2)"),
    ("cart_friction", "a number >= 0 (N s/m)"),
    ("force_limit", "a number > 0 (N) or none"),
    ("snr_db", "a finite number (dB)"),
    ("bandwidth", "a number > 0 (Hz)"),
    ("symbol_rate", "a number > 0 (symbols/s)"),
    ("payload_bits", "an integer in [1, 4294967295]"),
    ("state_weights", "four numbers >= 0, comma separated"),
    ("control_weight", "a number > 0"),
    ("reference_period", "a number > 0 (s)"),
    ("duty", "a number in [0, 1]"),
    ("reference_low", "a finite number (m)"),
    ("reference_high", "a finite number (m)"),
    ("initial_state", "four finite numbers q, theta, q_dot, theta_dot"),
    ("sensor_noise_std", "four numbers >= 0, comma separated"),
    ("per_override", "a number in [0, 1] or none"),
    ("seed", "an integer in [0, 18446744073709551615]"),
    ("episode_index", "an integer in [0, 18446744073709551615]"),
    ("episodes", "an integer >= 1"),
    ("grid", "numbers > 0, strictly increasing, comma separated (s)"),
    ("reliability_levels", "numbers in [0, 1], comma separated"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        write!(f, "`{}`: {}", self.key, self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub t_ctr: f64,
    pub horizon: f64,
    pub delay_periods: usize,
    pub latency_compensation: bool,
    pub plant: PlantParams,
    pub snr_db: f64,
    pub bandwidth: f64,
    pub symbol_rate: f64,
    pub payload_bits: u32,
    pub state_weights: [f64; 4],
    pub control_weight: f64,
    pub reference: ReferenceSignal,
    pub initial_state: [f64; 4],
    pub sensor_noise_std: [f64; 4],
    pub per_override: Option<f64>,
    pub seed: u64,
    pub episode_index: u64,
    pub episodes: usize,
    pub grid: Vec<f64>,
    pub reliability_levels: Vec<f64>,
    /// Not echoed: results do not depend on it.
    pub workers: Option<usize>,
    pub svg: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let lc = LoopConfig::default();
        let w = LqrWeights::default();
        Self {
            t_ctr: lc.t_ctr,
            horizon: lc.horizon,
            delay_periods: lc.delay_periods,
            latency_compensation: lc.latency_compensation,
            plant: lc.plant,
            snr_db: 0.0,
            bandwidth: lc.channel.bandwidth,
            symbol_rate: lc.channel.symbol_rate,
            payload_bits: lc.channel.payload_bits,
            state_weights: [w.state_weights[0], w.state_weights[1], w.state_weights[2], w.state_weights[3]],
            control_weight: w.control_weight,
            reference: lc.reference,
            initial_state: [0.0; 4],
            sensor_noise_std: lc.sensor_noise_std,
            per_override: None,
            seed: lc.seed,
            episode_index: 0,
            episodes: 20,
            grid: DEFAULT_GRID.to_vec(),
            reliability_levels: DEFAULT_RELIABILITY_LEVELS.to_vec(),
            workers: None,
            svg: false,
        }
    }
}

fn expectation(key: &str) -> &'static str {
    KEYS.iter().find(|(k, _)| *k == key).map_or("", |(_, e)| e)
}

fn range_error(key: &str, got: impl fmt::Display) -> ConfigError {
    ConfigError {
        line: None,
        key: key.to_string(),
        message: format!("expected {}, got `{got}`", expectation(key)),
    }
}

fn number(key: &str, v: &str) -> Result<f64, ConfigError> {
    v.parse::<f64>().map_err(|_| range_error(key, v))
}

fn integer<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse::<T>().map_err(|_| range_error(key, v))
}

fn boolean(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(range_error(key, v)),
    }
}

fn optional(key: &str, v: &str) -> Result<Option<f64>, ConfigError> {
    if v == "none" {
        Ok(None)
    } else {
        number(key, v).map(Some)
    }
}

fn list(key: &str, v: &str) -> Result<Vec<f64>, ConfigError> {
    v.split(',').map(|s| number(key, s.trim())).collect()
}

fn quad(key: &str, v: &str) -> Result<[f64; 4], ConfigError> {
    list(key, v)?.try_into().map_err(|_| range_error(key, v))
}

fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(", ")
}

fn show_optional(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |x| x.to_string())
}

impl RunConfig {
    /// Set one key from its textual value.
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        match key {
            "t_ctr" => self.t_ctr = number(key, v)?,
            "horizon" => self.horizon = number(key, v)?,
            "delay_periods" => self.delay_periods = integer(key, v)?,
            "latency_compensation" => self.latency_compensation = boolean(key, v)?,
            "cart_mass" => self.plant.cart_mass = number(key, v)?,
            "pole_mass" => self.plant.pole_mass = number(key, v)?,
            "pole_length" => self.plant.pole_length = number(key, v)?,
            "gravity" => self.plant.gravity = number(key, v)?,
            "cart_friction" => self.plant.cart_friction = number(key, v)?,
            "force_limit" => self.plant.force_limit = optional(key, v)?,
            "snr_db" => self.snr_db = number(key, v)?,
            "bandwidth" => self.bandwidth = number(key, v)?,
            "symbol_rate" => self.symbol_rate = number(key, v)?,
            "payload_bits" => self.payload_bits = integer(key, v)?,
            "state_weights" => self.state_weights = quad(key, v)?,
            "control_weight" => self.control_weight = number(key, v)?,
            "reference_period" => self.reference.period = number(key, v)?,
            "duty" => self.reference.duty = number(key, v)?,
            "reference_low" => self.reference.low = number(key, v)?,
            "reference_high" => self.reference.high = number(key, v)?,
            "initial_state" => self.initial_state = quad(key, v)?,
            "sensor_noise_std" => self.sensor_noise_std = quad(key, v)?,
            "per_override" => self.per_override = optional(key, v)?,
            "seed" => self.seed = integer(key, v)?,
            "episode_index" => self.episode_index = integer(key, v)?,
            "episodes" => self.episodes = integer(key, v)?,
            "grid" => self.grid = list(key, v)?,
            "reliability_levels" => self.reliability_levels = list(key, v)?,
            _ => {
                return Err(ConfigError {
                    line: None,
                    key: key.to_string(),
                    message: "unknown key".into(),
                })
            }
        }
        Ok(())
    }

    /// Check every range; the first violation names its key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let pos = |x: f64| x.is_finite() && x > 0.0;
        let nonneg = |x: f64| x.is_finite() && x >= 0.0;
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        let p = &self.plant;
        let checks: [(&str, bool, String); 28] = [
            ("t_ctr", pos(self.t_ctr), self.t_ctr.to_string()),
            ("horizon", self.horizon.is_finite() && self.horizon >= self.t_ctr, self.horizon.to_string()),
            ("delay_periods", (1..=2).contains(&self.delay_periods), self.delay_periods.to_string()),
            ("latency_compensation", true, String::new()),
            ("cart_mass", pos(p.cart_mass), p.cart_mass.to_string()),
            ("pole_mass", pos(p.pole_mass), p.pole_mass.to_string()),
            ("pole_length", pos(p.pole_length), p.pole_length.to_string()),
            ("gravity", pos(p.gravity), p.gravity.to_string()),
            ("cart_friction", nonneg(p.cart_friction), p.cart_friction.to_string()),
            ("force_limit", p.force_limit.is_none_or(pos), show_optional(p.force_limit)),
            ("snr_db", self.snr_db.is_finite(), self.snr_db.to_string()),
            ("bandwidth", pos(self.bandwidth), self.bandwidth.to_string()),
            ("symbol_rate", pos(self.symbol_rate), self.symbol_rate.to_string()),
            ("payload_bits", self.payload_bits >= 1, self.payload_bits.to_string()),
            ("state_weights", self.state_weights.iter().all(|&x| nonneg(x)), join(&self.state_weights)),
            ("control_weight", pos(self.control_weight), self.control_weight.to_string()),
            ("reference_period", pos(self.reference.period), self.reference.period.to_string()),
            ("duty", unit(self.reference.duty), self.reference.duty.to_string()),
            ("reference_low", self.reference.low.is_finite(), self.reference.low.to_string()),
            ("reference_high", self.reference.high.is_finite(), self.reference.high.to_string()),
            ("initial_state", self.initial_state.iter().all(|x| x.is_finite()), join(&self.initial_state)),
            ("sensor_noise_std", self.sensor_noise_std.iter().all(|&x| nonneg(x)), join(&self.sensor_noise_std)),
            ("per_override", self.per_override.is_none_or(unit), show_optional(self.per_override)),
            ("seed", true, String::new()),
            ("episode_index", true, String::new()),
            ("episodes", self.episodes >= 1, self.episodes.to_string()),
            (
                "grid",
                !self.grid.is_empty()
                    && self.grid.iter().all(|&x| pos(x))
                    && self.grid.windows(2).all(|w| w[1] > w[0]),
                join(&self.grid),
            ),
            (
                "reliability_levels",
                !self.reliability_levels.is_empty() && self.reliability_levels.iter().all(|&x| unit(x)),
                join(&self.reliability_levels),
            ),
        ];
        match checks.into_iter().find(|(_, ok, _)| !ok) {
            Some((key, _, got)) => Err(range_error(key, got)),
            None => Ok(()),
        }
    }

    pub fn channel(&self) -> ChannelParams {
        ChannelParams {
            bandwidth: self.bandwidth,
            symbol_rate: self.symbol_rate,
            snr: db_to_linear(self.snr_db),
            payload_bits: self.payload_bits,
        }
    }

    pub fn loop_config(&self) -> LoopConfig {
        let [q, theta, q_dot, theta_dot] = self.initial_state;
        LoopConfig {
            t_ctr: self.t_ctr,
            horizon: self.horizon,
            delay_periods: self.delay_periods,
            plant: self.plant,
            channel: self.channel(),
            weights: LqrWeights {
                state_weights: self.state_weights.to_vec(),
                control_weight: self.control_weight,
            },
            reference: self.reference,
            initial_state: PlantState::new(q, theta, q_dot, theta_dot),
            sensor_noise_std: self.sensor_noise_std,
            latency_compensation: self.latency_compensation,
            loss_override: self.per_override,
            seed: self.seed,
            episode_index: self.episode_index,
            record: false,
        }
    }

    /// Every key with its resolved value, in `KEYS` order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let p = &self.plant;
        let values = [
            self.t_ctr.to_string(),
            self.horizon.to_string(),
            self.delay_periods.to_string(),
            self.latency_compensation.to_string(),
            p.cart_mass.to_string(),
            p.pole_mass.to_string(),
            p.pole_length.to_string(),
            p.gravity.to_string(),
            p.cart_friction.to_string(),
            show_optional(p.force_limit),
            self.snr_db.to_string(),
            self.bandwidth.to_string(),
            self.symbol_rate.to_string(),
            self.payload_bits.to_string(),
            join(&self.state_weights),
            self.control_weight.to_string(),
            self.reference.period.to_string(),
            self.reference.duty.to_string(),
            self.reference.low.to_string(),
            self.reference.high.to_string(),
            join(&self.initial_state),
            join(&self.sensor_noise_std),
            show_optional(self.per_override),
            self.seed.to_string(),
            self.episode_index.to_string(),
            self.episodes.to_string(),
            join(&self.grid),
            join(&self.reliability_levels),
        ];
        KEYS.iter().map(|(k, _)| *k).zip(values).collect()
    }

    /// The resolved configuration as a document `parse_config` accepts.
    pub fn render(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

/// Parse a configuration document over the defaults.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    let mut seen = std::collections::HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let at = |mut e: ConfigError| {
            e.line = Some(i + 1);
            e
        };
        let (key, value) = line.split_once('=').ok_or_else(|| {
            at(ConfigError {
                line: None,
                key: line.to_string(),
                message: "expected `key = value`".into(),
            })
        })?;
        let (key, value) = (key.trim(), value.trim());
        cfg.set(key, value).map_err(at)?;
        if !seen.insert(key.to_string()) {
            return Err(at(ConfigError {
                line: None,
                key: key.to_string(),
                message: "given more than once".into(),
            }));
        }
    }
    cfg.validate()?;
    Ok(cfg)
}
