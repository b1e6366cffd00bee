//! Error taxonomy: value errors corrupt a sample, transmission errors lose a
//! frame, system errors are application-level failures.

use std::fmt;
use std::str::FromStr;

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorClass {
    Value,
    Transmission,
    System,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cause {
    SensorNoise,
    UlLoss,
    DlLoss,
    PendulumFall,
}

impl Cause {
    pub const ALL: [Cause; 4] = [
        Cause::SensorNoise,
        Cause::UlLoss,
        Cause::DlLoss,
        Cause::PendulumFall,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Cause::SensorNoise => "sensor_noise",
            Cause::UlLoss => "ul_loss",
            Cause::DlLoss => "dl_loss",
            Cause::PendulumFall => "pendulum_fall",
        }
    }
}

impl fmt::Display for Cause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Cause {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Cause::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Contract(format!("unknown error cause `{s}`")))
    }
}

pub fn classify_event(cause: Cause) -> ErrorClass {
    match cause {
        Cause::SensorNoise => ErrorClass::Value,
        Cause::UlLoss | Cause::DlLoss => ErrorClass::Transmission,
        Cause::PendulumFall => ErrorClass::System,
    }
}

/// Classify a cause given by name, as it appears in logs and CSV output.
pub fn classify_named(cause: &str) -> Result<ErrorClass, Error> {
    cause.parse().map(classify_event)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorEvent {
    pub time: f64,
    pub cause: Cause,
}

impl ErrorEvent {
    pub fn class(&self) -> ErrorClass {
        classify_event(self.cause)
    }
}

/// Per-cause tallies plus delivered-frame counts for both links.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EventCounts {
    pub sensor_noise: u64,
    pub ul_loss: u64,
    pub dl_loss: u64,
    pub pendulum_fall: u64,
    pub ul_frames: u64,
    pub dl_frames: u64,
    pub ul_delivered: u64,
    pub dl_delivered: u64,
}

impl EventCounts {
    pub fn record(&mut self, cause: Cause) {
        match cause {
            Cause::SensorNoise => self.sensor_noise += 1,
            Cause::UlLoss => self.ul_loss += 1,
            Cause::DlLoss => self.dl_loss += 1,
            Cause::PendulumFall => self.pendulum_fall += 1,
        }
    }

    pub fn get(&self, cause: Cause) -> u64 {
        match cause {
            Cause::SensorNoise => self.sensor_noise,
            Cause::UlLoss => self.ul_loss,
            Cause::DlLoss => self.dl_loss,
            Cause::PendulumFall => self.pendulum_fall,
        }
    }

    pub fn by_class(&self, class: ErrorClass) -> u64 {
        Cause::ALL
            .into_iter()
            .filter(|c| classify_event(*c) == class)
            .map(|c| self.get(c))
            .sum()
    }
}
