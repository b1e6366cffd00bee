use crate::error::{Error, Result};

/// One delivered status update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Delivery {
    pub generated: f64,
    pub delivered: f64,
}

/// Time-average and peak of the age sawtooth over `[0, horizon]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AoiSummary {
    pub mean: f64,
    pub max: f64,
}

/// Exact area under the age curve divided by `horizon`.
///
/// Age starts at zero (the initial state is known at `t = 0`) and grows with
/// unit slope; a delivery resets it to `delivered - generated` unless an
/// even fresher update is already held. Deliveries after `horizon` are
/// ignored.
pub fn aoi_time_average(log: &[Delivery], horizon: f64) -> Result<f64> {
    Ok(summarize(log, horizon)?.mean)
}

pub fn summarize(log: &[Delivery], horizon: f64) -> Result<AoiSummary> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::Contract(format!("horizon must be > 0, got {horizon}")));
    }
    let mut freshest = 0.0f64;
    let mut last_time = 0.0f64;
    let mut area = 0.0;
    let mut peak = 0.0f64;
    let mut prev_delivery = f64::NEG_INFINITY;
    for d in log {
        if !(d.delivered > prev_delivery) {
            return Err(Error::Contract(
                "delivery times must be strictly increasing".into(),
            ));
        }
        if !(d.generated <= d.delivered) {
            return Err(Error::Contract(format!(
                "update generated at {} delivered earlier at {}",
                d.generated, d.delivered
            )));
        }
        prev_delivery = d.delivered;
        if d.delivered > horizon {
            break;
        }
        let start_age = last_time - freshest;
        let end_age = d.delivered - freshest;
        area += 0.5 * (start_age + end_age) * (d.delivered - last_time);
        peak = peak.max(end_age);
        freshest = freshest.max(d.generated);
        last_time = d.delivered;
    }
    let start_age = last_time - freshest;
    let end_age = horizon - freshest;
    area += 0.5 * (start_age + end_age) * (horizon - last_time);
    peak = peak.max(end_age);
    Ok(AoiSummary {
        mean: area / horizon,
        max: peak,
    })
}
