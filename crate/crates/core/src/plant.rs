//! Point-mass cart-pole dynamics.
//!
//! The angle `theta` is measured from the upright position and is never
//! wrapped, so a pendulum that swings over accumulates angle continuously.

use nalgebra::{Matrix4, Vector4};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantParams {
    /// Cart mass (kg).
    pub cart_mass: f64,
    /// Pendulum point mass (kg).
    pub pole_mass: f64,
    /// Distance from pivot to the point mass (m).
    pub pole_length: f64,
    pub gravity: f64,
    /// Viscous cart friction (N s/m).
    pub cart_friction: f64,
    /// Actuator saturation magnitude (N), if any.
    pub force_limit: Option<f64>,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            cart_mass: 1.0,
            pole_mass: 0.1,
            pole_length: 1.0,
            gravity: 9.81,
            cart_friction: 0.1,
            force_limit: Some(20.0),
        }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<()> {
        positive("cart_mass", self.cart_mass)?;
        positive("pole_mass", self.pole_mass)?;
        positive("pole_length", self.pole_length)?;
        positive("gravity", self.gravity)?;
        if !(self.cart_friction.is_finite() && self.cart_friction >= 0.0) {
            return Err(invalid("cart_friction", "must be finite and >= 0"));
        }
        if let Some(limit) = self.force_limit {
            positive("force_limit", limit)?;
        }
        Ok(())
    }

    /// Clamp a commanded force to the actuator limit.
    pub fn saturate(&self, force: f64) -> f64 {
        match self.force_limit {
            Some(limit) => force.clamp(-limit, limit),
            None => force,
        }
    }
}

fn positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("must be finite and > 0, got {value}")))
    }
}

/// Cart-pole state `[q, theta, q_dot, theta_dot]`.
///
/// The same type carries time derivatives, in which case the fields hold
/// `[q_dot, theta_dot, q_ddot, theta_ddot]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlantState {
    pub q: f64,
    pub theta: f64,
    pub q_dot: f64,
    pub theta_dot: f64,
}

impl PlantState {
    pub const fn new(q: f64, theta: f64, q_dot: f64, theta_dot: f64) -> Self {
        Self {
            q,
            theta,
            q_dot,
            theta_dot,
        }
    }

    pub fn to_vector(self) -> Vector4<f64> {
        Vector4::new(self.q, self.theta, self.q_dot, self.theta_dot)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn is_finite(&self) -> bool {
        self.q.is_finite()
            && self.theta.is_finite()
            && self.q_dot.is_finite()
            && self.theta_dot.is_finite()
    }

    fn axpy(self, h: f64, rate: PlantState) -> Self {
        Self::new(
            self.q + h * rate.q,
            self.theta + h * rate.theta,
            self.q_dot + h * rate.q_dot,
            self.theta_dot + h * rate.theta_dot,
        )
    }
}

/// Periodic rectangular pulse used as the cart position reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceSignal {
    pub period: f64,
    /// Fraction of the period spent at `high`; the high phase comes first.
    pub duty: f64,
    pub low: f64,
    pub high: f64,
}

impl Default for ReferenceSignal {
    fn default() -> Self {
        Self {
            period: 20.0,
            duty: 0.4,
            low: 0.0,
            high: 5.0,
        }
    }
}

impl ReferenceSignal {
    pub fn validate(&self) -> Result<()> {
        positive("period", self.period)?;
        if !(0.0..=1.0).contains(&self.duty) {
            return Err(invalid("duty", format!("must lie in [0, 1], got {}", self.duty)));
        }
        if !self.low.is_finite() {
            return Err(invalid("low", "must be finite"));
        }
        if !self.high.is_finite() {
            return Err(invalid("high", "must be finite"));
        }
        Ok(())
    }
}

/// Continuous-time linearization `x' = A x + B u` with rows `[q, theta, q_dot, theta_dot]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearModel {
    pub a: Matrix4<f64>,
    pub b: Vector4<f64>,
}

/// Time derivative of the state under a constant, already saturated force.
pub fn derivative(state: &PlantState, force: f64, params: &PlantParams) -> PlantState {
    let PlantParams {
        cart_mass: big_m,
        pole_mass: m,
        pole_length: l,
        gravity: g,
        cart_friction: b,
        ..
    } = *params;
    let (s, c) = state.theta.sin_cos();
    let q_ddot = (force - b * state.q_dot + m * l * state.theta_dot * state.theta_dot * s
        - m * g * s * c)
        / (big_m + m * s * s);
    let theta_ddot = (g * s - q_ddot * c) / l;
    PlantState::new(state.q_dot, state.theta_dot, q_ddot, theta_ddot)
}

/// One classical Runge-Kutta step with the force held over `dt`.
pub fn step(state: &PlantState, force: f64, dt: f64, params: &PlantParams) -> Result<PlantState> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(invalid("dt", format!("must be finite and > 0, got {dt}")));
    }
    let k1 = derivative(state, force, params);
    let k2 = derivative(&state.axpy(0.5 * dt, k1), force, params);
    let k3 = derivative(&state.axpy(0.5 * dt, k2), force, params);
    let k4 = derivative(&state.axpy(dt, k3), force, params);
    let next = PlantState::new(
        state.q + dt / 6.0 * (k1.q + 2.0 * k2.q + 2.0 * k3.q + k4.q),
        state.theta + dt / 6.0 * (k1.theta + 2.0 * k2.theta + 2.0 * k3.theta + k4.theta),
        state.q_dot + dt / 6.0 * (k1.q_dot + 2.0 * k2.q_dot + 2.0 * k3.q_dot + k4.q_dot),
        state.theta_dot
            + dt / 6.0 * (k1.theta_dot + 2.0 * k2.theta_dot + 2.0 * k3.theta_dot + k4.theta_dot),
    );
    if next.is_finite() {
        Ok(next)
    } else {
        Err(Error::IntegrationDiverged { time: dt })
    }
}

/// Integrate over `duration` with `substeps` equal RK4 steps.
pub fn integrate(
    state: &PlantState,
    force: f64,
    duration: f64,
    substeps: usize,
    params: &PlantParams,
) -> Result<PlantState> {
    let h = duration / substeps as f64;
    let mut x = *state;
    for _ in 0..substeps {
        x = step(&x, force, h, params)?;
    }
    Ok(x)
}

/// Reference position at time `t`: `high` on `[0, duty*period)` of each period, else `low`.
pub fn reference(signal: &ReferenceSignal, t: f64) -> f64 {
    let phase = t.rem_euclid(signal.period);
    if phase < signal.duty * signal.period {
        signal.high
    } else {
        signal.low
    }
}

/// Jacobian of [`derivative`] at the upright equilibrium.
pub fn linearize(params: &PlantParams) -> LinearModel {
    let big_m = params.cart_mass;
    let m = params.pole_mass;
    let l = params.pole_length;
    let g = params.gravity;
    let b = params.cart_friction;
    #[rustfmt::skip]
    let a = Matrix4::new(
        0.0, 0.0,                          1.0,              0.0,
        0.0, 0.0,                          0.0,              1.0,
        0.0, -m * g / big_m,               -b / big_m,       0.0,
        0.0, (big_m + m) * g / (big_m * l), b / (big_m * l), 0.0,
    );
    let b = Vector4::new(0.0, 0.0, 1.0 / big_m, -1.0 / (big_m * l));
    LinearModel { a, b }
}

/// Kinetic plus potential energy, with zero potential at the upright position.
pub fn total_energy(state: &PlantState, params: &PlantParams) -> f64 {
    let big_m = params.cart_mass;
    let m = params.pole_mass;
    let l = params.pole_length;
    let (s, c) = state.theta.sin_cos();
    let vx = state.q_dot + l * state.theta_dot * c;
    let vy = l * state.theta_dot * s;
    0.5 * big_m * state.q_dot * state.q_dot
        + 0.5 * m * (vx * vx + vy * vy)
        + m * params.gravity * l * (c - 1.0)
}
