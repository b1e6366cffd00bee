//! Sampled-data LQR design.
//!
//! Matrices are dynamically sized so the same routines serve the 4-state
//! cart-pole, its latency-augmented model and scalar test plants. All
//! models are single-input.

use nalgebra::{DMatrix, DVector, Schur};

use crate::error::{invalid, Error, Result};
use crate::plant::{linearize, LinearModel, PlantParams, PlantState};

pub const DEFAULT_RICCATI_TOL: f64 = 1e-10;
pub const DEFAULT_RICCATI_MAX_ITER: usize = 1_000_000;

/// Zero-order-hold model `x[k+1] = ad x[k] + bd u[k]` sampled every `t_ctr` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteModel {
    pub ad: DMatrix<f64>,
    /// Input column (n x 1).
    pub bd: DMatrix<f64>,
    pub t_ctr: f64,
}

impl DiscreteModel {
    pub fn dim(&self) -> usize {
        self.ad.nrows()
    }
}

/// Diagonal state weights and scalar input weight of the LQR objective.
///
/// When the model has more states than `state_weights` entries, the extra
/// states get zero weight.
#[derive(Debug, Clone, PartialEq)]
pub struct LqrWeights {
    pub state_weights: Vec<f64>,
    pub control_weight: f64,
}

impl Default for LqrWeights {
    fn default() -> Self {
        Self {
            state_weights: vec![0.5, 0.5, 0.0, 0.0],
            control_weight: 0.5,
        }
    }
}

impl LqrWeights {
    pub fn validate(&self) -> Result<()> {
        if self.state_weights.is_empty()
            || self.state_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0))
        {
            return Err(invalid("state_weights", "entries must be finite and >= 0"));
        }
        if !self.state_weights.iter().any(|w| *w > 0.0) {
            return Err(invalid("state_weights", "at least one entry must be > 0"));
        }
        if !(self.control_weight.is_finite() && self.control_weight > 0.0) {
            return Err(invalid("control_weight", "must be finite and > 0"));
        }
        Ok(())
    }

    fn q_matrix(&self, n: usize) -> Result<DMatrix<f64>> {
        if self.state_weights.len() > n {
            return Err(invalid(
                "state_weights",
                format!("{} weights for a {n}-state model", self.state_weights.len()),
            ));
        }
        let mut q = DMatrix::zeros(n, n);
        for (i, w) in self.state_weights.iter().enumerate() {
            q[(i, i)] = *w;
        }
        Ok(q)
    }
}

/// Feedback row `u = -k z`.
///
/// For the cart-pole the first four entries act on `[q, theta, q_dot, theta_dot]`;
/// any further entries act on the commands still in flight to the actuator.
#[derive(Debug, Clone, PartialEq)]
pub struct Gain {
    k: Vec<f64>,
}

impl Gain {
    pub fn new(k: Vec<f64>) -> Self {
        Self { k }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.k
    }

    pub fn latency_len(&self) -> usize {
        self.k.len().saturating_sub(4)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LqrDesign {
    pub gain: Gain,
    /// Converged Riccati solution.
    pub cost_to_go: DMatrix<f64>,
    pub iterations: usize,
    /// Spectral radius of `ad - bd k`.
    pub spectral_radius: f64,
}

/// Exact zero-order-hold discretization of the cart-pole linearization.
pub fn discretize(model: &LinearModel, t_ctr: f64) -> Result<DiscreteModel> {
    let a = DMatrix::from_iterator(4, 4, model.a.iter().copied());
    let b = DMatrix::from_iterator(4, 1, model.b.iter().copied());
    zero_order_hold(&a, &b, t_ctr)
}

/// `ad = exp(a t)`, `bd = (int_0^t exp(a s) ds) b`, read off the exponential of
/// the block matrix `[[a, b], [0, 0]] t`.
pub fn zero_order_hold(a: &DMatrix<f64>, b: &DMatrix<f64>, t_ctr: f64) -> Result<DiscreteModel> {
    if !(t_ctr.is_finite() && t_ctr > 0.0) {
        return Err(invalid("t_ctr", format!("must be finite and > 0, got {t_ctr}")));
    }
    let n = a.nrows();
    let mut block = DMatrix::zeros(n + 1, n + 1);
    block.view_mut((0, 0), (n, n)).copy_from(a);
    block.view_mut((0, n), (n, 1)).copy_from(b);
    let e = expm(&(block * t_ctr))?;
    Ok(DiscreteModel {
        ad: e.view((0, 0), (n, n)).into_owned(),
        bd: e.view((0, n), (n, 1)).into_owned(),
        t_ctr,
    })
}

/// Matrix exponential by scaling and squaring of a truncated Taylor series.
///
/// The series is summed until the next term falls below `1e-17` of the
/// partial sum in 1-norm; the scaled argument has norm at most 1/2, so the
/// remainder is bounded by twice the last term.
fn expm(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let norm = one_norm(m);
    if !norm.is_finite() {
        return Err(Error::DiscretizationFailed);
    }
    let mut squarings = 0u32;
    let mut scale = 1.0;
    while norm * scale > 0.5 {
        scale *= 0.5;
        squarings += 1;
    }
    let x = m * scale;
    let n = m.nrows();
    let mut sum = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for j in 1..64 {
        term = &term * &x / j as f64;
        sum += &term;
        if one_norm(&term) <= 1e-17 * one_norm(&sum) {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    if sum.iter().all(|v| v.is_finite()) {
        Ok(sum)
    } else {
        Err(Error::DiscretizationFailed)
    }
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Extend a model with the `delay_periods` commands that are in flight between
/// the controller and the actuator.
///
/// State `[x, w_1, .., w_d]`, where `w_1` drives the current period and the
/// fresh input enters as `w_d` on the next step.
pub fn augment_latency(model: &DiscreteModel, delay_periods: usize) -> DiscreteModel {
    if delay_periods == 0 {
        return model.clone();
    }
    let n = model.dim();
    let total = n + delay_periods;
    let mut ad = DMatrix::zeros(total, total);
    ad.view_mut((0, 0), (n, n)).copy_from(&model.ad);
    ad.view_mut((0, n), (n, 1)).copy_from(&model.bd);
    for i in 0..delay_periods - 1 {
        ad[(n + i, n + i + 1)] = 1.0;
    }
    let mut bd = DMatrix::zeros(total, 1);
    bd[(total - 1, 0)] = 1.0;
    DiscreteModel {
        ad,
        bd,
        t_ctr: model.t_ctr,
    }
}

/// One Riccati value-iteration map.
pub fn riccati_update(
    model: &DiscreteModel,
    q: &DMatrix<f64>,
    r: f64,
    p: &DMatrix<f64>,
) -> DMatrix<f64> {
    let k = feedback_row(model, r, p);
    let closed = &model.ad - &model.bd * &k;
    // equal to Q + A'PA - A'PB (R + B'PB)^-1 B'PA, written as a sum of PSD terms
    q + k.transpose() * &k * r + closed.transpose() * p * &closed
}

fn feedback_row(model: &DiscreteModel, r: f64, p: &DMatrix<f64>) -> DMatrix<f64> {
    let b = &model.bd;
    let denom = r + (b.transpose() * p * b)[(0, 0)];
    (b.transpose() * p * &model.ad) / denom
}

/// Discrete LQR via fixed-point iteration of the Riccati map from `P0 = Q`.
///
/// Iteration stops once the largest entry change is below `tol * max(1, max|P|)`.
pub fn lqr_gain(
    model: &DiscreteModel,
    weights: &LqrWeights,
    tol: f64,
    max_iter: usize,
) -> Result<LqrDesign> {
    weights.validate()?;
    if !(tol.is_finite() && tol > 0.0) {
        return Err(invalid("tol", "must be finite and > 0"));
    }
    let q = weights.q_matrix(model.dim())?;
    let r = weights.control_weight;
    let mut p = q.clone();
    let mut iterations = 0;
    loop {
        if iterations >= max_iter {
            return Err(Error::RiccatiNoConvergence { iterations });
        }
        let next = riccati_update(model, &q, r, &p);
        let next = (&next + next.transpose()) * 0.5;
        iterations += 1;
        if !next.iter().all(|v| v.is_finite() && v.abs() < 1e100) {
            return Err(Error::RiccatiNoConvergence { iterations });
        }
        let change = (&next - &p).amax();
        let scale = next.amax().max(1.0);
        p = next;
        if change < tol * scale {
            break;
        }
    }
    let k = feedback_row(model, r, &p);
    let closed = &model.ad - &model.bd * &k;
    let rho = spectral_radius(&closed)?;
    if rho >= 1.0 {
        return Err(Error::UnstableDesign {
            spectral_radius: rho,
        });
    }
    Ok(LqrDesign {
        gain: Gain::new(k.iter().copied().collect()),
        cost_to_go: p,
        iterations,
        spectral_radius: rho,
    })
}

/// Largest eigenvalue modulus, from a real Schur decomposition.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::Numeric);
    }
    let schur = Schur::try_new(m.clone(), 1e-15, 100_000).ok_or(Error::Numeric)?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

/// Design the cart-pole gain for one control interval.
///
/// With `latency_compensation` the Riccati problem is posed on the model
/// augmented with `delay_periods` in-flight commands; otherwise it is the
/// plain 4-state problem.
pub fn design_controller(
    plant: &PlantParams,
    t_ctr: f64,
    weights: &LqrWeights,
    delay_periods: usize,
    latency_compensation: bool,
) -> Result<LqrDesign> {
    let model = discretize(&linearize(plant), t_ctr)?;
    let model = if latency_compensation {
        augment_latency(&model, delay_periods)
    } else {
        model
    };
    lqr_gain(
        &model,
        weights,
        DEFAULT_RICCATI_TOL,
        DEFAULT_RICCATI_MAX_ITER,
    )
}

/// `u = -K_x (x - [r, 0, 0, 0]) - K_w w`, clamped to `force_limit`.
///
/// `in_flight` holds the commands already sent but not yet driving the
/// plant, oldest first; it must match the gain's latency part.
pub fn control_force(
    gain: &Gain,
    state_estimate: &PlantState,
    r: f64,
    in_flight: &[f64],
    force_limit: Option<f64>,
) -> f64 {
    let k = gain.as_slice();
    debug_assert_eq!(k.len(), 4 + in_flight.len());
    let err = DVector::from_column_slice(&[
        state_estimate.q - r,
        state_estimate.theta,
        state_estimate.q_dot,
        state_estimate.theta_dot,
    ]);
    let mut u = -k[..4].iter().zip(err.iter()).map(|(a, b)| a * b).sum::<f64>();
    u -= k[4..].iter().zip(in_flight).map(|(a, b)| a * b).sum::<f64>();
    match force_limit {
        Some(limit) => u.clamp(-limit, limit),
        None => u,
    }
}
