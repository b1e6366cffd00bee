//! Co-simulation of an inverted pendulum on a cart, stabilized by an LQR
//! controller whose sensor uplink and actuator downlink are lossy
//! finite-blocklength AWGN links.
//!
//! The crate is organized bottom-up:
//!
//! - [`plant`]: nonlinear cart-pole dynamics, RK4 integration, reference pulse, linearization.
//! - [`lincontrol`]: zero-order-hold discretization, Riccati value iteration, gains.
//! - [`fblchannel`]: capacity, dispersion, normal-approximation packet error rate, loss sampling.
//! - [`coloop`]: one closed-loop episode with age-of-information tracking and error events.
//! - [`campaign`]: Monte-Carlo sweeps over the control interval and performance-space filtering.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod campaign;
pub mod coloop;
mod error;
pub mod fblchannel;
pub mod lincontrol;
pub mod plant;

pub use error::{Error, Result};
