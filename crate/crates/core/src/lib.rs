//! Hitting-time laws of the winding process of planar Brownian motion and
//! complex Ornstein-Uhlenbeck processes.
//!
//! * [`numerics`]: log-Gamma, the Whittaker `M_{1/2,ν}` series and a
//!   double-exponential rule on `(0, ∞)`.
//! * [`laws`]: closed-form densities, Laplace transforms, moments and
//!   asymptotic constants.
//! * [`paths`]: exact-in-law samplers built on the skew-product
//!   representation, plus direct simulators used as oracles.
//! * [`verify`]: KS and moment checks, and the acceptance suite.

pub mod error;
pub mod laws;
pub mod numerics;
pub mod paths;
pub mod verify;

pub use error::{Error, Result};
