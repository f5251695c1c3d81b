//! Numerics for mean-field interacting particle systems.
//!
//! The crate is `no_std` (it needs `alloc`) and is organised in four layers:
//!
//! - [`potentials`]: confinement `V` and interaction `W` with exact derivatives,
//!   built-in model families and the drift dissipativity profile `b0(r)`.
//! - [`constants`]: the explicit Lipschitzian spectral-gap constant `c_Lip,m`,
//!   off-diagonal Hessian bounds, uniform Poincaré and log-Sobolev bounds and
//!   the correlation-decay constant.
//! - [`particles`]: the `N`-particle Langevin system (Euler–Maruyama and MALA),
//!   autocovariance-based relaxation-rate estimates and pair covariances.
//! - [`meanfield`]: a 1-D finite-volume McKean–Vlasov solver together with the
//!   free energy, mean-field entropy, Fisher information and Wasserstein
//!   functionals evaluated along its trajectories.
//!
//! Supporting modules: [`quadrature`] (adaptive Gauss–Kronrod), [`rng`]
//! (Philox4x32-10 counter-based streams), [`linalg`] (small symmetric
//! eigenproblems) and [`stats`].
#![no_std]
// `!(x > 0.0)` is used on purpose so that NaN is rejected with the bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod constants;
mod error;
pub mod linalg;
pub mod meanfield;
pub mod particles;
pub mod potentials;
pub mod quadrature;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
