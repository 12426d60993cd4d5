//! Numerical laboratory for the delayed monostable reaction-diffusion
//! equation `u_t = u_xx - u + g(u(t - h, x))`.

// `!(x > 0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dispersion;
pub mod envelopes;
pub mod error;
pub mod experiments;
pub mod model;
pub mod numeric;
pub mod scalar;
pub mod solver;
pub mod waves;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Real = f64;
pub type Birth = model::BirthFunction<f64>;
pub type Roots = dispersion::CharRoots<f64>;
pub type Selection = dispersion::SpeedSelection<f64>;
pub type Grid = solver::Grid1D<f64>;
pub type Profile = waves::WaveProfile<f64>;
