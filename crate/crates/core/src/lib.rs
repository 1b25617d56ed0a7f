//! Bayesian parameter inference for stochastic differential equations driven
//! by fractional Brownian motion.
//!
//! The library is organised bottom-up:
//!
//! * [`toeplitz`]: fGN autocovariance, Durbin-Levinson ladder, circulant
//!   products and fGN simulation.
//! * [`models`]: the fOU and fCIR models, Euler simulation and the exact fOU
//!   autocovariance.
//! * [`augment`]: level-`k` complete data and the Euler posterior potential
//!   with its gradient.
//! * [`samplers`]: Hybrid Monte Carlo, Metropolis-within-Gibbs and chain
//!   diagnostics.
//! * [`conjugate`]: regression-form posteriors, exact fOU marginals on
//!   parameter grids and the fCIR `k = 0` rejection sampler.

pub mod augment;
pub mod conjugate;
pub mod error;
pub mod models;
mod numeric;
pub mod samplers;
pub mod toeplitz;

pub use augment::{CompleteData, ParamState, PriorSpec};
pub use error::{Error, Result};
pub use models::{FcirParams, FouParams, SdeModel, Theta};
pub use toeplitz::{CholeskyLadder, FgnCovariance};
