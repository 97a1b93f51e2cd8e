//! Evaluation and optimization of the saddle-point variational formula for
//! the limiting free energy of a particle in a high-dimensional Gaussian
//! random potential with isotropic increments, together with desk-scale
//! Monte Carlo verification of the structures it is built from.
//!
//! Modules follow the pipeline:
//!
//! * [`correlator`] — admissible increment-variance functions and all
//!   derived scalar quantities, in closed form.
//! * [`model`] — state spaces, a priori measures, discrete order
//!   parameters, boundary conditions and the theta Stieltjes sum.
//! * [`parisi`] — the terminal value problem (recursion and
//!   finite-difference solvers), the lambda infimum, and the regularized
//!   local functional.
//! * [`saddle`] — the sup-inf variational principle over radius and order
//!   parameter.
//! * [`crisanti_sommers`] — the closed-form functional for the rotationally
//!   invariant state space and its max-min.
//! * [`cascades`] — Ruelle probability cascades, cavity fields, averaging
//!   identities.
//! * [`montecarlo`] — exact small-N sampling of the potential, enumeration
//!   of the partition function, concentration and upper-bound checks.
//! * [`config`], [`report`], [`verify`] — the CLI-facing plumbing and the
//!   acceptance suite.

pub mod cascades;
pub mod config;
pub mod correlator;
pub mod crisanti_sommers;
pub mod error;
pub mod model;
pub mod montecarlo;
pub mod numerics;
pub mod optim;
pub mod parisi;
pub mod report;
pub mod saddle;
pub mod verify;

pub use correlator::{Correlator, CorrelatorSpec};
pub use error::{Error, Result};
pub use model::{DiscreteOrderParameter, StateSpace};
pub use parisi::EvalConfig;
pub use saddle::SaddleResult;
