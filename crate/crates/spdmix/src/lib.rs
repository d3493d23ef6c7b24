//! Risk-neutral state price density estimation from European call quotes.
//!
//! The terminal-price density is modeled as a finite mixture of lognormals
//! and fitted by simplex-constrained weighted least squares: equispaced
//! mean initialization, a quadratic program for the mixing weights, damped
//! Gauss-Newton refinement of the means, and leave-one-out cross validation
//! for the component scale. Closed-form pricing, analytic strike
//! derivatives, reference baselines and a seeded Monte Carlo study harness
//! round out the library; the `spdmix` binary wires them into a CLI.

// Validation deliberately writes `!(x > 0.0)` so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod error;
pub mod estimator;
pub mod io;
pub mod math;
pub mod pricing;
pub mod qp;
pub mod simulation;

pub use error::{Result, SpdError};
pub use estimator::{fit, FitConfig, FitResult, Quote, WeightMode};
pub use pricing::{MarketContext, MixtureComponent, MixtureModel};
