//! Probability densities for scalar stochastic delay differential equations.
//!
//! The problem: a scalar SDE whose drift and diffusion depend on the state one
//! fixed delay `tau` in the past,
//!
//! ```text
//! dX(t) = f(X(t), X(t - tau)) dt + g(X(t), X(t - tau)) dB(t),
//! X(t)  = gamma(-t)                        for -tau <= t <= 0.
//! ```
//!
//! The solution is not Markov, so its density has no Fokker-Planck equation of
//! its own. This crate computes the density anyway, by the method of steps:
//! the path on `[0, k*tau]` is rewritten as a `k`-dimensional delay-free SDE
//! whose component `i` tracks the path on its `i`-th delay segment. That
//! augmented system *is* Markov, its transition kernels `Q_k` solve an
//! ordinary Fokker-Planck equation, and the delay density is recovered by
//! composing the kernels with tensor quadrature.
//!
//! Modules, bottom-up:
//!
//! - [`model`]: the delay equation (affine drift/diffusion, polynomial
//!   history) and the augmented delay-free system built from it.
//! - [`analytic`]: closed-form kernels for the benchmark problem
//!   `dX = X(t-1) dt + dB` and a Gaussian moment-ODE oracle for affine
//!   additive-noise models; the precision references for everything else.
//! - [`fokker_planck`]: a finite-difference solver for the augmented
//!   system's transition kernels on tensor grids (k <= 3).
//! - [`kernel`]: the transition-kernel abstraction with analytic, grid-PDE
//!   and Monte Carlo backends.
//! - [`composition`]: the governing equations: kernel compositions giving
//!   the delay density at any time, plus bridge, joint, conditional and
//!   marginalized densities.
//! - [`montecarlo`]: an independent Euler-Maruyama oracle with
//!   reproducible counter-based noise.

// Comparisons written as `!(x > 0.0)` are deliberate: they reject NaN along
// with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod composition;
pub mod fokker_planck;
pub mod kernel;
pub mod model;
pub mod montecarlo;

mod error;

pub use error::{Error, Result};
