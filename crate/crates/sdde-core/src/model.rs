//! The delay equation and its delay-free augmentation.
//!
//! A problem instance is the scalar SDDE
//!
//! ```text
//! dX(t) = f(X(t), X(t - tau)) dt + g(X(t), X(t - tau)) dB(t),
//! X(t)  = gamma(-t)   for -tau <= t <= 0,
//! ```
//!
//! restricted to the affine family `f(x, y) = a*x + b*y + c`,
//! `g(x, y) = s0 + s1*x + s2*y`, with polynomial history `gamma`. The affine
//! family covers the benchmark problem exactly, admits a closed-form Gaussian
//! oracle when the noise is additive, and keeps the ellipticity check on a
//! rectangle decidable (affine functions attain extrema at vertices).
//!
//! [`AugmentedSystem`] is the k-dimensional delay-free SDE whose component
//! `i` follows the delay path on its `i`-th segment: on segment time
//! `t' ∈ [0, tau]`, component 1 sees the history `gamma(tau - t')` in the
//! delayed slot, and component `i >= 2` sees component `i - 1`. Each
//! component is driven by its own independent Brownian motion.

use crate::{Error, Result};

/// Polynomial history `gamma(s) = sum_j coeffs[j] * s^j`, defined on `[0, tau]`.
///
/// `gamma(s)` gives the value of the path at time `-s`; `gamma(0)` is the
/// initial point shared by the delay equation and the augmented system.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryFunction {
    coeffs: Vec<f64>,
}

impl HistoryFunction {
    pub fn new(coeffs: Vec<f64>) -> Self {
        let coeffs = if coeffs.is_empty() { vec![0.0] } else { coeffs };
        Self { coeffs }
    }

    /// The identically-zero history.
    pub fn zero() -> Self {
        Self::new(vec![0.0])
    }

    pub fn constant(value: f64) -> Self {
        Self::new(vec![value])
    }

    /// Raw polynomial evaluation (Horner); no range check.
    pub fn eval(&self, s: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * s + c)
    }

    /// `gamma(0)`, the initial value of the path.
    pub fn gamma0(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Range of `gamma` over `[0, tau]`, bracketed by dense sampling.
    ///
    /// Exact for constant and linear histories; for higher degrees the 257
    /// sample points bound the range to well below solver tolerances.
    pub fn range_on(&self, tau: f64) -> (f64, f64) {
        let n = 257;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let s = tau * i as f64 / (n - 1) as f64;
            let v = self.eval(s);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }
}

/// A scalar SDDE with affine coefficients and one discrete delay.
#[derive(Debug, Clone, PartialEq)]
pub struct SddeModel {
    /// Coefficient of `X(t)` in the drift.
    pub a: f64,
    /// Coefficient of `X(t - tau)` in the drift.
    pub b: f64,
    /// Constant drift.
    pub c: f64,
    /// Constant diffusion term.
    pub s0: f64,
    /// Coefficient of `X(t)` in the diffusion.
    pub s1: f64,
    /// Coefficient of `X(t - tau)` in the diffusion.
    pub s2: f64,
    /// The delay, in time units. Strictly positive.
    pub tau: f64,
    /// Path on `[-tau, 0]`, as `gamma(s) = X(-s)`.
    pub history: HistoryFunction,
}

impl SddeModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: f64,
        b: f64,
        c: f64,
        s0: f64,
        s1: f64,
        s2: f64,
        tau: f64,
        history: HistoryFunction,
    ) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::NonPositiveDelay(tau));
        }
        Ok(Self { a, b, c, s0, s1, s2, tau, history })
    }

    /// Drift `f(x, y) = a*x + b*y + c`, `y` the delayed state.
    #[inline]
    pub fn drift(&self, x: f64, y: f64) -> f64 {
        self.a * x + self.b * y + self.c
    }

    /// Diffusion `g(x, y) = s0 + s1*x + s2*y`.
    #[inline]
    pub fn diffusion(&self, x: f64, y: f64) -> f64 {
        self.s0 + self.s1 * x + self.s2 * y
    }

    pub fn gamma0(&self) -> f64 {
        self.history.gamma0()
    }

    /// Evaluate the history at `s ∈ [0, tau]`.
    pub fn history_eval(&self, s: f64) -> Result<f64> {
        if !(0.0..=self.tau).contains(&s) {
            return Err(Error::HistoryOutOfRange { s, tau: self.tau });
        }
        Ok(self.history.eval(s))
    }

    /// True when the noise does not depend on the state (`s1 = s2 = 0`),
    /// which is when the augmented system has Gaussian transition kernels.
    pub fn is_additive_noise(&self) -> bool {
        self.s1 == 0.0 && self.s2 == 0.0
    }

    /// Check the uniform-ellipticity hypothesis `g >= eps > 0` on a
    /// rectangle, reporting the minimum of `g`.
    ///
    /// `domain` lists per-axis `(min, max)` bounds of the grid rectangle the
    /// solver will use. Both arguments of `g` range over the union of the
    /// axis bounds; the delayed slot additionally ranges over the history
    /// values seen by segment 1. `g` is affine, so the minimum over the
    /// rectangle is attained at the candidate extremes.
    pub fn validate_ellipticity(&self, domain: &[(f64, f64)]) -> EllipticityReport {
        let mut xs: Vec<f64> = Vec::with_capacity(2 * domain.len());
        for &(lo, hi) in domain {
            xs.push(lo);
            xs.push(hi);
        }
        if xs.is_empty() {
            xs.push(0.0);
        }
        let mut ys = xs.clone();
        let (glo, ghi) = self.history.range_on(self.tau);
        ys.push(glo);
        ys.push(ghi);

        let mut min_g = f64::INFINITY;
        for &x in &xs {
            for &y in &ys {
                min_g = min_g.min(self.diffusion(x, y));
            }
        }
        EllipticityReport { min_diffusion: min_g, flagged: min_g <= 0.0, history_smooth: true }
    }
}

/// Result of [`SddeModel::validate_ellipticity`]. Report-only; solvers refuse
/// to run on a flagged model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipticityReport {
    /// Minimum of the diffusion coefficient over the checked domain.
    pub min_diffusion: f64,
    /// True when the minimum is not strictly positive.
    pub flagged: bool,
    /// Polynomial histories are smooth; always true, recorded for the report.
    pub history_smooth: bool,
}

impl std::fmt::Display for EllipticityReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "min g = {:.6e}, ellipticity {}, history C1: {}",
            self.min_diffusion,
            if self.flagged { "VIOLATED" } else { "ok" },
            self.history_smooth,
        )
    }
}

/// The k-segment delay-free system associated with an [`SddeModel`].
///
/// State is `(x_1, ..., x_k)`, segment time `t'` runs over `[0, tau]`.
/// Component 1 sees `gamma(tau - t')` in the delayed slot, component
/// `i >= 2` sees `x_{i-1}`; the noise channels are independent, so the
/// diffusion is diagonal and this type only ever reports its diagonal.
#[derive(Debug, Clone)]
pub struct AugmentedSystem {
    model: SddeModel,
    k: usize,
}

impl AugmentedSystem {
    /// Build the k-fold augmentation. Rejects `k < 1`.
    pub fn new(model: SddeModel, k: usize) -> Result<Self> {
        if k < 1 {
            return Err(Error::ZeroSegments);
        }
        Ok(Self { model, k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn model(&self) -> &SddeModel {
        &self.model
    }

    pub fn tau(&self) -> f64 {
        self.model.tau
    }

    /// The delayed argument seen by component `i` (0-based) at segment time
    /// `t'`: history for the first component, the previous component
    /// otherwise.
    #[inline]
    pub fn delayed_argument(&self, i: usize, state: &[f64], t_prime: f64) -> f64 {
        if i == 0 {
            self.model.history.eval(self.model.tau - t_prime)
        } else {
            state[i - 1]
        }
    }

    /// Drift component `i` (0-based) without allocating.
    #[inline]
    pub fn drift_component(&self, i: usize, state: &[f64], t_prime: f64) -> f64 {
        self.model.drift(state[i], self.delayed_argument(i, state, t_prime))
    }

    /// Diagonal diffusion component `i` (0-based) without allocating.
    #[inline]
    pub fn diffusion_component(&self, i: usize, state: &[f64], t_prime: f64) -> f64 {
        self.model.diffusion(state[i], self.delayed_argument(i, state, t_prime))
    }

    /// Full drift vector at `state`, `t'`.
    pub fn drift(&self, state: &[f64], t_prime: f64) -> Result<Vec<f64>> {
        self.check_state(state)?;
        Ok((0..self.k).map(|i| self.drift_component(i, state, t_prime)).collect())
    }

    /// Diagonal of the diffusion matrix at `state`, `t'`.
    pub fn diffusion(&self, state: &[f64], t_prime: f64) -> Result<Vec<f64>> {
        self.check_state(state)?;
        Ok((0..self.k).map(|i| self.diffusion_component(i, state, t_prime)).collect())
    }

    fn check_state(&self, state: &[f64]) -> Result<()> {
        if state.len() != self.k {
            return Err(Error::DimensionMismatch { expected: self.k, got: state.len() });
        }
        Ok(())
    }
}
