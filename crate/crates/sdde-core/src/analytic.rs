//! Closed-form kernels and Gaussian oracles.
//!
//! Two precision references live here:
//!
//! - the benchmark problem `dX(t) = X(t-1) dt + dB(t)` with zero history,
//!   whose one- and two-segment transition kernels and whose delay density
//!   are known in closed form ([`benchmark`]);
//! - a moment-ODE oracle for any affine model with additive noise
//!   (`s1 = s2 = 0`): the augmented system is then linear with deterministic
//!   forcing, its transition kernel is exactly Gaussian, and integrating the
//!   mean and covariance ODEs gives that kernel to far below every tolerance
//!   used elsewhere ([`gaussian_kernel_via_moments`]).
//!
//! The oracle is deliberately restricted to additive noise: with
//! multiplicative noise the kernel is not Gaussian and the oracle must never
//! silently approximate.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::model::{AugmentedSystem, SddeModel};
use crate::{Error, Result};

/// Scalar Gaussian density with the given mean and variance.
#[inline]
pub fn gaussian1d(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    (-d * d / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

/// The scalar heat kernel: density at `x` of a standard Brownian motion at
/// time `t` started from `y` at time `s`,
/// `(2 pi (t-s))^{-1/2} exp(-(x-y)^2 / (2(t-s)))`.
pub fn heat_kernel(x: f64, t: f64, y: f64, s: f64) -> Result<f64> {
    if !(t > s) {
        return Err(Error::TimeOutOfRange { t, lo: s, hi: f64::INFINITY });
    }
    Ok(gaussian1d(x, y, t - s))
}

/// The benchmark problem: `dX(t) = X(t-1) dt + dB(t)`, `X(t) = 0` on
/// `[-1, 0]`, together with its closed-form kernels and exact delay density.
pub mod benchmark {
    use super::*;
    use crate::model::HistoryFunction;

    /// The benchmark model: `a = c = 0`, `b = 1`, unit additive noise,
    /// `tau = 1`, zero history.
    pub fn model() -> SddeModel {
        SddeModel::new(0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0, HistoryFunction::zero())
            .expect("benchmark model is valid")
    }

    /// One-segment transition kernel `Q_1(x; t | y; s)`.
    ///
    /// Segment 1 of the benchmark augmentation has zero drift (the history
    /// vanishes) and unit noise, so `Q_1` is the heat kernel.
    pub fn q1(x: f64, t: f64, y: f64, s: f64) -> Result<f64> {
        heat_kernel(x, t, y, s)
    }

    /// Two-segment transition kernel `Q_2(x1, x2; t | y1, y2; s)`.
    ///
    /// Evaluates the closed form directly. Equivalently this is the bivariate
    /// Gaussian with mean `(y1, y2 + y1*(t-s))` and covariance
    /// `[[D, D^2/2], [D^2/2, D^3/3 + D]]`, `D = t - s`; the algebraic
    /// identity between the two routes is checked in tests.
    pub fn q2(x1: f64, x2: f64, t: f64, y1: f64, y2: f64, s: f64) -> Result<f64> {
        let d = t - s;
        if !(d > 0.0) {
            return Err(Error::TimeOutOfRange { t, lo: s, hi: f64::INFINITY });
        }
        let u1 = x1 - y1;
        let u2 = x2 - y2 - y1 * d;
        let prefactor = 1.0 / (2.0 * PI * d * ((d * d + 12.0) / 12.0).sqrt());
        let coef = (2.0 * d * d + 6.0) / (d * d + 12.0);
        let quad = u1 * u1 / d - 3.0 * u1 * u2 / (d * d + 3.0)
            + 3.0 * u2 * u2 / (d * d * d + 3.0 * d);
        Ok(prefactor * (-coef * quad).exp())
    }

    /// Exact delay density of the benchmark problem on `0 < t <= 2`:
    /// `N(0, t)` on the first segment and `N(0, (t^3 + 2)/3)` on the second.
    pub fn exact_density(x: f64, t: f64) -> Result<f64> {
        if !(t > 0.0 && t <= 2.0) {
            return Err(Error::TimeOutOfRange { t, lo: 0.0, hi: 2.0 });
        }
        let var = if t <= 1.0 { t } else { (t * t * t + 2.0) / 3.0 };
        Ok(gaussian1d(x, 0.0, var))
    }

    /// Variance of the exact benchmark density at time `t`.
    pub fn exact_variance(t: f64) -> Result<f64> {
        if !(t > 0.0 && t <= 2.0) {
            return Err(Error::TimeOutOfRange { t, lo: 0.0, hi: 2.0 });
        }
        Ok(if t <= 1.0 { t } else { (t * t * t + 2.0) / 3.0 })
    }
}

/// A Gaussian transition kernel `u | v ~ N(M v + mu, Sigma)`.
///
/// `M` is the mean map from the conditioning point, `mu` a deterministic
/// offset, `Sigma` the (symmetric positive-definite) covariance.
#[derive(Debug, Clone)]
pub struct GaussianKernel {
    k: usize,
    mean_map: DMatrix<f64>,
    offset: DVector<f64>,
    cov: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    log_norm: f64,
}

impl GaussianKernel {
    pub fn new(mean_map: DMatrix<f64>, offset: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let k = offset.len();
        if mean_map.nrows() != k || mean_map.ncols() != k || cov.nrows() != k || cov.ncols() != k {
            return Err(Error::DimensionMismatch { expected: k, got: mean_map.nrows() });
        }
        let sym_defect = (&cov - cov.transpose()).abs().max();
        if !sym_defect.is_finite() || sym_defect > 1e-9 * (1.0 + cov.abs().max()) {
            return Err(Error::CovarianceNotSpd);
        }
        let chol = Cholesky::new(cov.clone()).ok_or(Error::CovarianceNotSpd)?;
        let det = chol.determinant();
        if !(det > 0.0) {
            return Err(Error::CovarianceNotSpd);
        }
        let log_norm = -0.5 * (k as f64 * (2.0 * PI).ln() + det.ln());
        Ok(Self { k, mean_map, offset, cov, chol, log_norm })
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn mean_map(&self) -> &DMatrix<f64> {
        &self.mean_map
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.offset
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Mean of the kernel conditioned on `v`.
    pub fn mean(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.k {
            return Err(Error::DimensionMismatch { expected: self.k, got: v.len() });
        }
        let v = DVector::from_column_slice(v);
        Ok((&self.mean_map * v + &self.offset).as_slice().to_vec())
    }

    /// Density at `u` given conditioning point `v`.
    pub fn density(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        if u.len() != self.k || v.len() != self.k {
            return Err(Error::DimensionMismatch { expected: self.k, got: u.len().min(v.len()) });
        }
        let v = DVector::from_column_slice(v);
        let mean = &self.mean_map * v + &self.offset;
        let d = DVector::from_column_slice(u) - mean;
        let sol = self.chol.solve(&d);
        let quad = d.dot(&sol);
        Ok((self.log_norm - 0.5 * quad).exp())
    }
}

/// Drift matrix `A` of the augmented system: the state-dependent part of the
/// affine drift. Row 0 couples only to itself; row `i >= 1` couples to itself
/// (`a`) and to the previous component (`b`).
fn drift_matrix(model: &SddeModel, k: usize) -> DMatrix<f64> {
    let mut a_mat = DMatrix::zeros(k, k);
    for i in 0..k {
        a_mat[(i, i)] = model.a;
        if i > 0 {
            a_mat[(i, i - 1)] = model.b;
        }
    }
    a_mat
}

/// Exact-in-distribution Gaussian transition kernel of an additive-noise
/// affine augmented system, from time `s` to time `t`.
///
/// Integrates the mean-map, offset and covariance ODEs
///
/// ```text
/// M' = A M,    mu' = A mu + r(t'),    Sigma' = A Sigma + Sigma A' + D,
/// ```
///
/// with `r(t') = (b gamma(tau - t') + c, c, ..., c)` and `D = s0^2 I`, using
/// a fixed-step classical fourth-order scheme with 1000 steps. The fixed step
/// keeps the oracle deterministic, with error far below every acceptance
/// tolerance.
pub fn gaussian_kernel_via_moments(
    aug: &AugmentedSystem,
    s: f64,
    t: f64,
) -> Result<GaussianKernel> {
    let model = aug.model();
    if !model.is_additive_noise() {
        return Err(Error::NonAdditiveNoise);
    }
    if !(t > s) {
        return Err(Error::TimeOutOfRange { t, lo: s, hi: aug.tau() });
    }
    let k = aug.k();
    let a_mat = drift_matrix(model, k);
    let d_mat = DMatrix::from_diagonal_element(k, k, model.s0 * model.s0);
    let forcing = |tp: f64| -> DVector<f64> {
        let mut r = DVector::from_element(k, model.c);
        r[0] += model.b * model.history.eval(model.tau - tp);
        r
    };
    let deriv = |tp: f64, m: &DMatrix<f64>, mu: &DVector<f64>, cov: &DMatrix<f64>| {
        (
            &a_mat * m,
            &a_mat * mu + forcing(tp),
            &a_mat * cov + cov * a_mat.transpose() + &d_mat,
        )
    };

    const N_STEPS: usize = 1000;
    let h = (t - s) / N_STEPS as f64;
    let mut m = DMatrix::<f64>::identity(k, k);
    let mut mu = DVector::<f64>::zeros(k);
    let mut cov = DMatrix::<f64>::zeros(k, k);
    for i in 0..N_STEPS {
        let t0 = s + i as f64 * h;
        let (k1m, k1u, k1c) = deriv(t0, &m, &mu, &cov);
        let (k2m, k2u, k2c) = deriv(
            t0 + 0.5 * h,
            &(&m + &k1m * (0.5 * h)),
            &(&mu + &k1u * (0.5 * h)),
            &(&cov + &k1c * (0.5 * h)),
        );
        let (k3m, k3u, k3c) = deriv(
            t0 + 0.5 * h,
            &(&m + &k2m * (0.5 * h)),
            &(&mu + &k2u * (0.5 * h)),
            &(&cov + &k2c * (0.5 * h)),
        );
        let (k4m, k4u, k4c) = deriv(
            t0 + h,
            &(&m + &k3m * h),
            &(&mu + &k3u * h),
            &(&cov + &k3c * h),
        );
        m += (k1m + k2m * 2.0 + k3m * 2.0 + k4m) * (h / 6.0);
        mu += (k1u + k2u * 2.0 + k3u * 2.0 + k4u) * (h / 6.0);
        cov += (k1c + k2c * 2.0 + k3c * 2.0 + k4c) * (h / 6.0);
    }
    // Kill roundoff asymmetry before factorizing.
    let cov = (&cov + cov.transpose()) * 0.5;
    GaussianKernel::new(m, mu, cov)
}
