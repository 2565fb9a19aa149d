//! The governing equations: delay densities from transition-kernel
//! composition.
//!
//! With `Q_k` the transition kernel of the k-segment augmentation and
//! `gamma0` the initial point, the density `P_A(x, t)` of the delay equation
//! is:
//!
//! - `0 < t <= tau`:  `P_A(x, t) = Q_1(x; t | gamma0; 0)`
//!   ([`density_first_interval`]);
//! - `t = k tau`, `k >= 2`:  integrate
//!   `Q_k(x_1, ..., x_{k-1}, x; tau | gamma0, x_1, ..., x_{k-1}; 0)` over
//!   the `k-1` intermediate coordinates ([`density_at_multiple`]);
//! - `(k-1) tau < t < k tau`:  the double composition of `Q_{k-1}` and
//!   `Q_k` over `2(k-1)` coordinates ([`density_general`]).
//!
//! The segment boundaries knit together by the point-mass limit of the
//! kernels, so the three branches agree where their ranges touch; this is
//! checked, not assumed, by the acceptance suite.
//!
//! All integrals are tensor-trapezoid on user-configured windows. The
//! integrands are products of smooth, rapidly decaying kernels, for which
//! trapezoid sums on generous windows converge extremely fast, and a fixed
//! ascending summation order keeps every result bit-reproducible. Requested
//! abscissae may be evaluated concurrently; each abscissa owns one integral
//! and no accumulator is shared.
//!
//! Beyond the density itself: the bridge density ([`bridge_density`]), the
//! joint and conditional densities at delay multiples
//! ([`joint_density_multiples`], [`conditional_density_multiple`],
//! [`conditional_density_general`]), and kernel marginalization
//! ([`marginalize_last`]), which reduces `Q_{k+1}` to `Q_k` by integrating
//! out the last coordinate.

use std::sync::Arc;

use rayon::prelude::*;

use crate::kernel::{Backend, TransitionKernel};
use crate::{Error, Result};

/// Strictly-positive density floor: a kernel value at or below this in a
/// denominator means the strict-positivity assumption failed at that point.
const POSITIVITY_FLOOR: f64 = 1e-300;

/// One tensor-quadrature axis: `n >= 16` trapezoid nodes on `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadAxis {
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl QuadAxis {
    pub const MIN_NODES: usize = 16;

    pub fn new(min: f64, max: f64, n: usize) -> Result<Self> {
        if !(min < max) || n < Self::MIN_NODES {
            return Err(Error::InvalidAxis { min, max, n, min_n: Self::MIN_NODES });
        }
        Ok(Self { min, max, n })
    }

    #[inline]
    fn spacing(&self) -> f64 {
        (self.max - self.min) / (self.n - 1) as f64
    }

    #[inline]
    fn node(&self, i: usize) -> f64 {
        self.min + i as f64 * self.spacing()
    }

    #[inline]
    fn weight(&self, i: usize) -> f64 {
        let edge = i == 0 || i == self.n - 1;
        self.spacing() * if edge { 0.5 } else { 1.0 }
    }
}

/// Tensor-product trapezoid rule over one axis per integration variable.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    axes: Vec<QuadAxis>,
}

impl QuadratureGrid {
    pub fn new(axes: Vec<QuadAxis>) -> Self {
        Self { axes }
    }

    /// `dim` identical axes spanning `[-halfwidth, halfwidth]`.
    pub fn symmetric(dim: usize, halfwidth: f64, n: usize) -> Result<Self> {
        Ok(Self::new(vec![QuadAxis::new(-halfwidth, halfwidth, n)?; dim]))
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[QuadAxis] {
        &self.axes
    }
}

/// All nodes of a tensor rule, flattened in ascending odometer order (last
/// axis fastest), with their product weights.
struct TensorNodes {
    dim: usize,
    count: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
}

impl TensorNodes {
    fn build(axes: &[QuadAxis]) -> Self {
        let dim = axes.len();
        let count = axes.iter().map(|a| a.n).product::<usize>().max(1);
        let mut coords = Vec::with_capacity(count * dim);
        let mut weights = Vec::with_capacity(count);
        let mut idx = vec![0usize; dim];
        for _ in 0..count {
            let mut w = 1.0;
            for d in 0..dim {
                coords.push(axes[d].node(idx[d]));
                w *= axes[d].weight(idx[d]);
            }
            weights.push(w);
            for d in (0..dim).rev() {
                idx[d] += 1;
                if idx[d] < axes[d].n {
                    break;
                }
                idx[d] = 0;
            }
        }
        Self { dim, count, coords, weights }
    }

    #[inline]
    fn coords(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }
}

/// A delay density sampled at requested abscissae, with diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityCurve {
    pub x: Vec<f64>,
    pub values: Vec<f64>,
    pub t: f64,
    /// Trapezoid mass over the abscissae.
    pub mass: f64,
    /// Backend identifiers of the kernels that produced the curve.
    pub backend: String,
}

impl DensityCurve {
    /// Assemble a curve, computing its trapezoid mass.
    pub fn new(x: Vec<f64>, values: Vec<f64>, t: f64, backend: String) -> Self {
        let mass = trapezoid_mass(&x, &values);
        Self { x, values, t, mass, backend }
    }

    fn assemble(x: Vec<f64>, values: Vec<f64>, t: f64, backend: String) -> Self {
        Self::new(x, values, t, backend)
    }
}

/// Trapezoid integral over (ascending) abscissae.
fn trapezoid_mass(x: &[f64], v: &[f64]) -> f64 {
    x.windows(2)
        .zip(v.windows(2))
        .map(|(xs, vs)| 0.5 * (vs[0] + vs[1]) * (xs[1] - xs[0]))
        .sum()
}

/// Which branch of the governing equations applies at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeSegment {
    /// `0 < t <= tau`.
    FirstInterval,
    /// `t = k tau` within tolerance, `k >= 2`.
    AtMultiple { k: usize },
    /// `(k-1) tau < t < k tau`, `k >= 2`.
    Interior { k: usize },
}

/// Classify `t` against the segment lattice. Times within a relative 1e-9
/// of an exact multiple snap to the multiple branch.
pub fn time_segment(t: f64, tau: f64) -> Result<TimeSegment> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::TimeOutOfRange { t, lo: 0.0, hi: f64::INFINITY });
    }
    let ratio = t / tau;
    let nearest = ratio.round();
    if nearest >= 1.0 && (ratio - nearest).abs() <= 1e-9 * ratio.max(1.0) {
        let k = nearest as usize;
        return Ok(if k == 1 { TimeSegment::FirstInterval } else { TimeSegment::AtMultiple { k } });
    }
    let k = ratio.ceil() as usize;
    Ok(if k == 1 { TimeSegment::FirstInterval } else { TimeSegment::Interior { k } })
}

/// First interval: `P_A(x, t) = Q_1(x; t | gamma0; 0)` for `0 < t <= tau`,
/// the kernel evaluated at the physical time `t` itself.
pub fn density_first_interval(
    q1: &dyn TransitionKernel,
    gamma0: f64,
    xs: &[f64],
    t: f64,
    tau: f64,
) -> Result<DensityCurve> {
    if q1.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: q1.dim() });
    }
    if !(t > 0.0 && t <= tau * (1.0 + 1e-12)) {
        return Err(Error::TimeOutOfRange { t, lo: 0.0, hi: tau });
    }
    let values = xs
        .iter()
        .map(|&x| q1.density(&[x], t, &[gamma0], 0.0))
        .collect::<Result<Vec<_>>>()?;
    Ok(DensityCurve::assemble(xs.to_vec(), values, t, q1.backend().to_string()))
}

/// Delay multiples: `P_A(x, k tau)` as the `(k-1)`-fold integral of
/// `Q_k(x_1, ..., x_{k-1}, x; tau | gamma0, x_1, ..., x_{k-1}; 0)`.
pub fn density_at_multiple(
    qk: &dyn TransitionKernel,
    gamma0: f64,
    xs: &[f64],
    k: usize,
    tau: f64,
    quad: &QuadratureGrid,
) -> Result<DensityCurve> {
    check_k(k)?;
    if qk.dim() != k {
        return Err(Error::DimensionMismatch { expected: k, got: qk.dim() });
    }
    if quad.dim() != k - 1 {
        return Err(Error::AxisCountMismatch { expected: k - 1, got: quad.dim() });
    }
    let nodes = TensorNodes::build(quad.axes());
    let values = xs
        .par_iter()
        .map(|&x| {
            let mut u = vec![0.0; k];
            let mut v = vec![0.0; k];
            v[0] = gamma0;
            let mut sum = 0.0;
            for i in 0..nodes.count {
                let c = nodes.coords(i);
                u[..k - 1].copy_from_slice(c);
                u[k - 1] = x;
                v[1..].copy_from_slice(c);
                sum += nodes.weights[i] * qk.density(&u, tau, &v, 0.0)?;
            }
            Ok(sum)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DensityCurve::assemble(xs.to_vec(), values, k as f64 * tau, qk.backend().to_string()))
}

/// Interior times: for `(k-1) tau < t < k tau`,
///
/// ```text
/// P_A(x, t) = ∫∫ Q_{k-1}(y_1..y_{k-1}; tau | x_1..x_{k-1}; t-(k-1)tau)
///             * Q_k(x_1..x_{k-1}, x; t-(k-1)tau | gamma0, y_1..y_{k-1}; 0)
///             dx_1..dx_{k-1} dy_1..dy_{k-1},
/// ```
///
/// with the marginalization identity already applied so the first factor is
/// `Q_{k-1}`, not an integrated `Q_k`. `quad` supplies the `k-1` x-axes
/// followed by the `k-1` y-axes.
#[allow(clippy::too_many_arguments)]
pub fn density_general(
    qk: &dyn TransitionKernel,
    qk_minus_1: &dyn TransitionKernel,
    gamma0: f64,
    xs: &[f64],
    t: f64,
    k: usize,
    tau: f64,
    quad: &QuadratureGrid,
) -> Result<DensityCurve> {
    check_k(k)?;
    if qk.dim() != k {
        return Err(Error::DimensionMismatch { expected: k, got: qk.dim() });
    }
    if qk_minus_1.dim() != k - 1 {
        return Err(Error::DimensionMismatch { expected: k - 1, got: qk_minus_1.dim() });
    }
    if quad.dim() != 2 * (k - 1) {
        return Err(Error::AxisCountMismatch { expected: 2 * (k - 1), got: quad.dim() });
    }
    let lo = (k - 1) as f64 * tau;
    let hi = k as f64 * tau;
    if !(t > lo && t < hi) {
        return Err(Error::TimeOutOfRange { t, lo, hi });
    }
    let delta = t - lo;
    let km1 = k - 1;
    let x_nodes = TensorNodes::build(&quad.axes()[..km1]);
    let y_nodes = TensorNodes::build(&quad.axes()[km1..]);

    // The Q_{k-1} factor does not depend on the abscissa: tabulate it once,
    // weights folded in. Sequential fill keeps any backend caches warm in a
    // deterministic order.
    let mut bridge = vec![0.0; x_nodes.count * y_nodes.count];
    for ix in 0..x_nodes.count {
        let xw = x_nodes.weights[ix];
        let xc = x_nodes.coords(ix);
        for iy in 0..y_nodes.count {
            bridge[ix * y_nodes.count + iy] = xw
                * y_nodes.weights[iy]
                * qk_minus_1.density(y_nodes.coords(iy), tau, xc, delta)?;
        }
    }

    let values = xs
        .par_iter()
        .map(|&x| {
            let mut u = vec![0.0; k];
            let mut v = vec![0.0; k];
            v[0] = gamma0;
            let mut sum = 0.0;
            for ix in 0..x_nodes.count {
                u[..km1].copy_from_slice(x_nodes.coords(ix));
                u[km1] = x;
                let mut inner = 0.0;
                for iy in 0..y_nodes.count {
                    let w = bridge[ix * y_nodes.count + iy];
                    if w == 0.0 {
                        continue;
                    }
                    v[1..].copy_from_slice(y_nodes.coords(iy));
                    inner += w * qk.density(&u, delta, &v, 0.0)?;
                }
                sum += inner;
            }
            Ok(sum)
        })
        .collect::<Result<Vec<_>>>()?;
    let backend = format!("{}+{}", qk.backend(), qk_minus_1.backend());
    Ok(DensityCurve::assemble(xs.to_vec(), values, t, backend))
}

/// Bridge density at `u`, segment time `t'`, of the augmented system pinned
/// to `v0` at 0 and `v1` at `tau`:
/// `Q_k(v1; tau | u; t') Q_k(u; t' | v0; 0) / Q_k(v1; tau | v0; 0)`.
pub fn bridge_density(
    qk: &dyn TransitionKernel,
    u: &[f64],
    t_prime: f64,
    v0: &[f64],
    v1: &[f64],
    tau: f64,
) -> Result<f64> {
    let k = qk.dim();
    for slice in [u, v0, v1] {
        if slice.len() != k {
            return Err(Error::DimensionMismatch { expected: k, got: slice.len() });
        }
    }
    if !(t_prime > 0.0 && t_prime < tau) {
        return Err(Error::TimeOutOfRange { t: t_prime, lo: 0.0, hi: tau });
    }
    let denom = qk.density(v1, tau, v0, 0.0)?;
    if denom <= POSITIVITY_FLOOR {
        return Err(Error::PositivityViolation(format!(
            "bridge denominator Q_k({v1:?}; tau | {v0:?}; 0) = {denom:.3e}"
        )));
    }
    let forward = qk.density(u, t_prime, v0, 0.0)?;
    let backward = qk.density(v1, tau, u, t_prime)?;
    Ok(backward * forward / denom)
}

/// Joint density of the delay path at the multiples `(tau, ..., k tau)`:
/// a single kernel evaluation with the shifted conditioning vector,
/// `Q_k(x_1, ..., x_k; tau | gamma0, x_1, ..., x_{k-1}; 0)`.
pub fn joint_density_multiples(
    qk: &dyn TransitionKernel,
    gamma0: f64,
    x: &[f64],
    tau: f64,
) -> Result<f64> {
    let k = qk.dim();
    if x.len() != k {
        return Err(Error::DimensionMismatch { expected: k, got: x.len() });
    }
    let mut v = vec![0.0; k];
    v[0] = gamma0;
    v[1..].copy_from_slice(&x[..k - 1]);
    qk.density(x, tau, &v, 0.0)
}

/// Conditional density of `X(k tau)` at `xk` given the path values
/// `history_points = (x_1, ..., x_{k-1})` at the earlier multiples: the
/// ratio of the k- and (k-1)-segment joint densities.
pub fn conditional_density_multiple(
    qk: &dyn TransitionKernel,
    qk_minus_1: &dyn TransitionKernel,
    gamma0: f64,
    xk: f64,
    history_points: &[f64],
    tau: f64,
) -> Result<f64> {
    let k = history_points.len() + 1;
    check_k(k)?;
    if qk.dim() != k || qk_minus_1.dim() != k - 1 {
        return Err(Error::DimensionMismatch { expected: k, got: qk.dim() });
    }
    let mut x = history_points.to_vec();
    x.push(xk);
    let numer = joint_density_multiples(qk, gamma0, &x, tau)?;
    let denom = joint_density_multiples(qk_minus_1, gamma0, history_points, tau)?;
    if denom <= POSITIVITY_FLOOR {
        return Err(Error::PositivityViolation(format!(
            "conditional denominator at {history_points:?} = {denom:.3e}"
        )));
    }
    Ok(numer / denom)
}

/// Conditional density of `X(t)` at `y` for an interior time
/// `(k-1) tau < t < k tau`, given the path values at the earlier multiples:
/// the `(k-1)`-fold integral over the bridge-weighted kernel product,
/// divided by the `(k-1)`-segment joint density.
#[allow(clippy::too_many_arguments)]
pub fn conditional_density_general(
    qk: &dyn TransitionKernel,
    qk_minus_1: &dyn TransitionKernel,
    gamma0: f64,
    y: f64,
    t: f64,
    history_points: &[f64],
    tau: f64,
    quad: &QuadratureGrid,
) -> Result<f64> {
    let k = history_points.len() + 1;
    check_k(k)?;
    if qk.dim() != k || qk_minus_1.dim() != k - 1 {
        return Err(Error::DimensionMismatch { expected: k, got: qk.dim() });
    }
    if quad.dim() != k - 1 {
        return Err(Error::AxisCountMismatch { expected: k - 1, got: quad.dim() });
    }
    let lo = (k - 1) as f64 * tau;
    let hi = k as f64 * tau;
    if !(t > lo && t < hi) {
        return Err(Error::TimeOutOfRange { t, lo, hi });
    }
    let delta = t - lo;
    let denom = joint_density_multiples(qk_minus_1, gamma0, history_points, tau)?;
    if denom <= POSITIVITY_FLOOR {
        return Err(Error::PositivityViolation(format!(
            "conditional denominator at {history_points:?} = {denom:.3e}"
        )));
    }
    let nodes = TensorNodes::build(quad.axes());
    let mut u = vec![0.0; k];
    let mut v = vec![0.0; k];
    v[0] = gamma0;
    v[1..].copy_from_slice(history_points);
    let mut sum = 0.0;
    for i in 0..nodes.count {
        let yc = nodes.coords(i);
        u[..k - 1].copy_from_slice(yc);
        u[k - 1] = y;
        let w = nodes.weights[i];
        let back = qk_minus_1.density(history_points, tau, yc, delta)?;
        if back == 0.0 {
            continue;
        }
        sum += w * back * qk.density(&u, delta, &v, 0.0)?;
    }
    Ok(sum / denom)
}

/// A `Q_{k+1}` kernel with its last coordinate integrated out, yielding a
/// `Q_k` handle. The dropped coordinate of the conditioning point does not
/// influence the remaining components (the augmentation is lower
/// triangular), so the wrapper fills it with a fixed value.
pub struct MarginalizedKernel {
    inner: Arc<dyn TransitionKernel>,
    axis: QuadAxis,
    drop_value: f64,
}

impl MarginalizedKernel {
    /// Replace the filler used for the dropped conditioning coordinate.
    /// The result must not depend on it; tests exercise exactly that.
    pub fn with_drop_value(mut self, value: f64) -> Self {
        self.drop_value = value;
        self
    }
}

/// Reduce a `(k+1)`-segment kernel to a `k`-segment kernel by quadrature
/// over the last coordinate. `axis` must cover the support of the integrated
/// coordinate.
pub fn marginalize_last(
    q_kplus1: Arc<dyn TransitionKernel>,
    axis: QuadAxis,
) -> Result<MarginalizedKernel> {
    if q_kplus1.dim() < 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: q_kplus1.dim() });
    }
    Ok(MarginalizedKernel { inner: q_kplus1, axis, drop_value: 0.0 })
}

impl TransitionKernel for MarginalizedKernel {
    fn dim(&self) -> usize {
        self.inner.dim() - 1
    }

    fn backend(&self) -> Backend {
        self.inner.backend()
    }

    fn density(&self, u: &[f64], t: f64, v: &[f64], s: f64) -> Result<f64> {
        let k = self.dim();
        if u.len() != k || v.len() != k {
            return Err(Error::DimensionMismatch { expected: k, got: u.len() });
        }
        let mut u_ext = u.to_vec();
        u_ext.push(0.0);
        let mut v_ext = v.to_vec();
        v_ext.push(self.drop_value);
        let mut sum = 0.0;
        for i in 0..self.axis.n {
            u_ext[k] = self.axis.node(i);
            sum += self.axis.weight(i) * self.inner.density(&u_ext, t, &v_ext, s)?;
        }
        Ok(sum)
    }
}

fn check_k(k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::ZeroSegments);
    }
    if k > 3 {
        return Err(Error::DimensionCap(k));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{benchmark, gaussian1d, heat_kernel};
    use crate::kernel::{BenchmarkQ2Kernel, HeatKernel};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn time_segment_classification() {
        assert_eq!(time_segment(0.5, 1.0).unwrap(), TimeSegment::FirstInterval);
        assert_eq!(time_segment(1.0, 1.0).unwrap(), TimeSegment::FirstInterval);
        assert_eq!(time_segment(2.0, 1.0).unwrap(), TimeSegment::AtMultiple { k: 2 });
        assert_eq!(time_segment(1.5, 1.0).unwrap(), TimeSegment::Interior { k: 2 });
        assert_eq!(time_segment(2.5, 1.0).unwrap(), TimeSegment::Interior { k: 3 });
        assert!(time_segment(0.0, 1.0).is_err());
        // Snap within relative 1e-9 of a multiple.
        assert_eq!(
            time_segment(2.0 * (1.0 + 1e-12), 1.0).unwrap(),
            TimeSegment::AtMultiple { k: 2 }
        );
    }

    #[test]
    fn first_interval_matches_exact_density() {
        let q1 = HeatKernel;
        let xs = linspace(-6.0, 6.0, 41);
        for &t in &[0.25, 1.0] {
            let curve = density_first_interval(&q1, 0.0, &xs, t, 1.0).unwrap();
            for (x, v) in curve.x.iter().zip(&curve.values) {
                assert_relative_eq!(
                    *v,
                    benchmark::exact_density(*x, t).unwrap(),
                    max_relative = 1e-13
                );
            }
        }
        // t = 0.25 at x = 0: 1/sqrt(2 pi 0.25).
        let curve = density_first_interval(&q1, 0.0, &[0.0], 0.25, 1.0).unwrap();
        assert_abs_diff_eq!(curve.values[0], 0.797885, epsilon = 1e-6);
    }

    #[test]
    fn first_interval_curve_mass_is_one() {
        let q1 = HeatKernel;
        let xs = linspace(-6.0, 6.0, 201);
        let curve = density_first_interval(&q1, 0.0, &xs, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(curve.mass, 1.0, epsilon = 1e-3);
        assert_eq!(curve.backend, "analytic");
    }

    #[test]
    fn first_interval_rejects_out_of_range_times() {
        let q1 = HeatKernel;
        assert!(density_first_interval(&q1, 0.0, &[0.0], 0.0, 1.0).is_err());
        assert!(density_first_interval(&q1, 0.0, &[0.0], 1.5, 1.0).is_err());
    }

    #[test]
    fn at_multiple_reproduces_exact_density() {
        let q2 = BenchmarkQ2Kernel;
        let quad = QuadratureGrid::symmetric(1, 8.0, 400).unwrap();
        let xs = [0.0, 1.0, -2.0];
        let curve = density_at_multiple(&q2, 0.0, &xs, 2, 1.0, &quad).unwrap();
        for (x, v) in curve.x.iter().zip(&curve.values) {
            assert_abs_diff_eq!(*v, benchmark::exact_density(*x, 2.0).unwrap(), epsilon = 1e-4);
        }
        // Frozen value at x = 0: 1/sqrt(2 pi 10/3).
        assert_abs_diff_eq!(curve.values[0], 0.218510, epsilon = 1e-3);
    }

    #[test]
    fn at_multiple_axis_count_checked() {
        let q2 = BenchmarkQ2Kernel;
        let quad = QuadratureGrid::symmetric(2, 8.0, 32).unwrap();
        assert!(matches!(
            density_at_multiple(&q2, 0.0, &[0.0], 2, 1.0, &quad),
            Err(Error::AxisCountMismatch { .. })
        ));
    }

    #[test]
    fn general_interior_matches_exact_density() {
        let q2 = BenchmarkQ2Kernel;
        let q1 = HeatKernel;
        let quad = QuadratureGrid::symmetric(2, 8.0, 200).unwrap();
        let xs = [0.0, 1.5];
        let curve = density_general(&q2, &q1, 0.0, &xs, 1.5, 2, 1.0, &quad).unwrap();
        for (x, v) in curve.x.iter().zip(&curve.values) {
            assert_abs_diff_eq!(*v, benchmark::exact_density(*x, 1.5).unwrap(), epsilon = 1e-3);
        }
        assert_abs_diff_eq!(curve.values[0], 0.298040, epsilon = 1e-3);
        assert_eq!(curve.backend, "analytic+analytic");
    }

    #[test]
    fn general_continuous_at_first_boundary() {
        // Approaching t -> tau from above, the composition tends to the
        // first-interval value (0.398942 at the origin for the benchmark).
        let q2 = BenchmarkQ2Kernel;
        let q1 = HeatKernel;
        let quad = QuadratureGrid::symmetric(2, 8.0, 400).unwrap();
        let t = 1.005;
        let curve = density_general(&q2, &q1, 0.0, &[0.0], t, 2, 1.0, &quad).unwrap();
        assert_abs_diff_eq!(
            curve.values[0],
            benchmark::exact_density(0.0, t).unwrap(),
            epsilon = 1e-3
        );
        assert_abs_diff_eq!(curve.values[0], 0.398942, epsilon = 3e-3);
    }

    #[test]
    fn general_rejects_boundary_times() {
        let q2 = BenchmarkQ2Kernel;
        let q1 = HeatKernel;
        let quad = QuadratureGrid::symmetric(2, 8.0, 32).unwrap();
        for bad_t in [1.0, 2.0, 2.5] {
            assert!(density_general(&q2, &q1, 0.0, &[0.0], bad_t, 2, 1.0, &quad).is_err());
        }
    }

    #[test]
    fn bridge_is_brownian_bridge_for_heat_kernel() {
        // Pinned at 0 on both ends of [0, 1], at t' = 1/2 the bridge is
        // N(0, 1/4); peak value sqrt(2/pi).
        let q1 = HeatKernel;
        let peak = bridge_density(&q1, &[0.0], 0.5, &[0.0], &[0.0], 1.0).unwrap();
        assert_relative_eq!(
            peak,
            (2.0 / std::f64::consts::PI).sqrt(),
            max_relative = 1e-13
        );
        // Compare against the Brownian bridge density off-peak too.
        for &u in &[-0.8, -0.1, 0.3, 1.0] {
            let v = bridge_density(&q1, &[u], 0.5, &[0.0], &[0.0], 1.0).unwrap();
            assert_relative_eq!(v, gaussian1d(u, 0.0, 0.25), max_relative = 1e-12);
        }
        // Far tail decays to zero.
        let tail = bridge_density(&q1, &[5.0], 0.5, &[0.0], &[0.0], 1.0).unwrap();
        assert!(tail < 1e-15);
    }

    #[test]
    fn bridge_integrates_to_one() {
        let q1 = HeatKernel;
        let xs = linspace(-3.0, 3.0, 301);
        let vals: Vec<f64> = xs
            .iter()
            .map(|&u| bridge_density(&q1, &[u], 0.5, &[0.0], &[0.0], 1.0).unwrap())
            .collect();
        assert_abs_diff_eq!(trapezoid_mass(&xs, &vals), 1.0, epsilon = 1e-3);
    }

    #[test]
    fn bridge_rejects_degenerate_times() {
        let q1 = HeatKernel;
        assert!(bridge_density(&q1, &[0.0], 0.0, &[0.0], &[0.0], 1.0).is_err());
        assert!(bridge_density(&q1, &[0.0], 1.0, &[0.0], &[0.0], 1.0).is_err());
    }

    #[test]
    fn joint_density_at_multiples() {
        let q2 = BenchmarkQ2Kernel;
        let j = joint_density_multiples(&q2, 0.0, &[0.0, 0.0], 1.0).unwrap();
        assert_relative_eq!(j, benchmark::q2(0.0, 0.0, 1.0, 0.0, 0.0, 0.0).unwrap());
        assert_abs_diff_eq!(j, 0.152912, epsilon = 1e-6);
    }

    #[test]
    fn joint_marginal_recovers_density_at_multiple() {
        // Integrating the joint over x1 gives P_A(x2, 2 tau).
        let q2 = BenchmarkQ2Kernel;
        let x1s = linspace(-8.0, 8.0, 401);
        for &x2 in &[-1.0, 0.0, 0.5] {
            let vals: Vec<f64> = x1s
                .iter()
                .map(|&x1| joint_density_multiples(&q2, 0.0, &[x1, x2], 1.0).unwrap())
                .collect();
            let marg = trapezoid_mass(&x1s, &vals);
            assert_abs_diff_eq!(marg, benchmark::exact_density(x2, 2.0).unwrap(), epsilon = 1e-6);
        }
    }

    #[test]
    fn chain_identity_joint_equals_product_of_conditionals() {
        let q2 = BenchmarkQ2Kernel;
        let q1 = HeatKernel;
        for &(x1, x2) in &[(0.0, 0.0), (0.7, -0.4), (-1.1, 2.0), (2.0, 2.0)] {
            let joint = joint_density_multiples(&q2, 0.0, &[x1, x2], 1.0).unwrap();
            let p1 = density_first_interval(&q1, 0.0, &[x1], 1.0, 1.0).unwrap().values[0];
            let cond = conditional_density_multiple(&q2, &q1, 0.0, x2, &[x1], 1.0).unwrap();
            assert_relative_eq!(joint, p1 * cond, max_relative = 1e-6);
        }
    }

    #[test]
    fn conditional_multiple_value_and_normalization() {
        let q2 = BenchmarkQ2Kernel;
        let q1 = HeatKernel;
        let c = conditional_density_multiple(&q2, &q1, 0.0, 0.0, &[0.0], 1.0).unwrap();
        assert_relative_eq!(
            c,
            benchmark::q2(0.0, 0.0, 1.0, 0.0, 0.0, 0.0).unwrap()
                / heat_kernel(0.0, 1.0, 0.0, 0.0).unwrap(),
            max_relative = 1e-12
        );
        assert_abs_diff_eq!(c, 0.383295, epsilon = 1e-5);

        let xs = linspace(-6.0, 6.0, 401);
        let vals: Vec<f64> = xs
            .iter()
            .map(|&xk| conditional_density_multiple(&q2, &q1, 0.0, xk, &[0.5], 1.0).unwrap())
            .collect();
        assert_abs_diff_eq!(trapezoid_mass(&xs, &vals), 1.0, epsilon = 1e-3);
    }

    #[test]
    fn conditional_independent_of_delayed_slot_without_coupling() {
        // b = 0: the kernel factorizes and the conditional of the last
        // component does not depend on the conditioning value.
        let model = crate::model::SddeModel::new(
            -0.5,
            0.0,
            0.0,
            1.0,
            0.0,
            0.0,
            1.0,
            crate::model::HistoryFunction::zero(),
        )
        .unwrap();
        let aug2 = crate::model::AugmentedSystem::new(model.clone(), 2).unwrap();
        let aug1 = crate::model::AugmentedSystem::new(model, 1).unwrap();
        let q2 = crate::kernel::MomentKernel::new(aug2).unwrap();
        let q1 = crate::kernel::MomentKernel::new(aug1).unwrap();
        let a = conditional_density_multiple(&q2, &q1, 0.0, 0.3, &[0.5], 1.0).unwrap();
        let b = conditional_density_multiple(&q2, &q1, 0.0, 0.3, &[-1.5], 1.0).unwrap();
        // The delayed slot shifts the conditioning of component 2 only
        // through b; with b = 0 the conditional over x2 is unchanged except
        // through its own start value x1... which here IS the conditioning;
        // instead verify against the factorized form directly.
        let gk = crate::analytic::gaussian_kernel_via_moments(
            &crate::model::AugmentedSystem::new(
                crate::model::SddeModel::new(
                    -0.5,
                    0.0,
                    0.0,
                    1.0,
                    0.0,
                    0.0,
                    1.0,
                    crate::model::HistoryFunction::zero(),
                )
                .unwrap(),
                1,
            )
            .unwrap(),
            0.0,
            1.0,
        )
        .unwrap();
        let expect_a = gk.density(&[0.3], &[0.5]).unwrap();
        let expect_b = gk.density(&[0.3], &[-1.5]).unwrap();
        assert_relative_eq!(a, expect_a, max_relative = 1e-9);
        assert_relative_eq!(b, expect_b, max_relative = 1e-9);
    }

    #[test]
    fn conditional_general_reassembles_unconditional_density() {
        // Integrating the interior-time conditional against the density at
        // the first multiple recovers P_A(y, t).
        let q2 = BenchmarkQ2Kernel;
        let q1 = HeatKernel;
        let quad = QuadratureGrid::symmetric(1, 8.0, 200).unwrap();
        let x1s = linspace(-6.0, 6.0, 121);
        for &y in &[0.0, 1.0] {
            let mut vals = Vec::with_capacity(x1s.len());
            for &x1 in &x1s {
                let cond =
                    conditional_density_general(&q2, &q1, 0.0, y, 1.5, &[x1], 1.0, &quad).unwrap();
                let p1 = heat_kernel(x1, 1.0, 0.0, 0.0).unwrap();
                vals.push(cond * p1);
            }
            let total = trapezoid_mass(&x1s, &vals);
            assert_abs_diff_eq!(total, benchmark::exact_density(y, 1.5).unwrap(), epsilon = 2e-3);
        }
    }

    #[test]
    fn conditional_general_normalizes_over_y() {
        let q2 = BenchmarkQ2Kernel;
        let q1 = HeatKernel;
        let quad = QuadratureGrid::symmetric(1, 8.0, 200).unwrap();
        let ys = linspace(-6.0, 6.0, 241);
        let vals: Vec<f64> = ys
            .iter()
            .map(|&y| {
                conditional_density_general(&q2, &q1, 0.0, y, 1.5, &[0.4], 1.0, &quad).unwrap()
            })
            .collect();
        assert_abs_diff_eq!(trapezoid_mass(&ys, &vals), 1.0, epsilon = 1e-3);
    }

    #[test]
    fn conditional_general_concentrates_near_segment_start() {
        // t -> (k-1) tau from above: the conditional at y near x_{k-1}
        // concentrates (small variance).
        let q2 = BenchmarkQ2Kernel;
        let q1 = HeatKernel;
        let quad = QuadratureGrid::symmetric(1, 8.0, 200).unwrap();
        let x1 = 0.5;
        let t = 1.01;
        let at_center =
            conditional_density_general(&q2, &q1, 0.0, x1, t, &[x1], 1.0, &quad).unwrap();
        let off_center =
            conditional_density_general(&q2, &q1, 0.0, x1 + 1.0, t, &[x1], 1.0, &quad).unwrap();
        assert!(at_center > 3.0, "peak {at_center}");
        assert!(off_center < 0.05 * at_center);
    }

    #[test]
    fn marginalized_q2_is_q1() {
        let q2: Arc<dyn TransitionKernel> = Arc::new(BenchmarkQ2Kernel);
        let axis = QuadAxis::new(-10.0, 10.0, 400).unwrap();
        let marg = marginalize_last(q2, axis).unwrap();
        assert_eq!(marg.dim(), 1);
        for &x1 in &[-2.0, 0.0, 2.0] {
            let m = marg.density(&[x1], 1.0, &[0.0], 0.0).unwrap();
            let q1 = heat_kernel(x1, 1.0, 0.0, 0.0).unwrap();
            assert_abs_diff_eq!(m, q1, epsilon = 1e-4);
        }
    }

    #[test]
    fn marginalized_kernel_ignores_drop_value() {
        // The window has to cover the support for both fillers; the shifted
        // filler moves the integrand's centre, not its marginal.
        let axis = QuadAxis::new(-16.0, 16.0, 512).unwrap();
        let a = marginalize_last(Arc::new(BenchmarkQ2Kernel) as Arc<dyn TransitionKernel>, axis)
            .unwrap();
        let b = marginalize_last(Arc::new(BenchmarkQ2Kernel) as Arc<dyn TransitionKernel>, axis)
            .unwrap()
            .with_drop_value(3.7);
        let va = a.density(&[0.5], 1.0, &[0.0], 0.0).unwrap();
        let vb = b.density(&[0.5], 1.0, &[0.0], 0.0).unwrap();
        assert_relative_eq!(va, vb, max_relative = 1e-10);
    }

    #[test]
    fn marginalizing_decoupled_model_returns_first_factor() {
        // b = 0: components evolve independently, so integrating out the
        // second coordinate leaves exactly the one-component kernel.
        let model = crate::model::SddeModel::new(
            -0.3,
            0.0,
            0.1,
            0.8,
            0.0,
            0.0,
            1.0,
            crate::model::HistoryFunction::zero(),
        )
        .unwrap();
        let aug2 = crate::model::AugmentedSystem::new(model.clone(), 2).unwrap();
        let aug1 = crate::model::AugmentedSystem::new(model, 1).unwrap();
        let q2 = Arc::new(crate::kernel::MomentKernel::new(aug2).unwrap());
        let q1 = crate::kernel::MomentKernel::new(aug1).unwrap();
        let axis = QuadAxis::new(-8.0, 8.0, 400).unwrap();
        let marg = marginalize_last(q2 as Arc<dyn TransitionKernel>, axis).unwrap();
        for &x in &[-1.0, 0.0, 0.7] {
            let a = marg.density(&[x], 1.0, &[0.2], 0.0).unwrap();
            let b = q1.density(&[x], 1.0, &[0.2], 0.0).unwrap();
            assert_relative_eq!(a, b, max_relative = 1e-7);
        }
    }

    #[test]
    fn k_bounds_enforced() {
        let q2 = BenchmarkQ2Kernel;
        let quad = QuadratureGrid::symmetric(3, 8.0, 16).unwrap();
        assert!(matches!(
            density_at_multiple(&q2, 0.0, &[0.0], 4, 1.0, &quad),
            Err(Error::DimensionCap(4))
        ));
        assert!(matches!(
            density_at_multiple(&q2, 0.0, &[0.0], 1, 1.0, &quad),
            Err(Error::ZeroSegments)
        ));
    }
}
