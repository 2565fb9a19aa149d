//! Transition-kernel handles with interchangeable backends.
//!
//! A [`TransitionKernel`] evaluates `Q_k(u; t | v; s)`, the density at `u`
//! of the k-segment augmented state at segment time `t` given value `v` at
//! time `s`. The composition layer works against this trait only, so the
//! same governing-equation code runs with closed forms, grid-PDE solutions
//! or Monte Carlo histograms behind it.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use crate::analytic::{self, gaussian_kernel_via_moments, GaussianKernel};
use crate::fokker_planck::{solve_kernel, Axis, DensityField, Grid, SolverConfig};
use crate::model::AugmentedSystem;
use crate::{Error, Result};

/// Which machinery produces the kernel values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Analytic,
    Grid,
    MonteCarlo,
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Analytic => "analytic",
            Backend::Grid => "grid",
            Backend::MonteCarlo => "monte-carlo",
        })
    }
}

/// Evaluator for the transition density `Q_k(u; t | v; s)`.
pub trait TransitionKernel: Send + Sync {
    /// Number of state components `k`.
    fn dim(&self) -> usize;

    fn backend(&self) -> Backend;

    /// Density at `u` (length `k`) at time `t`, conditioned on state `v`
    /// (length `k`) at time `s < t`.
    fn density(&self, u: &[f64], t: f64, v: &[f64], s: f64) -> Result<f64>;
}

/// `Q_1` of the benchmark problem: the scalar heat kernel (zero drift, unit
/// noise).
#[derive(Debug, Clone, Copy, Default)]
pub struct HeatKernel;

impl TransitionKernel for HeatKernel {
    fn dim(&self) -> usize {
        1
    }

    fn backend(&self) -> Backend {
        Backend::Analytic
    }

    fn density(&self, u: &[f64], t: f64, v: &[f64], s: f64) -> Result<f64> {
        check_dims(1, u, v)?;
        analytic::heat_kernel(u[0], t, v[0], s)
    }
}

/// `Q_2` of the benchmark problem, in closed form.
#[derive(Debug, Clone, Copy, Default)]
pub struct BenchmarkQ2Kernel;

impl TransitionKernel for BenchmarkQ2Kernel {
    fn dim(&self) -> usize {
        2
    }

    fn backend(&self) -> Backend {
        Backend::Analytic
    }

    fn density(&self, u: &[f64], t: f64, v: &[f64], s: f64) -> Result<f64> {
        check_dims(2, u, v)?;
        analytic::benchmark::q2(u[0], u[1], t, v[0], v[1], s)
    }
}

/// Gaussian kernel of an additive-noise affine system, backed by the
/// moment-ODE oracle. Kernels are cached per `(s, t)` pair.
pub struct MomentKernel {
    aug: AugmentedSystem,
    cache: Mutex<HashMap<(u64, u64), Arc<GaussianKernel>>>,
}

impl MomentKernel {
    pub fn new(aug: AugmentedSystem) -> Result<Self> {
        if !aug.model().is_additive_noise() {
            return Err(Error::NonAdditiveNoise);
        }
        Ok(Self { aug, cache: Mutex::new(HashMap::new()) })
    }

    fn kernel_for(&self, s: f64, t: f64) -> Result<Arc<GaussianKernel>> {
        let key = (s.to_bits(), t.to_bits());
        let mut cache = self.cache.lock().unwrap();
        if let Some(k) = cache.get(&key) {
            return Ok(k.clone());
        }
        let kern = Arc::new(gaussian_kernel_via_moments(&self.aug, s, t)?);
        cache.insert(key, kern.clone());
        Ok(kern)
    }
}

impl TransitionKernel for MomentKernel {
    fn dim(&self) -> usize {
        self.aug.k()
    }

    fn backend(&self) -> Backend {
        Backend::Analytic
    }

    fn density(&self, u: &[f64], t: f64, v: &[f64], s: f64) -> Result<f64> {
        check_dims(self.aug.k(), u, v)?;
        self.kernel_for(s, t)?.density(u, v)
    }
}

/// Settings for the grid-PDE backend.
#[derive(Debug, Clone)]
pub struct GridKernelConfig {
    /// Nodes per axis of each per-conditioning-point solve grid.
    pub nodes_per_axis: usize,
    /// Time step of the Fokker-Planck solver.
    pub dt: f64,
    /// Mollification time forwarded to the solver; `None` = automatic.
    pub delta_init_eps: Option<f64>,
    /// Grid half-width in predicted standard deviations around the predicted
    /// mean trajectory.
    pub halfwidth_sigmas: f64,
    /// Fixed grid overriding the adaptive placement, when set.
    pub grid_override: Option<Grid>,
}

impl Default for GridKernelConfig {
    fn default() -> Self {
        Self {
            nodes_per_axis: 129,
            dt: 1e-3,
            delta_init_eps: None,
            halfwidth_sigmas: 6.0,
            grid_override: None,
        }
    }
}

#[derive(PartialEq, Eq, Hash)]
struct CondKey(Vec<u64>);

impl CondKey {
    fn new(v: &[f64], s: f64, t: f64) -> Self {
        let mut key = Vec::with_capacity(v.len() + 2);
        key.push(s.to_bits());
        key.push(t.to_bits());
        key.extend(v.iter().map(|x| x.to_bits()));
        Self(key)
    }
}

/// Finite-difference backend: one Fokker-Planck solve per distinct
/// conditioning point `(v, s, t)`, cached, evaluated off-node by multilinear
/// interpolation.
///
/// Unless a fixed grid is supplied, each solve grid is placed adaptively:
/// centred on the predicted mean with a half-width of
/// `halfwidth_sigmas` predicted standard deviations (moment oracle for
/// additive noise, a frozen-coefficient estimate otherwise), widened to keep
/// the conditioning point strictly inside.
pub struct GridKernel {
    aug: AugmentedSystem,
    cfg: GridKernelConfig,
    cache: Mutex<HashMap<CondKey, Arc<DensityField>>>,
}

impl GridKernel {
    pub fn new(aug: AugmentedSystem, cfg: GridKernelConfig) -> Result<Self> {
        if aug.k() > 3 {
            return Err(Error::DimensionCap(aug.k()));
        }
        Ok(Self { aug, cfg, cache: Mutex::new(HashMap::new()) })
    }

    /// Accumulated solver warnings across all cached solves.
    pub fn warnings(&self) -> Vec<String> {
        let cache = self.cache.lock().unwrap();
        let mut out = Vec::new();
        for field in cache.values() {
            for w in field.warnings() {
                if !out.contains(w) {
                    out.push(w.clone());
                }
            }
        }
        out
    }

    fn solve_grid(&self, v: &[f64], s: f64, t: f64) -> Result<Grid> {
        if let Some(g) = &self.cfg.grid_override {
            return Ok(g.clone());
        }
        let k = self.aug.k();
        let (means, sds) = predict_spread(&self.aug, v, s, t)?;
        let mut axes = Vec::with_capacity(k);
        for d in 0..k {
            let half = self.cfg.halfwidth_sigmas * sds[d];
            let lo = v[d].min(means[d]) - half;
            let hi = v[d].max(means[d]) + half;
            axes.push(Axis::new(lo, hi, self.cfg.nodes_per_axis)?);
        }
        Grid::new(axes)
    }

    fn field_for(&self, v: &[f64], s: f64, t: f64) -> Result<Arc<DensityField>> {
        let key = CondKey::new(v, s, t);
        let mut cache = self.cache.lock().unwrap();
        if let Some(f) = cache.get(&key) {
            return Ok(f.clone());
        }
        let grid = self.solve_grid(v, s, t)?;
        let cfg = SolverConfig {
            dt: self.cfg.dt,
            delta_init_eps: self.cfg.delta_init_eps,
            ..SolverConfig::default()
        };
        let field = Arc::new(solve_kernel(&self.aug, v, s, t, &grid, &cfg)?);
        cache.insert(key, field.clone());
        Ok(field)
    }
}

impl TransitionKernel for GridKernel {
    fn dim(&self) -> usize {
        self.aug.k()
    }

    fn backend(&self) -> Backend {
        Backend::Grid
    }

    fn density(&self, u: &[f64], t: f64, v: &[f64], s: f64) -> Result<f64> {
        check_dims(self.aug.k(), u, v)?;
        Ok(self.field_for(v, s, t)?.interpolate(u))
    }
}

/// Predicted per-component mean and standard deviation of the augmented
/// state at time `t` from `(v, s)`. Additive-noise models use the moment
/// oracle; otherwise the mean comes from the deterministic drift flow and
/// the spread from the diffusion frozen along it.
fn predict_spread(aug: &AugmentedSystem, v: &[f64], s: f64, t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let k = aug.k();
    if aug.model().is_additive_noise() {
        let kern = gaussian_kernel_via_moments(aug, s, t)?;
        let means = kern.mean(v)?;
        let sds = (0..k).map(|d| kern.cov()[(d, d)].sqrt()).collect();
        return Ok((means, sds));
    }
    let n_steps = 200;
    let h = (t - s) / n_steps as f64;
    let mut state = v.to_vec();
    let mut gmax = vec![0.0f64; k];
    for j in 0..n_steps {
        let tp = s + j as f64 * h;
        for (d, g) in gmax.iter_mut().enumerate() {
            *g = g.max(aug.diffusion_component(d, &state, tp).abs());
        }
        let drift: Vec<f64> = (0..k).map(|d| aug.drift_component(d, &state, tp)).collect();
        for d in 0..k {
            state[d] += h * drift[d];
        }
    }
    let horizon = (t - s).sqrt();
    let sds = gmax.iter().map(|g| (g * horizon).max(1e-6)).collect();
    Ok((state, sds))
}

fn check_dims(k: usize, u: &[f64], v: &[f64]) -> Result<()> {
    if u.len() != k {
        return Err(Error::DimensionMismatch { expected: k, got: u.len() });
    }
    if v.len() != k {
        return Err(Error::DimensionMismatch { expected: k, got: v.len() });
    }
    Ok(())
}
