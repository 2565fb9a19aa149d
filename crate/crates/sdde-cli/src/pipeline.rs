//! Curve computation and comparison metrics shared by the subcommands.

use std::collections::BTreeMap;
use std::fmt;
use std::time::Instant;

use clap::ValueEnum;
use serde::Serialize;

use sdde_core::composition::{
    density_at_multiple, density_first_interval, density_general, time_segment, DensityCurve,
    QuadAxis, QuadratureGrid, TimeSegment,
};
use sdde_core::kernel::{GridKernel, GridKernelConfig, MomentKernel, TransitionKernel};
use sdde_core::model::{AugmentedSystem, SddeModel};
use sdde_core::montecarlo::{estimate_density, simulate_sdde, SimConfig};

use crate::config::RunConfig;

/// Error classified by the exit-code contract: 2 config, 3 model-assumption
/// violation, 4 numeric failure.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Assumption(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Assumption(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Assumption(m) => write!(f, "model assumption violated: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

impl From<sdde_core::Error> for CliError {
    fn from(e: sdde_core::Error) -> Self {
        use sdde_core::Error::*;
        match e {
            EllipticityViolation { .. } | PositivityViolation(_) => {
                CliError::Assumption(e.to_string())
            }
            CflViolation { .. } | NonFinite(_) | CovarianceNotSpd | ConditioningMismatch => {
                CliError::Numeric(e.to_string())
            }
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(format!("i/o: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Density computation backend selected on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    /// Gaussian moment-ODE kernels (additive-noise models).
    Analytic,
    /// Finite-difference Fokker-Planck kernels.
    Fp,
    /// Euler-Maruyama histogram.
    Mc,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Analytic => "analytic",
            Method::Fp => "fp",
            Method::Mc => "mc",
        })
    }
}

/// Kernel handle of the requested backend for a k-segment augmentation.
pub fn make_kernel(
    method: Method,
    model: &SddeModel,
    k: usize,
    cfg: &RunConfig,
) -> CliResult<Box<dyn TransitionKernel>> {
    let aug = AugmentedSystem::new(model.clone(), k)?;
    match method {
        Method::Analytic => {
            if !model.is_additive_noise() {
                return Err(CliError::Config(
                    "the analytic method needs additive noise (s1 = s2 = 0); \
                     use fp or mc for multiplicative-noise models"
                        .into(),
                ));
            }
            Ok(Box::new(MomentKernel::new(aug)?))
        }
        Method::Fp => {
            let gk = GridKernel::new(
                aug,
                GridKernelConfig {
                    nodes_per_axis: cfg.solver.nodes_per_axis,
                    dt: cfg.solver.dt,
                    delta_init_eps: cfg.solver.delta_init_eps,
                    ..Default::default()
                },
            )?;
            Ok(Box::new(gk))
        }
        Method::Mc => Err(CliError::Config(
            "the mc method estimates densities from path histograms and does not \
             provide a general kernel handle here"
                .into(),
        )),
    }
}

fn quadrature(cfg: &RunConfig, axes: usize) -> CliResult<QuadratureGrid> {
    let q = &cfg.quadrature;
    let axis = QuadAxis::new(q.center - q.halfwidth, q.center + q.halfwidth, q.points)?;
    Ok(QuadratureGrid::new(vec![axis; axes]))
}

/// Compute `P_A(., t)` on the configured abscissae with the requested
/// method, dispatching on the time segment: first interval, exact delay
/// multiple, or interior composition.
pub fn compute_curve(
    cfg: &RunConfig,
    model: &SddeModel,
    t: f64,
    method: Method,
    seed: Option<u64>,
) -> CliResult<DensityCurve> {
    let xs = cfg.grid.abscissae();
    let tau = model.tau;
    if let Method::Mc = method {
        let sim = SimConfig {
            dt: cfg.mc.dt,
            n_paths: cfg.mc.n_paths,
            seed: seed.unwrap_or(cfg.mc.seed),
            t_max: t,
        };
        let ens = simulate_sdde(model, &sim, &[t])?;
        // Bin on the abscissa lattice itself (one bin centred on each
        // abscissa), so curve values are bin averages rather than
        // staircase lookups between centres.
        let half = 0.5 * (xs[1] - xs[0]);
        let window = (xs[0] - half, *xs.last().unwrap() + half);
        let hist = estimate_density(&ens.column(0), xs.len(), window)?;
        let values = hist.heights().to_vec();
        return Ok(DensityCurve::new(xs, values, t, "monte-carlo".into()));
    }
    let gamma0 = model.gamma0();
    match time_segment(t, tau)? {
        TimeSegment::FirstInterval => {
            let q1 = make_kernel(method, model, 1, cfg)?;
            Ok(density_first_interval(&*q1, gamma0, &xs, t, tau)?)
        }
        TimeSegment::AtMultiple { k } => {
            let qk = make_kernel(method, model, k, cfg)?;
            let quad = quadrature(cfg, k - 1)?;
            Ok(density_at_multiple(&*qk, gamma0, &xs, k, tau, &quad)?)
        }
        TimeSegment::Interior { k } => {
            let qk = make_kernel(method, model, k, cfg)?;
            let qkm1 = make_kernel(method, model, k - 1, cfg)?;
            let quad = quadrature(cfg, 2 * (k - 1))?;
            Ok(density_general(&*qk, &*qkm1, gamma0, &xs, t, k, tau, &quad)?)
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Metrics {
    pub l1: f64,
    pub linf: f64,
    pub ks: f64,
}

/// Distances between two curves on shared ascending abscissae: trapezoid L1,
/// pointwise L-infinity, and the maximum gap of the cumulative (CDF) curves.
pub fn metrics(xs: &[f64], a: &[f64], b: &[f64]) -> Metrics {
    let mut l1 = 0.0;
    let mut linf: f64 = 0.0;
    let mut ks: f64 = 0.0;
    let mut cdf_a = 0.0;
    let mut cdf_b = 0.0;
    for i in 0..xs.len() {
        linf = linf.max((a[i] - b[i]).abs());
        if i > 0 {
            let dx = xs[i] - xs[i - 1];
            l1 += 0.5 * ((a[i] - b[i]).abs() + (a[i - 1] - b[i - 1]).abs()) * dx;
            cdf_a += 0.5 * (a[i] + a[i - 1]) * dx;
            cdf_b += 0.5 * (b[i] + b[i - 1]) * dx;
            ks = ks.max((cdf_a - cdf_b).abs());
        }
    }
    Metrics { l1, linf, ks }
}

#[derive(Debug, Serialize)]
pub struct ComparisonReport {
    pub t: f64,
    pub methods: Vec<String>,
    /// Pairwise metrics keyed `"<a>_vs_<b>"`.
    pub metrics: BTreeMap<String, Metrics>,
    pub runtime_seconds: BTreeMap<String, f64>,
}

/// Labelled curves produced by one comparison run.
pub type LabelledCurves = Vec<(String, DensityCurve)>;

/// Run every requested method on the shared abscissae and compare all pairs.
pub fn run_comparison(
    cfg: &RunConfig,
    model: &SddeModel,
    t: f64,
    methods: &[Method],
    seed: Option<u64>,
) -> CliResult<(ComparisonReport, Vec<f64>, LabelledCurves)> {
    if methods.len() < 2 {
        return Err(CliError::Config("compare needs at least two --method arguments".into()));
    }
    let xs = cfg.grid.abscissae();
    let mut curves: Vec<(String, DensityCurve)> = Vec::with_capacity(methods.len());
    let mut runtime_seconds = BTreeMap::new();
    for (i, &m) in methods.iter().enumerate() {
        let start = Instant::now();
        let curve = compute_curve(cfg, model, t, m, seed)?;
        // Duplicate method names stay distinguishable in the report.
        let name = if methods[..i].contains(&m) { format!("{m}#{i}") } else { m.to_string() };
        runtime_seconds.insert(name.clone(), start.elapsed().as_secs_f64());
        curves.push((name, curve));
    }
    let mut pairwise = BTreeMap::new();
    for i in 0..curves.len() {
        for j in i + 1..curves.len() {
            let key = format!("{}_vs_{}", curves[i].0, curves[j].0);
            pairwise.insert(key, metrics(&xs, &curves[i].1.values, &curves[j].1.values));
        }
    }
    let report = ComparisonReport {
        t,
        methods: curves.iter().map(|(n, _)| n.clone()).collect(),
        metrics: pairwise,
        runtime_seconds,
    };
    Ok((report, xs, curves))
}
