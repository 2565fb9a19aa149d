//! `sdde`: densities of scalar stochastic delay differential equations.
//!
//! A run is described by one JSON configuration file (model coefficients,
//! grids, solver and sampler settings); flags pick the subcommand, the
//! evaluation time, the method and the output path. Exit codes are a stable
//! contract: 0 success, 2 configuration error, 3 model-assumption violation,
//! 4 numeric failure.

// `!(x > 0.0)` style comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod output;
mod pipeline;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use sdde_core::composition::bridge_density;
use sdde_core::fokker_planck::{solve_kernel, Axis, DensityField, Grid, SolverConfig};
use sdde_core::model::AugmentedSystem;
use sdde_core::montecarlo::{estimate_density, estimate_kernel, simulate_sdde, SimConfig};

use config::RunConfig;
use pipeline::{compute_curve, make_kernel, run_comparison, CliError, CliResult, Method};

#[derive(Parser)]
#[command(name = "sdde", version, about = "Densities of scalar SDEs with one discrete delay")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the density curve P_A(., t) and write it as CSV.
    Density {
        #[arg(long)]
        config: PathBuf,
        /// Evaluation time.
        #[arg(long)]
        t: f64,
        #[arg(long, value_enum, default_value_t = Method::Analytic)]
        method: Method,
        /// Output CSV path (falls back to output.path from the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the Monte Carlo seed from the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare two or more methods on a shared abscissa set; writes a JSON
    /// report and a curves CSV next to it.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        t: f64,
        /// Repeatable: one occurrence per method.
        #[arg(long = "method", value_enum, action = clap::ArgAction::Append)]
        methods: Vec<Method>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Euler-Maruyama ensemble at the requested times: histogram CSV, or raw
    /// samples with --raw.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated observation times.
        #[arg(long, value_delimiter = ',', required = true)]
        times: Vec<f64>,
        /// Emit path,time,value rows instead of histograms.
        #[arg(long)]
        raw: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Dump a transition-kernel grid Q_k(.; t | v; s) for the conditioning
    /// point in the config's kernel block.
    Kernel {
        #[arg(long)]
        config: PathBuf,
        /// Kernel evaluation time.
        #[arg(long)]
        t: f64,
        #[arg(long, value_enum, default_value_t = Method::Fp)]
        method: Method,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate the pinned-endpoint (bridge) density over the grid axis.
    Bridge {
        #[arg(long)]
        config: PathBuf,
        /// Interior segment time; falls back to the config's bridge block.
        #[arg(long)]
        t_prime: Option<f64>,
        #[arg(long, value_enum, default_value_t = Method::Analytic)]
        method: Method,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(e.exit_code());
        }
    }
}

fn load_config(path: &Path) -> CliResult<RunConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let cfg: RunConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("cannot parse {}: {e}", path.display())))?;
    cfg.validate().map_err(CliError::Config)?;
    Ok(cfg)
}

fn resolve_out(cfg: &RunConfig, out: Option<PathBuf>) -> CliResult<PathBuf> {
    out.or_else(|| cfg.output.path.as_ref().map(PathBuf::from)).ok_or_else(|| {
        CliError::Config("no output path: pass --out or set output.path in the config".into())
    })
}

fn dispatch(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Density { config, t, method, out, seed } => {
            let cfg = load_config(&config)?;
            let model = cfg.model.build()?;
            let out = resolve_out(&cfg, out)?;
            let curve = compute_curve(&cfg, &model, t, method, seed)?;
            output::write_density_csv(&out, &curve, &[])?;
            Ok(())
        }
        Command::Compare { config, t, methods, out, seed } => {
            let cfg = load_config(&config)?;
            let model = cfg.model.build()?;
            let out = resolve_out(&cfg, out)?;
            let (report, xs, curves) = run_comparison(&cfg, &model, t, &methods, seed)?;
            output::write_report_json(&out, &report)?;
            let curves_path = out.with_extension("curves.csv");
            output::write_curves_csv(&curves_path, &xs, &curves)?;
            Ok(())
        }
        Command::Simulate { config, times, raw, out, seed } => {
            let cfg = load_config(&config)?;
            let model = cfg.model.build()?;
            let out = resolve_out(&cfg, out)?;
            let t_max = times.iter().cloned().fold(0.0f64, f64::max);
            let sim = SimConfig {
                dt: cfg.mc.dt,
                n_paths: cfg.mc.n_paths,
                seed: seed.unwrap_or(cfg.mc.seed),
                t_max,
            };
            let ens = simulate_sdde(&model, &sim, &times)?;
            if raw {
                output::write_raw_samples_csv(&out, &ens)?;
            } else {
                let window = {
                    let a = &cfg.grid.axes[0];
                    (a.min, a.max)
                };
                let mut per_time = Vec::with_capacity(times.len());
                for (ti, &t) in times.iter().enumerate() {
                    per_time.push((t, estimate_density(&ens.column(ti), cfg.mc.bins, window)?));
                }
                output::write_histograms_csv(&out, &per_time)?;
            }
            Ok(())
        }
        Command::Kernel { config, t, method, out, seed } => {
            let cfg = load_config(&config)?;
            let model = cfg.model.build()?;
            let out = resolve_out(&cfg, out)?;
            let kernel_block = cfg.kernel.clone().ok_or_else(|| {
                CliError::Config("the kernel subcommand needs a kernel block in the config".into())
            })?;
            let k = kernel_block.v.len();
            if cfg.grid.axes.len() != k {
                return Err(CliError::Config(format!(
                    "kernel conditioning point has {k} components but the grid has {} axes",
                    cfg.grid.axes.len()
                )));
            }
            let mut axes = Vec::with_capacity(k);
            for a in &cfg.grid.axes {
                axes.push(Axis::new(a.min, a.max, a.n)?);
            }
            let grid = Grid::new(axes)?;
            let aug = AugmentedSystem::new(model.clone(), k)?;
            let (field, label) = match method {
                Method::Fp => {
                    let solver = SolverConfig {
                        dt: cfg.solver.dt,
                        delta_init_eps: cfg.solver.delta_init_eps,
                        ..SolverConfig::default()
                    };
                    let field =
                        solve_kernel(&aug, &kernel_block.v, kernel_block.s, t, &grid, &solver)?;
                    (field, "grid")
                }
                Method::Mc => {
                    let sim = SimConfig {
                        dt: cfg.mc.dt,
                        n_paths: cfg.mc.n_paths,
                        seed: seed.unwrap_or(cfg.mc.seed),
                        t_max: t,
                    };
                    let kern =
                        estimate_kernel(&aug, &kernel_block.v, kernel_block.s, t, &grid, &sim)?;
                    (kern.field().clone(), "monte-carlo")
                }
                Method::Analytic => {
                    let handle = make_kernel(Method::Analytic, &model, k, &cfg)?;
                    let mut coords = vec![0.0; k];
                    let mut values = vec![0.0; grid.node_count()];
                    for (i, value) in values.iter_mut().enumerate() {
                        grid.coords(i, &mut coords);
                        *value = handle.density(&coords, t, &kernel_block.v, kernel_block.s)?;
                    }
                    (DensityField::from_values(grid, values, t)?, "analytic")
                }
            };
            output::write_field_csv(&out, &field, label)?;
            Ok(())
        }
        Command::Bridge { config, t_prime, method, out } => {
            let cfg = load_config(&config)?;
            let model = cfg.model.build()?;
            let out = resolve_out(&cfg, out)?;
            let bridge = cfg.bridge.clone().ok_or_else(|| {
                CliError::Config("the bridge subcommand needs a bridge block in the config".into())
            })?;
            let tp = t_prime.or(bridge.t_prime).ok_or_else(|| {
                CliError::Config("no bridge time: pass --t-prime or set bridge.t_prime".into())
            })?;
            let k = bridge.v0.len();
            if bridge.v1.len() != k {
                return Err(CliError::Config("bridge v0 and v1 must have equal length".into()));
            }
            if k != 1 {
                return Err(CliError::Config(
                    "the bridge subcommand renders a curve for scalar (k = 1) states; \
                     higher-dimensional bridges are available through the library"
                        .into(),
                ));
            }
            if matches!(method, Method::Mc) {
                return Err(CliError::Config(
                    "the bridge needs kernel evaluations at arbitrary conditioning points; \
                     use the analytic or fp method"
                        .into(),
                ));
            }
            let handle = make_kernel(method, &model, 1, &cfg)?;
            let xs = cfg.grid.abscissae();
            let mut values = Vec::with_capacity(xs.len());
            for &u in &xs {
                values.push(bridge_density(&*handle, &[u], tp, &bridge.v0, &bridge.v1, model.tau)?);
            }
            let curve = sdde_core::composition::DensityCurve::new(
                xs,
                values,
                tp,
                method.to_string(),
            );
            output::write_density_csv(&out, &curve, &[])?;
            Ok(())
        }
    }
}
