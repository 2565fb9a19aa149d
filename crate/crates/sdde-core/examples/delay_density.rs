//! Compute the delay density of the benchmark problem at an interior time
//! three ways (closed form, Fokker-Planck grid kernels, Monte Carlo) and
//! print them side by side.
//!
//! Run with: cargo run --release --example delay_density

use sdde_core::analytic::benchmark;
use sdde_core::composition::{density_general, QuadratureGrid};
use sdde_core::kernel::{BenchmarkQ2Kernel, GridKernel, GridKernelConfig, HeatKernel};
use sdde_core::model::AugmentedSystem;
use sdde_core::montecarlo::{estimate_density, simulate_sdde, SimConfig};

fn main() {
    let t = 1.5;
    let model = benchmark::model();
    let xs: Vec<f64> = (0..61).map(|i| -6.0 + 0.2 * i as f64).collect();

    // Closed-form kernels through the interior-time composition.
    let quad = QuadratureGrid::symmetric(2, 8.0, 200).unwrap();
    let analytic =
        density_general(&BenchmarkQ2Kernel, &HeatKernel, 0.0, &xs, t, 2, 1.0, &quad).unwrap();

    // Finite-difference kernels behind the same composition.
    let q2 = GridKernel::new(
        AugmentedSystem::new(model.clone(), 2).unwrap(),
        GridKernelConfig { nodes_per_axis: 65, dt: 1e-3, ..Default::default() },
    )
    .unwrap();
    let q1 = GridKernel::new(
        AugmentedSystem::new(model.clone(), 1).unwrap(),
        GridKernelConfig { nodes_per_axis: 65, dt: 1e-3, ..Default::default() },
    )
    .unwrap();
    let quad_fp = QuadratureGrid::symmetric(2, 6.0, 64).unwrap();
    let numeric = density_general(&q2, &q1, 0.0, &xs, t, 2, 1.0, &quad_fp).unwrap();

    // Independent Monte Carlo histogram.
    let sim = SimConfig { dt: 1e-3, n_paths: 100_000, seed: 42, t_max: t };
    let ens = simulate_sdde(&model, &sim, &[t]).unwrap();
    let hist = estimate_density(&ens.column(0), 61, (-6.1, 6.1)).unwrap();

    println!("{:>6}  {:>12}  {:>12}  {:>12}  {:>12}", "x", "exact", "analytic", "fp", "mc");
    for (i, &x) in xs.iter().enumerate() {
        if i % 5 == 0 {
            println!(
                "{x:6.1}  {:12.6}  {:12.6}  {:12.6}  {:12.6}",
                benchmark::exact_density(x, t).unwrap(),
                analytic.values[i],
                numeric.values[i],
                hist.heights()[i],
            );
        }
    }
    println!(
        "\ncurve masses: analytic {:.6}, fp {:.6}, mc {:.6}",
        analytic.mass,
        numeric.mass,
        hist.mass()
    );
}
