//! The run configuration document. One JSON file describes the model and
//! every numeric knob; command-line flags only select the subcommand, the
//! evaluation time, the method and the output path, so a run is reproducible
//! from the file alone.

use serde::Deserialize;

use sdde_core::model::{HistoryFunction, SddeModel};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelBlock,
    #[serde(default)]
    pub grid: GridBlock,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub quadrature: QuadratureBlock,
    #[serde(default)]
    pub mc: McBlock,
    #[serde(default)]
    pub output: OutputBlock,
    #[serde(default)]
    pub kernel: Option<KernelBlock>,
    #[serde(default)]
    pub bridge: Option<BridgeBlock>,
}

impl RunConfig {
    /// Range checks that the type system cannot express.
    pub fn validate(&self) -> Result<(), String> {
        if self.grid.axes.is_empty() {
            return Err("grid.axes must not be empty".into());
        }
        for (i, a) in self.grid.axes.iter().enumerate() {
            if !(a.min < a.max) || a.n < 2 {
                return Err(format!("grid.axes[{i}]: need min < max and n >= 2"));
            }
        }
        if !(self.solver.dt > 0.0) || self.solver.nodes_per_axis < 8 {
            return Err("solver: need dt > 0 and nodes_per_axis >= 8".into());
        }
        if !(self.quadrature.halfwidth > 0.0) || self.quadrature.points < 16 {
            return Err("quadrature: need halfwidth > 0 and points >= 16".into());
        }
        if !(self.mc.dt > 0.0) || self.mc.n_paths == 0 || self.mc.bins == 0 {
            return Err("mc: need dt > 0, n_paths >= 1 and bins >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub s0: f64,
    pub s1: f64,
    pub s2: f64,
    pub tau: f64,
    /// Polynomial history coefficients, constant term first.
    pub history: Vec<f64>,
}

impl ModelBlock {
    pub fn build(&self) -> sdde_core::Result<SddeModel> {
        SddeModel::new(
            self.a,
            self.b,
            self.c,
            self.s0,
            self.s1,
            self.s2,
            self.tau,
            HistoryFunction::new(self.history.clone()),
        )
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisBlock {
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub axes: Vec<AxisBlock>,
}

impl Default for GridBlock {
    fn default() -> Self {
        Self { axes: vec![AxisBlock { min: -8.0, max: 8.0, n: 801 }] }
    }
}

impl GridBlock {
    /// Abscissae of the first axis; the x-column of every density curve.
    pub fn abscissae(&self) -> Vec<f64> {
        let a = &self.axes[0];
        (0..a.n)
            .map(|i| a.min + (a.max - a.min) * i as f64 / (a.n - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverBlock {
    pub dt: f64,
    pub delta_init_eps: Option<f64>,
    /// Nodes per axis of the adaptive per-conditioning-point solve grids
    /// used by the fp method inside compositions.
    pub nodes_per_axis: usize,
}

impl Default for SolverBlock {
    fn default() -> Self {
        Self { dt: 1e-3, delta_init_eps: None, nodes_per_axis: 65 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureBlock {
    /// Half-width of every integration window.
    pub halfwidth: f64,
    /// Centre of the windows.
    pub center: f64,
    /// Trapezoid nodes per axis.
    pub points: usize,
}

impl Default for QuadratureBlock {
    fn default() -> Self {
        Self { halfwidth: 8.0, center: 0.0, points: 400 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McBlock {
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Histogram bin count for density estimates.
    pub bins: usize,
}

impl Default for McBlock {
    fn default() -> Self {
        Self { dt: 1e-3, n_paths: 100_000, seed: 42, bins: 200 }
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    pub path: Option<String>,
    pub format: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelBlock {
    /// Conditioning state, length k.
    pub v: Vec<f64>,
    /// Conditioning segment time.
    #[serde(default)]
    pub s: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BridgeBlock {
    pub v0: Vec<f64>,
    pub v1: Vec<f64>,
    #[serde(default)]
    pub t_prime: Option<f64>,
}
