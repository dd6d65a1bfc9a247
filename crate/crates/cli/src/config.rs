//! Experiment configuration.

use std::path::PathBuf;

use magdecay::algebra::assembly::KernelPart;
use magdecay::{Grid3D, PotentialSpec};
use serde::{Deserialize, Serialize};

type Vec3 = [f64; 3];

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// `scalar` terms form `V`, `vector` terms form `A`.
    #[serde(default)]
    pub potentials: PotentialSpec,
    pub grid: GridConfig,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub norms: NormsConfig,
    #[serde(default)]
    pub spectrum: SpectrumConfig,
    #[serde(default)]
    pub decay: DecayConfig,
    #[serde(default)]
    pub wave: WaveConfig,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default)]
    pub algebra: AlgebraConfig,
}

fn default_seed() -> u64 {
    7
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    #[serde(rename = "L")]
    pub l: f64,
}

impl GridConfig {
    pub fn build(&self) -> Result<Grid3D, String> {
        Grid3D::new(self.n, self.l).map_err(|e| e.to_string())
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct NormsConfig {
    /// Also evaluate membership in the spaces `X` and `Y`.
    #[serde(default = "yes")]
    pub membership: bool,
}

fn yes() -> bool {
    true
}

impl Default for NormsConfig {
    fn default() -> Self {
        Self { membership: true }
    }
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    /// Fixed number of eigenpairs; by default the block grows past the bound states.
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub regularity: bool,
    /// Grid for the regularity diagnostic; defaults to the main grid.
    #[serde(default)]
    pub regularity_grid: Option<GridConfig>,
    #[serde(default)]
    pub write_vectors: bool,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DecayConfig {
    #[serde(default = "default_window")]
    pub window: [f64; 2],
    /// Width `w` of the initial gaussian `exp(-|x|^2 / w^2)`.
    #[serde(default = "one")]
    pub width: f64,
    #[serde(default = "default_decay_tol")]
    pub tolerance: f64,
}

fn default_window() -> [f64; 2] {
    [2.0, 8.0]
}

fn one() -> f64 {
    1.0
}

fn default_decay_tol() -> f64 {
    0.05
}

impl Default for DecayConfig {
    fn default() -> Self {
        Self { window: default_window(), width: 1.0, tolerance: default_decay_tol() }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct WaveConfig {
    /// Probe pairs `[x, y]`, snapped to the nearest grid nodes.
    #[serde(default = "default_pairs")]
    pub pairs: Vec<[Vec3; 2]>,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub kappa: Option<f64>,
}

fn default_pairs() -> Vec<[Vec3; 2]> {
    vec![[[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]], [[0.0, 1.5, 0.0], [0.0, -1.5, 0.0]]]
}

fn default_t_max() -> f64 {
    4.0
}

fn default_dt() -> f64 {
    0.02
}

impl Default for WaveConfig {
    fn default() -> Self {
        Self { pairs: default_pairs(), t_max: default_t_max(), dt: default_dt(), kappa: None }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    #[serde(default = "default_x")]
    pub x: Vec3,
    #[serde(default = "default_z")]
    pub z: Vec3,
    /// Outer radius of the foliation.
    #[serde(default = "default_reach")]
    pub reach: f64,
}

fn default_x() -> Vec3 {
    [-0.5, 0.0, 0.0]
}

fn default_z() -> Vec3 {
    [0.5, 0.0, 0.0]
}

fn default_reach() -> f64 {
    14.0
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self { x: default_x(), z: default_z(), reach: default_reach() }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct AlgebraConfig {
    #[serde(default = "default_x")]
    pub x: Vec3,
    #[serde(default = "default_z")]
    pub z: Vec3,
    #[serde(default = "default_rho_max")]
    pub rho_max: f64,
    /// Kernel parts to assemble (`T1`, `T4`, `TTILDE`, ...).
    #[serde(default = "default_parts")]
    pub parts: Vec<KernelPart>,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    /// Use the coarse assembly rule.
    #[serde(default = "yes")]
    pub coarse: bool,
    /// Size of the random kernel corpus for the algebra checks.
    #[serde(default = "default_corpus")]
    pub corpus: usize,
}

fn default_rho_max() -> f64 {
    4.0
}

fn default_parts() -> Vec<KernelPart> {
    vec![KernelPart::T4]
}

fn default_lambdas() -> Vec<f64> {
    vec![0.0, 1.0, 2.0]
}

fn default_corpus() -> usize {
    20
}

impl Default for AlgebraConfig {
    fn default() -> Self {
        Self {
            x: default_x(),
            z: default_z(),
            rho_max: default_rho_max(),
            parts: default_parts(),
            lambdas: default_lambdas(),
            coarse: true,
            corpus: default_corpus(),
        }
    }
}

/// Parses and validates a config, reporting the line and column of schema errors.
pub fn parse(text: &str) -> Result<ExperimentConfig, String> {
    let cfg: ExperimentConfig =
        serde_json::from_str(text).map_err(|e| format!("config line {} column {}: {e}", e.line(), e.column()))?;
    cfg.potentials.validate().map_err(|e| e.to_string())?;
    cfg.grid.build()?;
    if let Some(g) = &cfg.spectrum.regularity_grid {
        g.build()?;
    }
    let [t1, t2] = cfg.decay.window;
    if !(t1 > 0.0 && t2 > t1) {
        return Err(format!("decay.window [{t1}, {t2}] must satisfy 0 < t1 < t2"));
    }
    if !(cfg.decay.width > 0.0 && cfg.decay.tolerance > 0.0) {
        return Err("decay.width and decay.tolerance must be positive".into());
    }
    if !(cfg.wave.t_max > 0.0 && cfg.wave.dt > 0.0 && cfg.wave.dt < cfg.wave.t_max) {
        return Err("wave needs 0 < dt < t_max".into());
    }
    if cfg.wave.pairs.is_empty() {
        return Err("wave.pairs is empty".into());
    }
    if !(cfg.algebra.rho_max > 0.0) || cfg.algebra.lambdas.iter().any(|l| !l.is_finite()) {
        return Err("algebra needs rho_max > 0 and finite lambdas".into());
    }
    Ok(cfg)
}
