//! Run configuration read from TOML. Every section is optional and falls
//! back to the defaults below; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coefficients::DEFAULT_K_MIG;
use crate::fft_solver::SolverOptions;
use crate::geometry::{SurfaceKind, DEFAULT_SOLID_DIFFUSION_CONTRAST, DEFAULT_VOID_CONTRAST};
use crate::macroscale::{
    default_decay_rate, DomainConfig, LinearSolverOptions, LoadCase, MacroDomain, MacroError, MacroModel, Materials, Mode,
    ScaffoldDesign,
};
use crate::optimize::{Objective, OptimizeOptions};
use crate::stimulus::{RateTable, DEFAULT_SHARPNESS};
use crate::table::{default_ost_axis, default_rho_axis, TableMetadata, TabulationSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

impl From<MacroError> for ConfigError {
    fn from(e: MacroError) -> Self {
        ConfigError::Invalid(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub kind: SurfaceKind,
    /// Voxels per microcell edge.
    pub cell_resolution: usize,
    /// Unit cells per mm in the printed scaffold.
    pub cells_per_mm: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self { kind: SurfaceKind::Gyroid, cell_resolution: 32, cells_per_mm: 0.75 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TableConfig {
    pub path: PathBuf,
    pub rho: Vec<f64>,
    pub c_ost: Vec<f64>,
    pub void_contrast: f64,
    pub diffusion_contrast: f64,
    pub solver: SolverOptions,
}

impl Default for TableConfig {
    fn default() -> Self {
        Self {
            path: PathBuf::from("table.schom"),
            rho: default_rho_axis(),
            c_ost: default_ost_axis(),
            void_contrast: DEFAULT_VOID_CONTRAST,
            diffusion_contrast: DEFAULT_SOLID_DIFFUSION_CONTRAST,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub mode: Mode,
    /// Simulated time in days.
    pub days: f64,
    /// Time step in days.
    pub dt: f64,
    /// Initial scaffold density (1 - porosity).
    pub initial_density: f64,
    /// Scaffold decay rate `k₁`, 1/day.
    pub decay_rate: f64,
    /// Migration coefficient, mm²/day.
    pub k_mig: f64,
    /// Steepness of the stimulus activations.
    pub sharpness: f64,
    /// VTK snapshot interval in steps; 0 writes only the first and last day.
    pub vtk_every: usize,
    pub solver: LinearSolverOptions,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Eds,
            days: 140.0,
            dt: 1.0,
            initial_density: 0.21,
            decay_rate: default_decay_rate(),
            k_mig: DEFAULT_K_MIG,
            sharpness: DEFAULT_SHARPNESS,
            vtk_every: 0,
            solver: LinearSolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructConfig {
    /// Per-element design CSV; the initial density is used when unset.
    pub design: Option<PathBuf>,
    /// Sampling points per mm.
    pub resolution: f64,
}

impl Default for ReconstructConfig {
    fn default() -> Self {
        Self { design: None, resolution: 40.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    /// Seed for randomized diagnostics.
    pub seed: u64,
    pub geometry: GeometryConfig,
    pub table: TableConfig,
    pub domain: DomainConfig,
    pub materials: Materials,
    pub loads: LoadCase,
    pub simulation: SimulationConfig,
    pub objective: Objective,
    pub optimization: OptimizeOptions,
    pub reconstruct: ReconstructConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("output"),
            seed: 0,
            geometry: GeometryConfig::default(),
            table: TableConfig::default(),
            domain: DomainConfig::default(),
            materials: Materials::default(),
            loads: LoadCase::default(),
            simulation: SimulationConfig::default(),
            objective: Objective::default(),
            optimization: OptimizeOptions::default(),
            reconstruct: ReconstructConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a file; relative paths inside it are resolved against its
    /// directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(dir) = path.parent() {
            let rebase = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            };
            rebase(&mut cfg.output_dir);
            rebase(&mut cfg.table.path);
            if let Some(d) = cfg.reconstruct.design.as_mut() {
                rebase(d);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.geometry.cell_resolution == 0 {
            return bad("geometry.cell_resolution must be positive".into());
        }
        if !(self.geometry.cells_per_mm > 0.0) {
            return bad("geometry.cells_per_mm must be positive".into());
        }
        self.tabulation_spec().validate().map_err(|e| ConfigError::Invalid(format!("table: {e}")))?;
        self.domain.validate()?;
        self.materials.validate()?;
        let s = &self.simulation;
        if !(s.dt > 0.0 && s.days >= 0.0) {
            return bad(format!("simulation needs dt > 0 and days >= 0 (dt = {}, days = {})", s.dt, s.days));
        }
        if !(s.k_mig > 0.0 && s.sharpness > 0.0 && s.decay_rate >= 0.0) {
            return bad("simulation.k_mig and sharpness must be positive, decay_rate nonnegative".into());
        }
        let o = &self.optimization;
        o.validate()?;
        if !(s.initial_density >= o.lower && s.initial_density <= o.upper) {
            return bad(format!(
                "initial density {} outside the box [{}, {}]",
                s.initial_density, o.lower, o.upper
            ));
        }
        self.objective.validate()?;
        if !(self.reconstruct.resolution > 0.0) {
            return bad("reconstruct.resolution must be positive".into());
        }
        Ok(())
    }

    pub fn tabulation_spec(&self) -> TabulationSpec {
        TabulationSpec {
            kind: self.geometry.kind,
            rho_samples: self.table.rho.clone(),
            ost_samples: self.table.c_ost.clone(),
            n: self.geometry.cell_resolution,
            metadata: TableMetadata {
                scaffold: self.materials.scaffold,
                bone: self.materials.bone,
                void_contrast: self.table.void_contrast,
                k_mig: self.simulation.k_mig,
                diffusion_contrast: self.table.diffusion_contrast,
                solver: self.table.solver,
            },
        }
    }

    pub fn model(&self) -> Result<MacroModel, MacroError> {
        let domain = MacroDomain::cylinder(&self.domain)?;
        let s = &self.simulation;
        let mut model = MacroModel::new(domain, self.materials, self.loads, s.dt, s.days)?;
        model.rates = RateTable::with_sharpness(s.sharpness);
        model.law.k_mig = s.k_mig;
        model.law.void_contrast = self.table.void_contrast;
        model.solver = s.solver;
        Ok(model)
    }

    pub fn initial_design(&self, model: &MacroModel) -> ScaffoldDesign {
        ScaffoldDesign::uniform(model.defect_elements(), self.simulation.initial_density, self.simulation.decay_rate)
    }
}
