//! Macroscale bone-defect model: linear elasticity with fixator, bone and
//! scaffold regions, coupled to four-species reaction-diffusion of cell
//! volume fractions on the defect.

pub(crate) mod cells;
pub mod domain;
pub(crate) mod elasticity;
pub mod hex;
pub(crate) mod model;
pub mod sparse;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::table::TableError;

pub use cells::{reaction, CellState, SPECIES};
pub use domain::{DefectMesh, DomainConfig, Element, FixatorConfig, LoadedFace, MacroDomain, Region};
pub use elasticity::{LoadCase, Materials};
pub use model::{ElasticState, LinearSolverOptions, MacroModel, StepFields, Trajectory};

/// Lower and upper bound of the scaffold density.
pub const DENSITY_BOUNDS: (f64, f64) = (0.1, 0.99);

/// Scaffold decay rate giving half the material left after 140 days.
pub fn default_decay_rate() -> f64 {
    std::f64::consts::LN_2 / 140.0
}

/// Which effective quantities come from cell solves.
///
/// `N`: mixture-law tensors and pointwise stimulus. `ED`: tabulated
/// stiffness and diffusivity, pointwise stimulus. `EDS`: additionally the
/// cell-averaged stimulus through the tabulated corrector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    N,
    Ed,
    Eds,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::N => "n",
            Mode::Ed => "ed",
            Mode::Eds => "eds",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "n" => Ok(Mode::N),
            "ed" => Ok(Mode::Ed),
            "eds" => Ok(Mode::Eds),
            other => Err(format!("unknown mode '{other}' (expected n, ed or eds)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum MacroError {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("invalid design: {0}")]
    InvalidDesign(String),
    #[error("invalid settings: {0}")]
    InvalidSettings(String),
    #[error("{system} system is singular or indefinite (breakdown at iteration {iteration})")]
    Singular { system: &'static str, iteration: usize },
    #[error("{system} solve did not converge: residual {residual:.3e} after {iterations} iterations")]
    NotConverged { system: &'static str, iterations: usize, residual: f64 },
    #[error(transparent)]
    Table(#[from] TableError),
}

/// Per-element scaffold density on the defect and its decay rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaffoldDesign {
    pub density: Vec<f64>,
    /// `k₁` in `σ(t) = exp(-k₁ t)`, 1/day.
    pub decay_rate: f64,
}

impl ScaffoldDesign {
    pub fn uniform(elements: usize, density: f64, decay_rate: f64) -> Self {
        Self { density: vec![density; elements], decay_rate }
    }

    /// Remaining fraction of scaffold material at day `t`.
    pub fn decay(&self, t: f64) -> f64 {
        (-self.decay_rate * t).exp()
    }

    pub fn validate(&self, elements: usize, bounds: (f64, f64)) -> Result<(), MacroError> {
        if self.density.len() != elements {
            return Err(MacroError::InvalidDesign(format!(
                "{} densities for {elements} defect elements",
                self.density.len()
            )));
        }
        if !(self.decay_rate >= 0.0 && self.decay_rate.is_finite()) {
            return Err(MacroError::InvalidDesign(format!("decay rate {}", self.decay_rate)));
        }
        if let Some((e, rho)) =
            self.density.iter().enumerate().find(|(_, &r)| !(r >= bounds.0 - 1e-12 && r <= bounds.1 + 1e-12))
        {
            return Err(MacroError::InvalidDesign(format!(
                "density {rho} of element {e} outside [{}, {}]",
                bounds.0, bounds.1
            )));
        }
        Ok(())
    }
}
