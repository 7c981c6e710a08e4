//! Macroscale linear elasticity: materials, the proximal load case and the
//! constrained stiffness system.

use nalgebra::Matrix6;
use serde::{Deserialize, Serialize};

use super::domain::MacroDomain;
use super::sparse::{pcg, Assembly, CgFailure};
use super::MacroError;
use crate::tensor::IsotropicMaterial;

/// Materials of the non-scaffold regions and the scaffold polymer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Materials {
    pub scaffold: IsotropicMaterial,
    pub bone: IsotropicMaterial,
    pub marrow: IsotropicMaterial,
    pub fixator: IsotropicMaterial,
    pub nail: IsotropicMaterial,
}

impl Default for Materials {
    fn default() -> Self {
        Self {
            scaffold: IsotropicMaterial::PCL,
            bone: IsotropicMaterial::BONE,
            marrow: IsotropicMaterial { youngs_modulus: 2.0, poisson_ratio: 0.3 },
            fixator: IsotropicMaterial::PEEK,
            nail: IsotropicMaterial::TITANIUM,
        }
    }
}

impl Materials {
    pub fn validate(&self) -> Result<(), MacroError> {
        for (name, m) in [
            ("scaffold", self.scaffold),
            ("bone", self.bone),
            ("marrow", self.marrow),
            ("fixator", self.fixator),
            ("nail", self.nail),
        ] {
            m.validate().map_err(|e| MacroError::InvalidSettings(format!("{name} material: {e}")))?;
        }
        Ok(())
    }
}

/// Axial compression and two tangential (bending) forces in N, applied as a
/// uniform traction on the cortical ring of the proximal face.
///
/// The traction is the first row of `σ_comp + σ_bend`, i.e.
/// `(-axial, -tangential[0], tangential[1]) / |Γ_N|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadCase {
    pub axial: f64,
    pub tangential: [f64; 2],
}

impl Default for LoadCase {
    fn default() -> Self {
        Self { axial: 14.7, tangential: [1.8, 1.8] }
    }
}

impl LoadCase {
    pub fn resultant(&self) -> [f64; 3] {
        [-self.axial, -self.tangential[0], self.tangential[1]]
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self { axial: k * self.axial, tangential: self.tangential.map(|t| k * t) }
    }

    /// Consistent nodal forces of the uniform traction (bilinear faces
    /// share a face load equally between their corners).
    pub fn nodal_forces(&self, domain: &MacroDomain) -> Vec<f64> {
        let mut f = vec![0.0; 3 * domain.node_count()];
        let area = domain.loaded_area();
        if area == 0.0 {
            return f;
        }
        let total = self.resultant();
        for face in &domain.loaded {
            let share = face.area / area / 4.0;
            for &v in &face.nodes {
                for c in 0..3 {
                    f[3 * v + c] += total[c] * share;
                }
            }
        }
        f
    }
}

/// Stiffness pattern with clamped distal nodes.
#[derive(Debug, Clone)]
pub(crate) struct ElasticSystem {
    pub assembly: Assembly,
    pub fixed: Vec<bool>,
}

impl ElasticSystem {
    pub fn new(domain: &MacroDomain) -> Self {
        let elements: Vec<Vec<usize>> =
            domain.elements.iter().map(|e| e.nodes.iter().flat_map(|&v| [3 * v, 3 * v + 1, 3 * v + 2]).collect()).collect();
        let assembly = Assembly::new(3 * domain.node_count(), &elements);
        let mut fixed = vec![false; 3 * domain.node_count()];
        for &v in &domain.clamped {
            fixed[3 * v..3 * v + 3].fill(true);
        }
        Self { assembly, fixed }
    }

    /// Constrained global stiffness for per-element Voigt tensors.
    pub fn matrix(&self, domain: &MacroDomain, stiffness: &[Matrix6<f64>]) -> Vec<f64> {
        let mut values = self.assembly.assemble(|e| {
            let basis = &domain.bases[domain.elements[e].basis];
            basis.elastic_matrix(&stiffness[e]).to_vec()
        });
        self.assembly.pattern.constrain(&mut values, &self.fixed);
        values
    }

    /// Solves with a right-hand side that is zeroed on clamped entries.
    pub fn solve(
        &self,
        values: &[f64],
        rhs: &mut [f64],
        x: &mut [f64],
        tol: f64,
        max_iter: usize,
    ) -> Result<usize, MacroError> {
        for (r, &f) in rhs.iter_mut().zip(&self.fixed) {
            if f {
                *r = 0.0;
            }
        }
        for (v, &f) in x.iter_mut().zip(&self.fixed) {
            if f {
                *v = 0.0;
            }
        }
        pcg(&self.assembly.pattern, values, rhs, x, tol, max_iter).map(|r| r.iterations).map_err(|e| match e {
            CgFailure::Breakdown { iteration } => MacroError::Singular { system: "elasticity", iteration },
            CgFailure::NotConverged { iterations, relative_residual } => {
                MacroError::NotConverged { system: "elasticity", iterations, residual: relative_residual }
            }
        })
    }
}
