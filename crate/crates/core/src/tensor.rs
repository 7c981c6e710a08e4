//! Voigt notation helpers and isotropic materials.
//!
//! Voigt ordering is `11, 22, 33, 23, 13, 12`. Strain vectors use engineering
//! shear (`γ_ij = 2 ε_ij`) so that `σ = C ε` holds with the usual stiffness
//! matrix. "Tensor components" below means `[e11, e22, e33, e23, e13, e12]`
//! without the factor two.

use nalgebra::{Matrix3, Matrix6, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index pairs for the six Voigt slots.
pub const VOIGT_PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)];

/// Symmetric strain in tensor components `[e11, e22, e33, e23, e13, e12]`.
pub type SymComponents = [f64; 6];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaterialError {
    #[error("Young's modulus must be positive, got {0}")]
    NonPositiveModulus(f64),
    #[error("Poisson ratio must lie in (-1, 0.5), got {0}")]
    PoissonOutOfRange(f64),
}

/// Linear isotropic elastic material.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsotropicMaterial {
    /// MPa
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
}

impl IsotropicMaterial {
    /// Polycaprolactone scaffold.
    pub const PCL: Self = Self { youngs_modulus: 350.0, poisson_ratio: 0.33 };
    /// Mature bone.
    pub const BONE: Self = Self { youngs_modulus: 5000.0, poisson_ratio: 0.3 };
    /// Polyether-ether-ketone fixator bar.
    pub const PEEK: Self = Self { youngs_modulus: 3800.0, poisson_ratio: 0.3 };
    /// Titanium nails.
    pub const TITANIUM: Self = Self { youngs_modulus: 111_000.0, poisson_ratio: 0.33 };

    pub fn new(youngs_modulus: f64, poisson_ratio: f64) -> Result<Self, MaterialError> {
        let m = Self { youngs_modulus, poisson_ratio };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), MaterialError> {
        if !(self.youngs_modulus > 0.0) {
            return Err(MaterialError::NonPositiveModulus(self.youngs_modulus));
        }
        if !(self.poisson_ratio > -1.0 && self.poisson_ratio < 0.5) {
            return Err(MaterialError::PoissonOutOfRange(self.poisson_ratio));
        }
        Ok(())
    }

    /// Lamé pair `(λ, μ)`.
    pub fn lame(&self) -> (f64, f64) {
        let (e, nu) = (self.youngs_modulus, self.poisson_ratio);
        let lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
        let mu = e / (2.0 * (1.0 + nu));
        (lambda, mu)
    }

    pub fn voigt(&self) -> Matrix6<f64> {
        let (l, m) = self.lame();
        isotropic_voigt(l, m)
    }
}

/// Voigt stiffness of `C(λ, μ) ε = 2 μ ε + λ tr(ε) I`.
pub fn isotropic_voigt(lambda: f64, mu: f64) -> Matrix6<f64> {
    let mut c = Matrix6::zeros();
    for i in 0..3 {
        for j in 0..3 {
            c[(i, j)] = lambda;
        }
        c[(i, i)] += 2.0 * mu;
        c[(i + 3, i + 3)] = mu;
    }
    c
}

/// Unit strain tensor for Voigt slot `index` (engineering convention, so the
/// shear slots carry `1/2` off-diagonal entries).
pub fn unit_strain(index: usize) -> Matrix3<f64> {
    let (i, j) = VOIGT_PAIRS[index];
    let mut e = Matrix3::zeros();
    if i == j {
        e[(i, i)] = 1.0;
    } else {
        e[(i, j)] = 0.5;
        e[(j, i)] = 0.5;
    }
    e
}

/// Engineering Voigt vector of a symmetric strain tensor.
pub fn voigt_strain(eps: &Matrix3<f64>) -> Vector6<f64> {
    Vector6::new(
        eps[(0, 0)],
        eps[(1, 1)],
        eps[(2, 2)],
        eps[(1, 2)] + eps[(2, 1)],
        eps[(0, 2)] + eps[(2, 0)],
        eps[(0, 1)] + eps[(1, 0)],
    )
}

/// Inverse of [`voigt_strain`].
pub fn strain_from_voigt(v: &Vector6<f64>) -> Matrix3<f64> {
    Matrix3::new(
        v[0],
        0.5 * v[5],
        0.5 * v[4],
        0.5 * v[5],
        v[1],
        0.5 * v[3],
        0.5 * v[4],
        0.5 * v[3],
        v[2],
    )
}

pub fn components(eps: &Matrix3<f64>) -> SymComponents {
    [
        eps[(0, 0)],
        eps[(1, 1)],
        eps[(2, 2)],
        0.5 * (eps[(1, 2)] + eps[(2, 1)]),
        0.5 * (eps[(0, 2)] + eps[(2, 0)]),
        0.5 * (eps[(0, 1)] + eps[(1, 0)]),
    ]
}

pub fn from_components(c: &SymComponents) -> Matrix3<f64> {
    Matrix3::new(c[0], c[5], c[4], c[5], c[1], c[3], c[4], c[3], c[2])
}

/// Projection of a Voigt stiffness onto the cubic symmetry class
/// (three independent constants, axes aligned with the cell).
pub fn cubic_projection(c: &Matrix6<f64>) -> Matrix6<f64> {
    let c11 = (c[(0, 0)] + c[(1, 1)] + c[(2, 2)]) / 3.0;
    let c12 = (c[(0, 1)] + c[(1, 0)] + c[(0, 2)] + c[(2, 0)] + c[(1, 2)] + c[(2, 1)]) / 6.0;
    let c44 = (c[(3, 3)] + c[(4, 4)] + c[(5, 5)]) / 3.0;
    let mut p = Matrix6::zeros();
    for i in 0..3 {
        for j in 0..3 {
            p[(i, j)] = if i == j { c11 } else { c12 };
        }
        p[(i + 3, i + 3)] = c44;
    }
    p
}

/// Relative Frobenius distance from the cubic class.
pub fn cubic_residual(c: &Matrix6<f64>) -> f64 {
    (c - cubic_projection(c)).norm() / c.norm()
}

/// Relative Frobenius distance of a 3×3 tensor from its isotropic part.
pub fn isotropy_residual(d: &Matrix3<f64>) -> f64 {
    let iso = Matrix3::identity() * (d.trace() / 3.0);
    (d - iso).norm() / d.norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn lame_pairs_for_paper_materials() {
        let (l, m) = IsotropicMaterial::PCL.lame();
        assert_relative_eq!(l, 350.0 * 0.33 / (1.33 * 0.34), max_relative = 1e-14);
        assert_relative_eq!(m, 350.0 / 2.66, max_relative = 1e-14);
        let (l, m) = IsotropicMaterial::BONE.lame();
        assert_relative_eq!(l, 5000.0 * 0.3 / (1.3 * 0.4), max_relative = 1e-14);
        assert_relative_eq!(m, 5000.0 / 2.6, max_relative = 1e-14);
    }

    #[test]
    fn material_validation() {
        assert!(IsotropicMaterial::new(-1.0, 0.3).is_err());
        assert!(IsotropicMaterial::new(1.0, 0.5).is_err());
        assert!(IsotropicMaterial::new(1.0, -1.0).is_err());
        assert!(IsotropicMaterial::new(1.0, 0.0).is_ok());
    }

    #[test]
    fn voigt_energy_matches_tensor_energy() {
        let (l, m) = (3.0, 2.0);
        let eps = Matrix3::new(0.1, 0.02, -0.03, 0.02, -0.05, 0.04, -0.03, 0.04, 0.07);
        let v = voigt_strain(&eps);
        let tensor = 2.0 * m * eps.component_mul(&eps).sum() + l * eps.trace().powi(2);
        let voigt = (v.transpose() * isotropic_voigt(l, m) * v)[0];
        assert_relative_eq!(tensor, voigt, max_relative = 1e-13);
        assert_relative_eq!(strain_from_voigt(&v), eps, epsilon = 1e-15);
    }

    #[test]
    fn unit_strains_form_voigt_basis() {
        for i in 0..6 {
            let v = voigt_strain(&unit_strain(i));
            for j in 0..6 {
                assert_eq!(v[j], if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn isotropic_tensor_is_cubic() {
        assert!(cubic_residual(&IsotropicMaterial::PCL.voigt()) < 1e-15);
    }
}
