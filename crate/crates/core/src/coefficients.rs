//! Effective coefficients as functions of scaffold and bone volume
//! fractions, either tabulated from cell solves or from a closed-form
//! mixture law.

use std::borrow::Cow;

use nalgebra::{Matrix3, Matrix6};

use crate::fft_solver::CorrectorField;
use crate::geometry::DEFAULT_VOID_CONTRAST;
use crate::table::TableError;
use crate::tensor::IsotropicMaterial;

/// Default migration coefficient, mm²/day.
pub const DEFAULT_K_MIG: f64 = 6e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DensityAxis {
    Scaffold,
    Bone,
}

/// Corrector fields around a sample, for difference quotients.
#[derive(Debug, Clone)]
pub struct CorrectorDifference<'a> {
    pub center: Cow<'a, CorrectorField>,
    pub lower: Cow<'a, CorrectorField>,
    pub upper: Cow<'a, CorrectorField>,
    pub step: f64,
}

/// Source of effective stiffness, diffusivity and strain concentration at
/// `(rho, c_ost)`.
pub trait CoefficientSource: Sync {
    fn stiffness(&self, rho: f64, c_ost: f64) -> Matrix6<f64>;
    fn diffusivity(&self, rho: f64, c_ost: f64) -> Matrix3<f64>;
    fn corrector(&self, rho: f64, c_ost: f64) -> Cow<'_, CorrectorField>;
    fn stiffness_derivative(&self, rho: f64, c_ost: f64, axis: DensityAxis) -> Result<Matrix6<f64>, TableError>;
    fn diffusivity_derivative(&self, rho: f64, c_ost: f64, axis: DensityAxis) -> Result<Matrix3<f64>, TableError>;
    /// `None` when the corrector does not depend on the density.
    fn corrector_difference(
        &self,
        rho: f64,
        c_ost: f64,
        axis: DensityAxis,
    ) -> Result<Option<CorrectorDifference<'_>>, TableError>;
}

/// Voigt mixture `ρ C_s + c C_b + κ C_s (1 - ρ - c)⁺` with migration
/// `k_mig (1 - ρ) I` and a homogeneous corrector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureLaw {
    pub scaffold: IsotropicMaterial,
    pub bone: IsotropicMaterial,
    pub void_contrast: f64,
    pub k_mig: f64,
}

impl Default for MixtureLaw {
    fn default() -> Self {
        Self {
            scaffold: IsotropicMaterial::PCL,
            bone: IsotropicMaterial::BONE,
            void_contrast: DEFAULT_VOID_CONTRAST,
            k_mig: DEFAULT_K_MIG,
        }
    }
}

impl CoefficientSource for MixtureLaw {
    fn stiffness(&self, rho: f64, c_ost: f64) -> Matrix6<f64> {
        let cs = self.scaffold.voigt();
        cs * rho + self.bone.voigt() * c_ost + cs * (self.void_contrast * (1.0 - rho - c_ost).max(0.0))
    }

    fn diffusivity(&self, rho: f64, _c_ost: f64) -> Matrix3<f64> {
        Matrix3::identity() * (self.k_mig * (1.0 - rho))
    }

    fn corrector(&self, _rho: f64, _c_ost: f64) -> Cow<'_, CorrectorField> {
        Cow::Owned(CorrectorField::identity(1))
    }

    fn stiffness_derivative(&self, rho: f64, c_ost: f64, axis: DensityAxis) -> Result<Matrix6<f64>, TableError> {
        let void = if rho + c_ost < 1.0 { self.void_contrast } else { 0.0 };
        let cs = self.scaffold.voigt();
        Ok(match axis {
            DensityAxis::Scaffold => cs * (1.0 - void),
            DensityAxis::Bone => self.bone.voigt() - cs * void,
        })
    }

    fn diffusivity_derivative(&self, _rho: f64, _c_ost: f64, axis: DensityAxis) -> Result<Matrix3<f64>, TableError> {
        Ok(match axis {
            DensityAxis::Scaffold => Matrix3::identity() * -self.k_mig,
            DensityAxis::Bone => Matrix3::zeros(),
        })
    }

    fn corrector_difference(
        &self,
        _rho: f64,
        _c_ost: f64,
        _axis: DensityAxis,
    ) -> Result<Option<CorrectorDifference<'_>>, TableError> {
        Ok(None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn mixture_limits() {
        let law = MixtureLaw::default();
        assert_relative_eq!(law.stiffness(1.0, 0.0), IsotropicMaterial::PCL.voigt(), max_relative = 1e-14);
        assert_relative_eq!(law.stiffness(0.0, 1.0), IsotropicMaterial::BONE.voigt(), max_relative = 1e-14);
        assert_relative_eq!(law.stiffness(0.0, 0.0), IsotropicMaterial::PCL.voigt() * 1e-3, max_relative = 1e-14);
        assert_relative_eq!(law.diffusivity(0.21, 0.3)[(0, 0)], 6e-4 * 0.79, max_relative = 1e-14);
    }

    #[test]
    fn mixture_derivatives_match_differences() {
        let law = MixtureLaw::default();
        let h = 1e-6;
        for axis in [DensityAxis::Scaffold, DensityAxis::Bone] {
            let (dr, dc) = if axis == DensityAxis::Scaffold { (h, 0.0) } else { (0.0, h) };
            let fd = (law.stiffness(0.3 + dr, 0.2 + dc) - law.stiffness(0.3 - dr, 0.2 - dc)) / (2.0 * h);
            assert_relative_eq!(fd, law.stiffness_derivative(0.3, 0.2, axis).unwrap(), max_relative = 1e-6);
            let fd = (law.diffusivity(0.3 + dr, 0.2 + dc) - law.diffusivity(0.3 - dr, 0.2 - dc)) / (2.0 * h);
            assert_relative_eq!(fd, law.diffusivity_derivative(0.3, 0.2, axis).unwrap(), epsilon = 1e-12);
        }
    }
}
