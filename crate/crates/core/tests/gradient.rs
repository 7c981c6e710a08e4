mod common;

use scaffold_core::coefficients::MixtureLaw;
use scaffold_core::macroscale::{default_decay_rate, Mode, ScaffoldDesign};
use scaffold_core::optimize::{gradient, Objective};

use common::{rel_diff, single_element_model};

fn objective_at(model: &scaffold_core::macroscale::MacroModel, rho: f64, objective: &Objective) -> f64 {
    let design = ScaffoldDesign::uniform(1, rho, default_decay_rate());
    let traj = model.simulate(&design, Mode::N, &MixtureLaw::default()).unwrap();
    objective.evaluate(model, &traj).total
}

#[test]
fn single_element_gradient_matches_central_differences() {
    let model = single_element_model(3.0);
    for objective in [
        Objective { gamma: 1.0, eta: 0.0, p: 8.0 },
        Objective { gamma: 0.0, eta: 1.0, p: 8.0 },
        Objective { gamma: 1.0, eta: 1.0, p: 8.0 },
    ] {
        for rho in [0.55, 0.7, 0.85] {
            let design = ScaffoldDesign::uniform(1, rho, default_decay_rate());
            let sens = gradient(&model, &design, Mode::N, &MixtureLaw::default(), &objective).unwrap();
            let h = 1e-4;
            let fd = (objective_at(&model, rho + h, &objective) - objective_at(&model, rho - h, &objective)) / (2.0 * h);
            let err = rel_diff(sens.gradient[0], fd, 1e-12);
            println!("{objective:?} rho {rho}: adjoint {:.10e} fd {:.10e} rel {err:.2e}", sens.gradient[0], fd);
            assert!(err < 1e-4);
        }
    }
}

#[test]
fn zero_weights_give_zero_gradient() {
    let model = single_element_model(2.0);
    let design = ScaffoldDesign::uniform(1, 0.4, default_decay_rate());
    let obj = Objective { gamma: 0.0, eta: 0.0, p: 8.0 };
    let sens = gradient(&model, &design, Mode::N, &MixtureLaw::default(), &obj).unwrap();
    assert_eq!(sens.gradient, vec![0.0]);
}

mod smooth {
    use std::borrow::Cow;

    use nalgebra::{Matrix3, Matrix6};
    use scaffold_core::coefficients::{CoefficientSource, CorrectorDifference, DensityAxis};
    use scaffold_core::fft_solver::CorrectorField;
    use scaffold_core::table::TableError;
    use scaffold_core::tensor::IsotropicMaterial;

    /// Smooth, density-dependent coefficients with exact derivatives and a
    /// corrector that is affine in both fractions.
    pub struct SmoothSource {
        perturbation: Vec<f32>,
    }

    impl SmoothSource {
        pub fn new() -> Self {
            let identity = CorrectorField::identity(2);
            let perturbation =
                identity.data.iter().enumerate().map(|(k, g)| 0.3 * g + (((k * 37) % 17) as f32 - 8.0) / 64.0).collect();
            Self { perturbation }
        }

        fn field(&self, rho: f64, c_ost: f64) -> CorrectorField {
            let mut g = CorrectorField::identity(2);
            let s = (rho + 0.5 * c_ost) as f32;
            for (x, a) in g.data.iter_mut().zip(&self.perturbation) {
                *x += s * a;
            }
            g
        }
    }

    const STEP: f64 = 1e-3;

    impl CoefficientSource for SmoothSource {
        fn stiffness(&self, rho: f64, c_ost: f64) -> Matrix6<f64> {
            IsotropicMaterial::PCL.voigt() * (0.2 + rho + rho * rho) + IsotropicMaterial::BONE.voigt() * (0.5 * c_ost)
        }
        fn diffusivity(&self, rho: f64, c_ost: f64) -> Matrix3<f64> {
            Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0, 1.2, 0.8)) * (6e-4 * (1.0 - rho).powi(2)) + Matrix3::identity() * (6e-5 * c_ost)
        }
        fn corrector(&self, rho: f64, c_ost: f64) -> Cow<'_, CorrectorField> {
            Cow::Owned(self.field(rho, c_ost))
        }
        fn stiffness_derivative(&self, rho: f64, _c: f64, axis: DensityAxis) -> Result<Matrix6<f64>, TableError> {
            Ok(match axis {
                DensityAxis::Scaffold => IsotropicMaterial::PCL.voigt() * (1.0 + 2.0 * rho),
                DensityAxis::Bone => IsotropicMaterial::BONE.voigt() * 0.5,
            })
        }
        fn diffusivity_derivative(&self, rho: f64, _c: f64, axis: DensityAxis) -> Result<Matrix3<f64>, TableError> {
            Ok(match axis {
                DensityAxis::Scaffold => {
                    Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0, 1.2, 0.8)) * (-2.0 * 6e-4 * (1.0 - rho))
                }
                DensityAxis::Bone => Matrix3::identity() * 6e-5,
            })
        }
        fn corrector_difference(
            &self,
            rho: f64,
            c_ost: f64,
            axis: DensityAxis,
        ) -> Result<Option<CorrectorDifference<'_>>, TableError> {
            let (dr, dc) = match axis {
                DensityAxis::Scaffold => (STEP, 0.0),
                DensityAxis::Bone => (0.0, STEP),
            };
            Ok(Some(CorrectorDifference {
                center: Cow::Owned(self.field(rho, c_ost)),
                lower: Cow::Owned(self.field(rho - dr, c_ost - dc)),
                upper: Cow::Owned(self.field(rho + dr, c_ost + dc)),
                step: 2.0 * STEP,
            }))
        }
    }
}

#[test]
fn tabulated_modes_gradient_matches_differences() {
    // stronger load so the stimulus sits near the bone/cartilage threshold
    let base = single_element_model(3.0);
    let load = base.load.scaled(1.9);
    let model = base.with_load(load);
    let source = smooth::SmoothSource::new();
    let objective = Objective { gamma: 1.0, eta: 1.0, p: 8.0 };
    for mode in [Mode::Ed, Mode::Eds] {
        for rho in [0.4, 0.7] {
            let f = |r: f64| {
                let d = ScaffoldDesign::uniform(1, r, default_decay_rate());
                objective.evaluate(&model, &model.simulate(&d, mode, &source).unwrap()).total
            };
            let h = 1e-4;
            let fd = (f(rho + h) - f(rho - h)) / (2.0 * h);
            let design = ScaffoldDesign::uniform(1, rho, default_decay_rate());
            let g = gradient(&model, &design, mode, &source, &objective).unwrap().gradient[0];
            let err = rel_diff(g, fd, 1e-12);
            println!("{mode:?} rho {rho}: adjoint {g:.10e} fd {fd:.10e} rel {err:.2e}");
            assert!(err < 1e-4);
        }
    }
}
