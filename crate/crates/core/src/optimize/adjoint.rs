//! Discrete adjoint of the forward time stepper.
//!
//! The reverse sweep walks the stored trajectory backwards. Per step it
//! transposes the transport solves, the reaction terms, the stimulus
//! evaluation and the elasticity solve, accumulating the sensitivity of the
//! objective to the occupied scaffold fraction `σ(t) ρ` of every element.
//! Nodes clamped to `[0, 1]` or held by a source carry no sensitivity.

use nalgebra::{Matrix3, Matrix6};

use super::{Objective, ObjectiveValue};
use crate::coefficients::{CoefficientSource, DensityAxis};
use crate::macroscale::cells::{nodal_average, nodal_average_adjoint, reaction_adjoint, CellState};
use crate::macroscale::model::{channel_response, STIMULUS_OUTPUTS};
use crate::macroscale::{MacroError, MacroModel, Mode, ScaffoldDesign, Trajectory};
use crate::par;
use crate::stimulus::{hom_density_quadrature, CHANNELS};

/// Objective value and its gradient with respect to the design densities.
#[derive(Debug, Clone)]
pub struct Sensitivity {
    pub value: ObjectiveValue,
    pub gradient: Vec<f64>,
    pub trajectory: Trajectory,
}

struct ElementCotangents {
    occupied: Vec<f64>,
    bone: Vec<f64>,
}

impl ElementCotangents {
    fn zeros(n: usize) -> Self {
        Self { occupied: vec![0.0; n], bone: vec![0.0; n] }
    }
}

fn contract6(a: &Matrix6<f64>, b: &Matrix6<f64>) -> f64 {
    a.component_mul(b).sum()
}

fn contract3(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    a.component_mul(b).sum()
}

/// Runs the forward model and returns the objective gradient.
pub fn gradient(
    model: &MacroModel,
    design: &ScaffoldDesign,
    mode: Mode,
    source: &dyn CoefficientSource,
    objective: &Objective,
) -> Result<Sensitivity, MacroError> {
    let trajectory = model.simulate(design, mode, source)?;
    let value = objective.evaluate(model, &trajectory);
    let elements = model.defect_elements();
    if objective.gamma == 0.0 && objective.eta == 0.0 {
        return Ok(Sensitivity { value, gradient: vec![0.0; elements], trajectory });
    }
    let coeffs = model.coefficients(mode, source);
    let defect = &model.domain.defect;
    let steps = trajectory.steps();
    let weights = objective.compliance_weights(&trajectory.compliance);
    let mut grad = vec![0.0; elements];

    let mut lambda = CellState::zeros(defect.nodes.len());
    for (l, m) in lambda.fields[3].iter_mut().zip(&defect.mass) {
        *l = -objective.eta * m;
    }

    for n in (0..=steps).rev() {
        let t = n as f64 * model.dt;
        let state = &trajectory.states[n];
        let occupied = model.occupied(design, t);
        let bone = model.bone_fraction(state);
        let displacement = &trajectory.displacements[n];
        let mut bar = ElementCotangents::zeros(elements);
        let mut strain_bar = vec![[0.0; 6]; elements];
        let mut next_lambda = CellState::zeros(defect.nodes.len());

        if n < steps {
            let predictor = &trajectory.predictors[n];
            let strain = model.defect_strains(displacement);
            let responses: Vec<_> = match mode {
                Mode::Eds => (0..elements)
                    .map(|i| model.element_response(mode, coeffs, &strain[i], occupied[i], bone[i], true))
                    .collect(),
                _ => par::map_range(elements, |i| {
                    model.element_response(mode, coeffs, &strain[i], occupied[i], bone[i], true)
                }),
            };
            let channels: Vec<[f64; CHANNELS]> =
                responses.iter().map(|(v, _)| std::array::from_fn(|k| v[k])).collect();
            let diffusivity = model.diffusivities(coeffs, &occupied, &bone);
            let matrices = model.transport_matrices(&diffusivity);

            // active set of the clamp and the sources
            let mut masked = lambda.clone();
            for i in 0..4 {
                for v in 0..masked.node_count() {
                    let p = predictor.fields[i][v];
                    let held = (i == 0 && defect.progenitor_source[v]) || defect.osteoblast_source[v];
                    if held || !(0.0..=1.0).contains(&p) {
                        masked.fields[i][v] = 0.0;
                    }
                }
            }

            // transport solves
            let mut ybar: [Vec<f64>; 4] = std::array::from_fn(|i| masked.fields[i].clone());
            let mut diff_bar = vec![Matrix3::<f64>::zeros(); elements];
            for (i, values) in [(0, &matrices.progenitor), (1, &matrices.free)] {
                let mut z = vec![0.0; defect.nodes.len()];
                model.transport.solve(values, &masked.fields[i], &mut z, model.solver.transport_tol, model.solver.max_iter)?;
                for (e, conn) in defect.connectivity.iter().enumerate() {
                    let basis = &model.domain.bases[model.domain.elements[defect.elements[e]].basis];
                    let ze = conn.map(|v| z[v]);
                    let ce = conn.map(|v| predictor.fields[i][v]);
                    let b = basis.diffusion_bilinear(&ze, &ce);
                    diff_bar[e] -= Matrix3::from_fn(|r, c| model.dt * b[r][c]);
                }
                ybar[i] = z.iter().zip(&defect.mass).map(|(z, m)| z * m).collect();
            }

            // reactions
            let nodal_channels = nodal_average(defect, &channels);
            let nodal_occupied = nodal_average(defect, &occupied.iter().map(|&r| [r]).collect::<Vec<_>>());
            let mut channel_bar_nodal = vec![[0.0; CHANNELS]; defect.nodes.len()];
            let mut occupied_bar_nodal = vec![[0.0; 1]; defect.nodes.len()];
            for v in 0..defect.nodes.len() {
                let c = state.at(v);
                let w = [ybar[0][v], ybar[1][v], ybar[2][v], ybar[3][v]];
                let (cb, chb, rb) = reaction_adjoint(&model.rates, &c, &nodal_channels[v], nodal_occupied[v][0], &w);
                for i in 0..4 {
                    next_lambda.fields[i][v] = w[i] + model.dt * cb[i];
                }
                channel_bar_nodal[v] = chb.map(|x| model.dt * x);
                occupied_bar_nodal[v] = [model.dt * rb];
            }
            let channel_bar = nodal_average_adjoint(defect, &channel_bar_nodal);
            for (b, [r]) in bar.occupied.iter_mut().zip(nodal_average_adjoint(defect, &occupied_bar_nodal)) {
                *b += r;
            }

            // stimulus
            for e in 0..elements {
                let (_, g) = &responses[e];
                for k in 0..CHANNELS {
                    for j in 0..6 {
                        strain_bar[e][j] += channel_bar[e][k] * g[k][j];
                    }
                }
            }
            if mode == Mode::Eds {
                let resp = channel_response(&model.rates);
                for e in 0..elements {
                    let comps = [
                        strain[e][0],
                        strain[e][1],
                        strain[e][2],
                        0.5 * strain[e][3],
                        0.5 * strain[e][4],
                        0.5 * strain[e][5],
                    ];
                    for axis in [DensityAxis::Scaffold, DensityAxis::Bone] {
                        let Some(diff) = coeffs.corrector_difference(occupied[e], bone[e], axis)? else { continue };
                        let d: [f64; STIMULUS_OUTPUTS] =
                            hom_density_quadrature(&diff.center, &diff.lower, &diff.upper, diff.step, &comps, &resp);
                        let s: f64 = (0..CHANNELS).map(|k| channel_bar[e][k] * d[k]).sum();
                        match axis {
                            DensityAxis::Scaffold => bar.occupied[e] += s,
                            DensityAxis::Bone => bar.bone[e] += s,
                        }
                    }
                }
            }

            // migration tensors
            for e in 0..elements {
                bar.occupied[e] +=
                    contract3(&diff_bar[e], &coeffs.diffusivity_derivative(occupied[e], bone[e], DensityAxis::Scaffold)?);
                bar.bone[e] += contract3(&diff_bar[e], &coeffs.diffusivity_derivative(occupied[e], bone[e], DensityAxis::Bone)?);
            }
        }

        // elasticity
        let mut ubar = vec![0.0; displacement.len()];
        if weights[n] != 0.0 {
            for (u, f) in ubar.iter_mut().zip(model.forces()) {
                *u += weights[n] * f;
            }
        }
        for (e, sb) in strain_bar.iter().enumerate() {
            if sb.iter().all(|&x| x == 0.0) {
                continue;
            }
            let el = &model.domain.elements[defect.elements[e]];
            let b0 = &model.domain.bases[el.basis].centroid_b;
            for k in 0..24 {
                let s: f64 = (0..6).map(|i| b0[i * 24 + k] * sb[i]).sum();
                ubar[3 * el.nodes[k / 3] + k % 3] += s;
            }
        }
        if ubar.iter().any(|&x| x != 0.0) {
            let stiffness = model.element_stiffness(coeffs, &occupied, &bone);
            let values = model.stiffness_matrix(&stiffness);
            let mu = model.solve_stiffness(&values, &mut ubar, None)?.displacement;
            let contributions = par::map_range(elements, |e| -> Result<(f64, f64), MacroError> {
                let ge = defect.elements[e];
                let basis = &model.domain.bases[model.domain.elements[ge].basis];
                let b = basis.elastic_bilinear(&model.element_displacement(ge, &mu), &model.element_displacement(ge, displacement));
                let cbar = -Matrix6::from_fn(|i, j| b[i][j]);
                Ok((
                    contract6(&cbar, &coeffs.stiffness_derivative(occupied[e], bone[e], DensityAxis::Scaffold)?),
                    contract6(&cbar, &coeffs.stiffness_derivative(occupied[e], bone[e], DensityAxis::Bone)?),
                ))
            });
            for (e, c) in contributions.into_iter().enumerate() {
                let (r, b) = c?;
                bar.occupied[e] += r;
                bar.bone[e] += b;
            }
        }

        let decay = design.decay(t);
        for (g, r) in grad.iter_mut().zip(&bar.occupied) {
            *g += decay * r;
        }
        if n == steps {
            next_lambda = lambda.clone();
        }
        for (conn, b) in defect.connectivity.iter().zip(&bar.bone) {
            for &v in conn {
                next_lambda.fields[3][v] += b / 8.0;
            }
        }
        lambda = next_lambda;
    }
    Ok(Sensitivity { value, gradient: grad, trajectory })
}
