//! Coupled forward model: elasticity, stimulus, and cell transport over
//! time.

use nalgebra::{Matrix3, Matrix6};
use serde::{Deserialize, Serialize};

use super::cells::{nodal_average, CellState, TransportMatrices, TransportSystem};
use super::domain::{MacroDomain, Region};
use super::elasticity::{ElasticSystem, LoadCase, Materials};
use super::{MacroError, Mode, ScaffoldDesign};
use crate::coefficients::{CoefficientSource, MixtureLaw, DEFAULT_K_MIG};
use crate::fft_solver::CorrectorField;
use crate::geometry::DEFAULT_VOID_CONTRAST;
use crate::par;
use crate::stimulus::{hom_quadrature, RateTable, CHANNELS};

/// Channel values followed by the stimulus itself.
pub(crate) const STIMULUS_OUTPUTS: usize = CHANNELS + 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearSolverOptions {
    /// Relative residual of the elasticity solve.
    pub elastic_tol: f64,
    pub transport_tol: f64,
    pub max_iter: usize,
}

impl Default for LinearSolverOptions {
    fn default() -> Self {
        Self { elastic_tol: 1e-8, transport_tol: 1e-10, max_iter: 50_000 }
    }
}

#[derive(Debug, Clone)]
pub struct ElasticState {
    /// Nodal displacements, three per active node.
    pub displacement: Vec<f64>,
    pub iterations: usize,
}

/// Per-element quantities of one time step on the defect.
#[derive(Debug, Clone)]
pub struct StepFields {
    /// Occupied scaffold fraction `σ(t) ρ`.
    pub occupied: Vec<f64>,
    /// Element mean osteoblast fraction.
    pub bone: Vec<f64>,
    /// Centroid engineering strain.
    pub strain: Vec<[f64; 6]>,
    /// Channels and stimulus, see [`crate::stimulus::RateTable`].
    pub response: Vec<[f64; STIMULUS_OUTPUTS]>,
}

impl StepFields {
    pub fn stimulus(&self) -> Vec<f64> {
        self.response.iter().map(|r| r[CHANNELS]).collect()
    }

    pub fn channels(&self) -> Vec<[f64; CHANNELS]> {
        self.response.iter().map(|r| std::array::from_fn(|k| r[k])).collect()
    }
}

/// Recorded forward run; index `n` is day `n dt`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub mode: Mode,
    pub dt: f64,
    pub states: Vec<CellState>,
    pub displacements: Vec<Vec<f64>>,
    pub compliance: Vec<f64>,
    /// Element stimulus on the defect.
    pub stimulus: Vec<Vec<f64>>,
    pub elastic_iterations: Vec<usize>,
    pub transport_iterations: Vec<usize>,
    /// Largest nodal `Σ c_i` seen.
    pub max_total: f64,
    /// Unclamped transport predictors, one per step.
    pub(crate) predictors: Vec<CellState>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.states.len()).map(|n| n as f64 * self.dt).collect()
    }

    pub fn final_state(&self) -> &CellState {
        self.states.last().expect("trajectory holds the initial state")
    }
}

/// Discretized model with fixed geometry, materials, loads and time grid.
#[derive(Debug, Clone)]
pub struct MacroModel {
    pub domain: MacroDomain,
    pub materials: Materials,
    pub load: LoadCase,
    pub rates: RateTable,
    /// Coefficients of mode N.
    pub law: MixtureLaw,
    pub dt: f64,
    pub days: f64,
    pub solver: LinearSolverOptions,
    pub(crate) elastic: ElasticSystem,
    pub(crate) transport: TransportSystem,
    pub(crate) forces: Vec<f64>,
    identity: CorrectorField,
}

impl MacroModel {
    pub fn new(domain: MacroDomain, materials: Materials, load: LoadCase, dt: f64, days: f64) -> Result<Self, MacroError> {
        materials.validate()?;
        if !(dt > 0.0) || !(days >= 0.0) {
            return Err(MacroError::InvalidSettings(format!("need dt > 0 and days >= 0, got dt = {dt}, days = {days}")));
        }
        let steps = (days / dt).round();
        if (steps * dt - days).abs() > 1e-9 * days.max(1.0) {
            return Err(MacroError::InvalidSettings(format!("days = {days} is not a multiple of dt = {dt}")));
        }
        if domain.defect.elements.is_empty() {
            return Err(MacroError::InvalidDomain("no defect elements".into()));
        }
        let elastic = ElasticSystem::new(&domain);
        let transport = TransportSystem::new(&domain.defect);
        let forces = load.nodal_forces(&domain);
        let law = MixtureLaw {
            scaffold: materials.scaffold,
            bone: materials.bone,
            void_contrast: DEFAULT_VOID_CONTRAST,
            k_mig: DEFAULT_K_MIG,
        };
        Ok(Self {
            domain,
            materials,
            load,
            rates: RateTable::default(),
            law,
            dt,
            days,
            solver: LinearSolverOptions::default(),
            elastic,
            transport,
            forces,
            identity: CorrectorField::identity(1),
        })
    }

    pub fn with_load(mut self, load: LoadCase) -> Self {
        self.forces = load.nodal_forces(&self.domain);
        self.load = load;
        self
    }

    pub fn steps(&self) -> usize {
        (self.days / self.dt).round() as usize
    }

    pub fn defect_elements(&self) -> usize {
        self.domain.defect.elements.len()
    }

    pub fn forces(&self) -> &[f64] {
        &self.forces
    }

    /// Coefficient source of `mode`: the mixture law for N, `source`
    /// otherwise.
    pub fn coefficients<'a>(&'a self, mode: Mode, source: &'a dyn CoefficientSource) -> &'a dyn CoefficientSource {
        match mode {
            Mode::N => &self.law,
            Mode::Ed | Mode::Eds => source,
        }
    }

    pub fn occupied(&self, design: &ScaffoldDesign, t: f64) -> Vec<f64> {
        let s = design.decay(t);
        design.density.iter().map(|r| s * r).collect()
    }

    /// Element means of the nodal osteoblast fraction.
    pub fn bone_fraction(&self, state: &CellState) -> Vec<f64> {
        self.domain.defect.connectivity.iter().map(|conn| conn.iter().map(|&v| state.fields[3][v]).sum::<f64>() / 8.0).collect()
    }

    /// Voigt stiffness of every element.
    pub fn element_stiffness(&self, coeffs: &dyn CoefficientSource, occupied: &[f64], bone: &[f64]) -> Vec<Matrix6<f64>> {
        let m = &self.materials;
        let fixed = [m.bone.voigt(), m.marrow.voigt(), m.fixator.voigt(), m.nail.voigt()];
        let mut out: Vec<Matrix6<f64>> = self
            .domain
            .elements
            .iter()
            .map(|e| match e.region {
                Region::Cortical => fixed[0],
                Region::Marrow => fixed[1],
                Region::Fixator => fixed[2],
                Region::Nail => fixed[3],
                Region::Defect => Matrix6::zeros(),
            })
            .collect();
        let defect = par::map_range(occupied.len(), |i| coeffs.stiffness(occupied[i], bone[i]));
        for (&e, c) in self.domain.defect.elements.iter().zip(defect) {
            out[e] = c;
        }
        out
    }

    /// Solves `K u = f` for the model load (scaled by `load_scale`).
    pub fn solve_elasticity(&self, stiffness: &[Matrix6<f64>], warm: Option<&[f64]>) -> Result<ElasticState, MacroError> {
        let values = self.elastic.matrix(&self.domain, stiffness);
        let mut rhs = self.forces.clone();
        self.solve_stiffness(&values, &mut rhs, warm)
    }

    pub(crate) fn solve_stiffness(
        &self,
        values: &[f64],
        rhs: &mut [f64],
        warm: Option<&[f64]>,
    ) -> Result<ElasticState, MacroError> {
        let mut x = warm.map_or_else(|| vec![0.0; rhs.len()], <[f64]>::to_vec);
        let iterations = self.elastic.solve(values, rhs, &mut x, self.solver.elastic_tol, self.solver.max_iter)?;
        Ok(ElasticState { displacement: x, iterations })
    }

    pub(crate) fn stiffness_matrix(&self, stiffness: &[Matrix6<f64>]) -> Vec<f64> {
        self.elastic.matrix(&self.domain, stiffness)
    }

    /// External work `f · u` of the load.
    pub fn compliance(&self, displacement: &[f64]) -> f64 {
        par::dot(&self.forces, displacement)
    }

    pub fn element_displacement(&self, e: usize, displacement: &[f64]) -> [f64; 24] {
        let nodes = &self.domain.elements[e].nodes;
        std::array::from_fn(|k| displacement[3 * nodes[k / 3] + k % 3])
    }

    /// Centroid strains of the defect elements.
    pub fn defect_strains(&self, displacement: &[f64]) -> Vec<[f64; 6]> {
        par::map_slice(&self.domain.defect.elements, |&e| {
            let basis = &self.domain.bases[self.domain.elements[e].basis];
            basis.centroid_strain(&self.element_displacement(e, displacement))
        })
    }

    /// Channel values and stimulus of one element, with gradients with
    /// respect to the engineering strain when requested.
    pub(crate) fn element_response(
        &self,
        mode: Mode,
        coeffs: &dyn CoefficientSource,
        strain: &[f64; 6],
        occupied: f64,
        bone: f64,
        want_gradient: bool,
    ) -> ([f64; STIMULUS_OUTPUTS], [[f64; 6]; STIMULUS_OUTPUTS]) {
        let comps = [strain[0], strain[1], strain[2], 0.5 * strain[3], 0.5 * strain[4], 0.5 * strain[5]];
        let resp = channel_response(&self.rates);
        match mode {
            Mode::N | Mode::Ed => hom_quadrature(&self.identity, &comps, resp, want_gradient),
            Mode::Eds => hom_quadrature(&coeffs.corrector(occupied, bone), &comps, resp, want_gradient),
        }
    }

    /// Stimulus-derived fields of every defect element.
    pub fn stimulus_fields(
        &self,
        mode: Mode,
        coeffs: &dyn CoefficientSource,
        occupied: &[f64],
        bone: &[f64],
        strain: &[[f64; 6]],
    ) -> Vec<[f64; STIMULUS_OUTPUTS]> {
        let eval = |i: usize| self.element_response(mode, coeffs, &strain[i], occupied[i], bone[i], false).0;
        match mode {
            // each cell quadrature is parallel already
            Mode::Eds => (0..strain.len()).map(eval).collect(),
            Mode::N | Mode::Ed => par::map_range(strain.len(), eval),
        }
    }

    /// Migration tensors of the defect elements.
    pub fn diffusivities(&self, coeffs: &dyn CoefficientSource, occupied: &[f64], bone: &[f64]) -> Vec<Matrix3<f64>> {
        occupied.iter().zip(bone).map(|(&r, &b)| coeffs.diffusivity(r, b)).collect()
    }

    pub(crate) fn transport_matrices(&self, diffusivity: &[Matrix3<f64>]) -> TransportMatrices {
        self.transport.matrices(&self.domain, diffusivity, self.dt)
    }

    /// One transport step from `state` with element fields `fields`.
    /// Returns the unclamped predictor and the admissible next state.
    pub fn step_cells(
        &self,
        state: &CellState,
        fields: &StepFields,
        diffusivity: &[Matrix3<f64>],
    ) -> Result<(CellState, CellState, usize), MacroError> {
        let defect = &self.domain.defect;
        let matrices = self.transport_matrices(diffusivity);
        let channels = nodal_average(defect, &fields.channels());
        let occupied: Vec<f64> =
            nodal_average(defect, &fields.occupied.iter().map(|&r| [r]).collect::<Vec<_>>()).into_iter().map(|[r]| r).collect();
        let (predictor, iterations) = self.transport.predict(
            defect,
            &matrices,
            &self.rates,
            state,
            &channels,
            &occupied,
            self.dt,
            self.solver.transport_tol,
            self.solver.max_iter,
        )?;
        let mut next = predictor.clone();
        next.clamp_unit();
        next.impose_sources(defect);
        Ok((predictor, next, iterations))
    }

    /// Elasticity and stimulus at one time for the given state.
    pub fn step_fields(
        &self,
        design: &ScaffoldDesign,
        mode: Mode,
        coeffs: &dyn CoefficientSource,
        t: f64,
        state: &CellState,
        warm: Option<&[f64]>,
    ) -> Result<(ElasticState, StepFields), MacroError> {
        let occupied = self.occupied(design, t);
        let bone = self.bone_fraction(state);
        let stiffness = self.element_stiffness(coeffs, &occupied, &bone);
        let elastic = self.solve_elasticity(&stiffness, warm)?;
        let strain = self.defect_strains(&elastic.displacement);
        let response = self.stimulus_fields(mode, coeffs, &occupied, &bone, &strain);
        Ok((elastic, StepFields { occupied, bone, strain, response }))
    }

    /// Forward run over `[0, days]`. `source` supplies the tabulated
    /// coefficients of modes ED and EDS and is ignored in mode N.
    pub fn simulate(
        &self,
        design: &ScaffoldDesign,
        mode: Mode,
        source: &dyn CoefficientSource,
    ) -> Result<Trajectory, MacroError> {
        design.validate(self.defect_elements(), (0.0, 1.0))?;
        let coeffs = self.coefficients(mode, source);
        let steps = self.steps();
        let defect = &self.domain.defect;
        let mut state = CellState::initial(defect);
        let mut traj = Trajectory {
            mode,
            dt: self.dt,
            states: Vec::with_capacity(steps + 1),
            displacements: Vec::with_capacity(steps + 1),
            compliance: Vec::with_capacity(steps + 1),
            stimulus: Vec::with_capacity(steps + 1),
            elastic_iterations: Vec::with_capacity(steps + 1),
            transport_iterations: Vec::with_capacity(steps),
            max_total: state.max_total(),
            predictors: Vec::with_capacity(steps),
        };
        for n in 0..=steps {
            let t = n as f64 * self.dt;
            let warm = traj.displacements.last().map(Vec::as_slice);
            let (elastic, fields) = self.step_fields(design, mode, coeffs, t, &state, warm)?;
            traj.compliance.push(self.compliance(&elastic.displacement));
            traj.elastic_iterations.push(elastic.iterations);
            traj.displacements.push(elastic.displacement);
            traj.stimulus.push(fields.stimulus());
            if n == steps {
                traj.states.push(state);
                break;
            }
            let diffusivity = self.diffusivities(coeffs, &fields.occupied, &fields.bone);
            let (predictor, next, iterations) = self.step_cells(&state, &fields, &diffusivity)?;
            traj.transport_iterations.push(iterations);
            traj.predictors.push(predictor);
            traj.states.push(std::mem::replace(&mut state, next));
            let total = state.max_total();
            if total > 1.0 + 1e-6 {
                if traj.max_total <= 1.0 + 1e-6 {
                    log::warn!("day {}: nodal cell total {total:.6} exceeds one", t + self.dt);
                } else {
                    log::debug!("day {}: nodal cell total {total:.6}", t + self.dt);
                }
            }
            traj.max_total = traj.max_total.max(total);
            log::debug!("day {}: compliance {:.6e}", t, traj.compliance[n]);
        }
        Ok(traj)
    }
}

/// Channel values and slopes followed by the identity response.
pub(crate) fn channel_response(
    rates: &RateTable,
) -> impl Fn(f64) -> ([f64; STIMULUS_OUTPUTS], [f64; STIMULUS_OUTPUTS]) + Sync + '_ {
    move |s| {
        let (v, d) = rates.channels_with_slopes(s);
        let mut val = [0.0; STIMULUS_OUTPUTS];
        let mut slope = [0.0; STIMULUS_OUTPUTS];
        val[..CHANNELS].copy_from_slice(&v);
        slope[..CHANNELS].copy_from_slice(&d);
        val[CHANNELS] = s;
        slope[CHANNELS] = 1.0;
        (val, slope)
    }
}
