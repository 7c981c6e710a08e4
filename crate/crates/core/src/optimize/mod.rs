//! Scaffold density optimization: objective, adjoint gradient and projected
//! gradient descent under box constraints.

mod adjoint;

use serde::{Deserialize, Serialize};

pub use adjoint::{gradient, Sensitivity};

use crate::coefficients::CoefficientSource;
use crate::macroscale::{MacroError, MacroModel, Mode, ScaffoldDesign, Trajectory, DENSITY_BOUNDS};

/// `J = γ ‖compliance‖_p − η ∫ c_ost(T)`, where the compliance norm is the
/// `L^p` mean over the initial and final time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Objective {
    pub gamma: f64,
    pub eta: f64,
    pub p: f64,
}

impl Default for Objective {
    fn default() -> Self {
        Self { gamma: 0.0, eta: 1.0, p: 8.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveValue {
    pub total: f64,
    /// `γ`-weighted compliance part.
    pub compliance: f64,
    /// `η`-weighted bone part (already negated).
    pub bone: f64,
}

impl Objective {
    pub fn validate(&self) -> Result<(), MacroError> {
        if !(self.gamma >= 0.0 && self.eta >= 0.0 && self.p >= 2.0 && self.p.is_finite()) {
            return Err(MacroError::InvalidSettings(format!(
                "objective requires gamma >= 0, eta >= 0, p >= 2; got {self:?}"
            )));
        }
        Ok(())
    }

    /// Time indices entering the compliance norm.
    pub fn selected_times(steps: usize) -> Vec<usize> {
        if steps == 0 {
            vec![0]
        } else {
            vec![0, steps]
        }
    }

    /// `(mean_sel C^p)^(1/p)`.
    pub fn compliance_norm(&self, compliance: &[f64]) -> f64 {
        let sel = Self::selected_times(compliance.len() - 1);
        let mean = sel.iter().map(|&n| compliance[n].abs().powf(self.p)).sum::<f64>() / sel.len() as f64;
        mean.powf(1.0 / self.p)
    }

    /// `dJ / dC_n` for every recorded time.
    pub fn compliance_weights(&self, compliance: &[f64]) -> Vec<f64> {
        let mut w = vec![0.0; compliance.len()];
        if self.gamma == 0.0 {
            return w;
        }
        let sel = Self::selected_times(compliance.len() - 1);
        let m = sel.len() as f64;
        let mean = sel.iter().map(|&n| compliance[n].abs().powf(self.p)).sum::<f64>() / m;
        if mean == 0.0 {
            return w;
        }
        let outer = mean.powf(1.0 / self.p - 1.0);
        for &n in &sel {
            let c = compliance[n];
            w[n] += self.gamma * outer * c.abs().powf(self.p - 1.0) * c.signum() / m;
        }
        w
    }

    pub fn evaluate(&self, model: &MacroModel, trajectory: &Trajectory) -> ObjectiveValue {
        let compliance = if self.gamma == 0.0 { 0.0 } else { self.gamma * self.compliance_norm(&trajectory.compliance) };
        let bone = -self.eta * trajectory.final_state().integral(&model.domain.defect, 3);
        ObjectiveValue { total: compliance + bone, compliance, bone }
    }
}

/// Projected gradient descent settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeOptions {
    pub max_iters: usize,
    pub lower: f64,
    pub upper: f64,
    /// Initial step, scaled by `1 / ‖g‖_∞`.
    pub initial_step: f64,
    pub max_halvings: usize,
    pub relative_tolerance: f64,
    pub gradient_tolerance: f64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            max_iters: 4,
            lower: DENSITY_BOUNDS.0,
            upper: DENSITY_BOUNDS.1,
            initial_step: 1.0,
            max_halvings: 10,
            relative_tolerance: 1e-4,
            gradient_tolerance: 1e-6,
        }
    }
}

impl OptimizeOptions {
    pub fn validate(&self) -> Result<(), MacroError> {
        if !(0.0 <= self.lower && self.lower < self.upper && self.upper <= 1.0) {
            return Err(MacroError::InvalidSettings(format!("bounds [{}, {}]", self.lower, self.upper)));
        }
        if !(self.initial_step > 0.0) {
            return Err(MacroError::InvalidSettings("initial step must be positive".into()));
        }
        Ok(())
    }
}

/// Componentwise clamp onto `[lower, upper]`.
pub fn project(x: &[f64], lower: f64, upper: f64) -> Vec<f64> {
    x.iter().map(|v| v.clamp(lower, upper)).collect()
}

/// `‖P(x - g) - x‖_∞`.
pub fn projected_gradient_norm(x: &[f64], g: &[f64], lower: f64, upper: f64) -> f64 {
    x.iter().zip(g).map(|(x, g)| ((x - g).clamp(lower, upper) - x).abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIterations,
    RelativeDecrease,
    ProjectedGradient,
    LineSearchExhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: ObjectiveValue,
    pub gradient_norm: f64,
    /// Accepted step length (0 for the initial design).
    pub step: f64,
    pub halvings: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationHistory {
    pub records: Vec<IterationRecord>,
    /// Design of each record.
    pub designs: Vec<Vec<f64>>,
    pub stop: StopReason,
}

impl OptimizationHistory {
    pub fn accepted(&self) -> usize {
        self.records.len() - 1
    }

    pub fn line_search_exhausted(&self) -> bool {
        self.stop == StopReason::LineSearchExhausted
    }
}

/// Projected gradient descent with backtracking from `initial`.
pub fn optimize(
    model: &MacroModel,
    initial: &ScaffoldDesign,
    mode: Mode,
    source: &dyn CoefficientSource,
    objective: &Objective,
    options: &OptimizeOptions,
) -> Result<(ScaffoldDesign, OptimizationHistory), MacroError> {
    options.validate()?;
    objective.validate()?;
    initial.validate(model.defect_elements(), (options.lower, options.upper))?;
    let (lo, hi) = (options.lower, options.upper);
    let mut design = initial.clone();
    let mut sens = gradient(model, &design, mode, source, objective)?;
    let mut records = vec![IterationRecord {
        iteration: 0,
        objective: sens.value,
        gradient_norm: projected_gradient_norm(&design.density, &sens.gradient, lo, hi),
        step: 0.0,
        halvings: 0,
    }];
    let mut designs = vec![design.density.clone()];
    let mut stop = StopReason::MaxIterations;
    for iteration in 1..=options.max_iters {
        let current = records.last().expect("initial record").clone();
        if current.gradient_norm < options.gradient_tolerance {
            stop = StopReason::ProjectedGradient;
            break;
        }
        let g_max = sens.gradient.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        let mut step = options.initial_step / g_max;
        let mut accepted = None;
        for halvings in 0..=options.max_halvings {
            let trial: Vec<f64> = design.density.iter().zip(&sens.gradient).map(|(x, g)| (x - step * g).clamp(lo, hi)).collect();
            let candidate = ScaffoldDesign { density: trial, decay_rate: design.decay_rate };
            let traj = model.simulate(&candidate, mode, source)?;
            let value = objective.evaluate(model, &traj);
            log::info!("iteration {iteration}: step {step:.3e} gives objective {:.6e}", value.total);
            if value.total < current.objective.total {
                accepted = Some((candidate, value, halvings));
                break;
            }
            step *= 0.5;
        }
        let Some((candidate, value, halvings)) = accepted else {
            stop = StopReason::LineSearchExhausted;
            break;
        };
        design = candidate;
        sens = gradient(model, &design, mode, source, objective)?;
        records.push(IterationRecord {
            iteration,
            objective: value,
            gradient_norm: projected_gradient_norm(&design.density, &sens.gradient, lo, hi),
            step,
            halvings,
        });
        designs.push(design.density.clone());
        let decrease = (current.objective.total - value.total) / current.objective.total.abs().max(f64::MIN_POSITIVE);
        if decrease < options.relative_tolerance {
            stop = StopReason::RelativeDecrease;
            break;
        }
    }
    Ok((design, OptimizationHistory { records, designs, stop }))
}
