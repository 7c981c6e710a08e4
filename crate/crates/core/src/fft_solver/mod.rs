//! Periodic cell problems on the voxel grid.
//!
//! Both problems are discretized on a staggered grid: displacement
//! component `u_a` (or the flux `q_a`) lives on the `+a` face of each voxel,
//! normal strains at voxel centers and shear strains on voxel edges. The
//! resulting symmetric system is solved with the Green operator of a
//! homogeneous reference medium applied in Fourier space, either as a
//! fixed-point iteration (`Scheme::Basic`) or as its conjugate-gradient
//! acceleration.

mod diffusion;
mod elastic;
mod krylov;

use nalgebra::{Matrix3, Matrix6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{ConductivityField, StiffnessField};
use crate::par;
use crate::tensor::{self, SymComponents};

pub use elastic::voxel_shear_from_edges;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("cell solve did not reach tolerance in {max_iter} iterations (last residual {:e})", history.last().copied().unwrap_or(f64::NAN))]
    NotConverged { max_iter: usize, history: Vec<f64> },
    #[error("conjugate gradient breakdown at iteration {iteration}")]
    Breakdown { iteration: usize, history: Vec<f64> },
    #[error("coefficient field is not positive definite at voxel {voxel}")]
    NotPositive { voxel: usize },
    #[error("solver options invalid: {0}")]
    InvalidOptions(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Fixed-point Lippmann–Schwinger iteration.
    Basic,
    #[serde(rename = "cg")]
    ConjugateGradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    pub scheme: Scheme,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { scheme: Scheme::ConjugateGradient, tol: 1e-6, max_iter: 2000 }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<(), SolveError> {
        if !(self.tol > 0.0) {
            return Err(SolveError::InvalidOptions("tol must be positive"));
        }
        if self.max_iter == 0 {
            return Err(SolveError::InvalidOptions("max_iter must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveDiagnostics {
    pub iterations: usize,
    pub relative_residual: f64,
    pub history: Vec<f64>,
}

/// Strain field for one prescribed mean strain.
#[derive(Debug, Clone)]
pub struct ElasticLoadSolution {
    /// Prescribed mean strain, tensor components.
    pub mean_strain: SymComponents,
    /// `e11, e22, e33` at voxel centers.
    pub normal: [Vec<f64>; 3],
    /// `e23, e13, e12` on the edges `p + e_a/2 + e_b/2` of each voxel.
    pub shear_edges: [Vec<f64>; 3],
    pub diagnostics: SolveDiagnostics,
}

impl ElasticLoadSolution {
    /// Strain at voxel `p`, shear averaged from the four surrounding edges.
    pub fn voxel_strain(&self, n: usize, p: usize) -> SymComponents {
        let mut out = [0.0; 6];
        for a in 0..3 {
            out[a] = self.normal[a][p];
        }
        for s in 0..3 {
            out[3 + s] = voxel_shear_from_edges(&self.shear_edges[s], n, s, p);
        }
        out
    }
}

/// The six unit-strain solutions of one cell.
#[derive(Debug, Clone)]
pub struct ElasticCellSolution {
    pub n: usize,
    pub loads: Vec<ElasticLoadSolution>,
}

impl ElasticCellSolution {
    pub fn max_iterations(&self) -> usize {
        self.loads.iter().map(|l| l.diagnostics.iterations).max().unwrap_or(0)
    }

    pub fn max_residual(&self) -> f64 {
        self.loads.iter().map(|l| l.diagnostics.relative_residual).fold(0.0, f64::max)
    }
}

/// Solves the elastic cell problem for an arbitrary mean strain given in
/// tensor components.
pub fn solve_mean_strain(
    field: &StiffnessField,
    mean_strain: SymComponents,
    options: &SolverOptions,
) -> Result<ElasticLoadSolution, SolveError> {
    options.validate()?;
    let medium = elastic::ElasticMedium::new(field)?;
    medium.solve(mean_strain, options)
}

/// Solves the cell problem for unit strain `load` (Voigt index).
pub fn solve_elastic_cell(
    field: &StiffnessField,
    load: usize,
    options: &SolverOptions,
) -> Result<ElasticLoadSolution, SolveError> {
    assert!(load < 6, "Voigt index out of range");
    solve_mean_strain(field, tensor::components(&tensor::unit_strain(load)), options)
}

/// All six unit-strain problems, solved concurrently.
pub fn solve_elastic_cells(field: &StiffnessField, options: &SolverOptions) -> Result<ElasticCellSolution, SolveError> {
    options.validate()?;
    let medium = elastic::ElasticMedium::new(field)?;
    let loads = par::map_range(6, |i| medium.solve(tensor::components(&tensor::unit_strain(i)), options));
    Ok(ElasticCellSolution { n: field.n, loads: loads.into_iter().collect::<Result<_, _>>()? })
}

/// Energy quadrature `mean_Y C(e_I + ∇w_I) : (e_J + ∇w_J)` in Voigt form.
pub fn homogenized_stiffness(field: &StiffnessField, solution: &ElasticCellSolution) -> Matrix6<f64> {
    elastic::energy_matrix(field, &solution.loads)
}

/// Convenience: solve all load cases and integrate.
pub fn homogenize_elastic(
    field: &StiffnessField,
    options: &SolverOptions,
) -> Result<(Matrix6<f64>, ElasticCellSolution), SolveError> {
    let solution = solve_elastic_cells(field, options)?;
    Ok((homogenized_stiffness(field, &solution), solution))
}

/// Local strain concentration tensor `G(y)` sampled at voxels.
///
/// `data[(p * 6 + i) * 6 + j]` is tensor component `j` of the strain at
/// voxel `p` produced by unit Voigt strain `i`, so that the local strain
/// for a macroscopic engineering strain vector `ε` is `Σ_i ε_i G[p][i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectorField {
    pub n: usize,
    pub data: Vec<f32>,
}

impl CorrectorField {
    /// `G = Id` at every voxel (homogeneous cell).
    pub fn identity(n: usize) -> Self {
        let mut block = [0.0f32; 36];
        for i in 0..6 {
            block[i * 6 + i] = if i < 3 { 1.0 } else { 0.5 };
        }
        let data = (0..n * n * n).flat_map(|_| block).collect();
        Self { n, data }
    }

    pub fn voxel_count(&self) -> usize {
        self.data.len() / 36
    }

    #[inline]
    pub fn block(&self, p: usize) -> &[f32] {
        &self.data[p * 36..(p + 1) * 36]
    }

    /// Local strain components at voxel `p` for engineering strain `voigt`.
    #[inline]
    pub fn local_strain(&self, p: usize, voigt: &[f64; 6]) -> SymComponents {
        let g = self.block(p);
        let mut out = [0.0; 6];
        for (i, &e) in voigt.iter().enumerate() {
            if e != 0.0 {
                for j in 0..6 {
                    out[j] += e * g[i * 6 + j] as f64;
                }
            }
        }
        out
    }

    /// Cell average of `G[i][j]`.
    pub fn mean(&self) -> [[f64; 6]; 6] {
        let count = self.voxel_count();
        let mut m = [[0.0; 6]; 6];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, slot) in row.iter_mut().enumerate() {
                *slot = par::sum_range(count, |p| self.data[p * 36 + i * 6 + j] as f64) / count as f64;
            }
        }
        m
    }
}

pub fn assemble_corrector(solution: &ElasticCellSolution) -> CorrectorField {
    let n = solution.n;
    let voxels = n * n * n;
    let blocks = par::map_range(voxels, |p| {
        let mut block = [0.0f32; 36];
        for (i, load) in solution.loads.iter().enumerate() {
            let local = load.voxel_strain(n, p);
            for j in 0..6 {
                block[i * 6 + j] = local[j] as f32;
            }
        }
        block
    });
    CorrectorField { n, data: blocks.into_iter().flatten().collect() }
}

/// Gradient field for one prescribed mean gradient.
#[derive(Debug, Clone)]
pub struct DiffusionLoadSolution {
    pub mean_gradient: [f64; 3],
    /// Gradient component `a` on the `+a` face of each voxel.
    pub faces: [Vec<f64>; 3],
    pub diagnostics: SolveDiagnostics,
}

/// Solves the conductivity cell problem for unit gradient `e_load`.
pub fn solve_diffusion_cell(
    field: &ConductivityField,
    load: usize,
    options: &SolverOptions,
) -> Result<DiffusionLoadSolution, SolveError> {
    assert!(load < 3, "gradient index out of range");
    options.validate()?;
    let medium = diffusion::DiffusionMedium::new(field)?;
    let mut g = [0.0; 3];
    g[load] = 1.0;
    medium.solve(g, options)
}

pub fn solve_diffusion_cells(
    field: &ConductivityField,
    options: &SolverOptions,
) -> Result<Vec<DiffusionLoadSolution>, SolveError> {
    options.validate()?;
    let medium = diffusion::DiffusionMedium::new(field)?;
    let loads = par::map_range(3, |i| {
        let mut g = [0.0; 3];
        g[i] = 1.0;
        medium.solve(g, options)
    });
    loads.into_iter().collect()
}

pub fn homogenized_diffusivity(field: &ConductivityField, solutions: &[DiffusionLoadSolution]) -> Matrix3<f64> {
    diffusion::energy_matrix(field, solutions)
}

pub fn homogenize_diffusion(
    field: &ConductivityField,
    options: &SolverOptions,
) -> Result<(Matrix3<f64>, Vec<DiffusionLoadSolution>), SolveError> {
    let solutions = solve_diffusion_cells(field, options)?;
    Ok((homogenized_diffusivity(field, &solutions), solutions))
}

/// `(min + max) / 2` of a coefficient array.
fn reference_value(values: &[f64]) -> f64 {
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    0.5 * (lo + hi)
}

/// Four-point harmonic mean; exact when all inputs agree.
#[inline]
fn harmonic4(a: f64, b: f64, c: f64, d: f64) -> f64 {
    if a == b && b == c && c == d {
        a
    } else {
        4.0 / (1.0 / a + 1.0 / b + 1.0 / c + 1.0 / d)
    }
}

#[inline]
fn harmonic2(a: f64, b: f64) -> f64 {
    if a == b {
        a
    } else {
        2.0 / (1.0 / a + 1.0 / b)
    }
}

/// Periodic neighbour tables for an `n^3` grid.
struct Stencil {
    n: usize,
    plus: [Vec<u32>; 3],
    minus: [Vec<u32>; 3],
    /// `2 n sin(π k / n)` for every axis index `k`.
    symbol: Vec<f64>,
}

impl Stencil {
    fn new(n: usize) -> Self {
        let len = n * n * n;
        let strides = [n * n, n, 1];
        let make = |axis: usize, forward: bool| -> Vec<u32> {
            (0..len)
                .map(|p| {
                    let c = (p / strides[axis]) % n;
                    let q = if forward {
                        if c + 1 == n { p + strides[axis] - n * strides[axis] } else { p + strides[axis] }
                    } else if c == 0 {
                        p + (n - 1) * strides[axis]
                    } else {
                        p - strides[axis]
                    };
                    q as u32
                })
                .collect()
        };
        let symbol = (0..n)
            .map(|k| 2.0 * n as f64 * (std::f64::consts::PI * k as f64 / n as f64).sin())
            .collect();
        Self {
            n,
            plus: [make(0, true), make(1, true), make(2, true)],
            minus: [make(0, false), make(1, false), make(2, false)],
            symbol,
        }
    }

    fn len(&self) -> usize {
        self.n * self.n * self.n
    }
}
