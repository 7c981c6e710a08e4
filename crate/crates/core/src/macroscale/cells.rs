//! Cell volume fractions on the defect: reaction terms and the
//! semi-implicit transport step.

use nalgebra::Matrix3;

use super::domain::{DefectMesh, MacroDomain};
use super::sparse::{pcg, Assembly, CgFailure};
use super::MacroError;
use crate::stimulus::{RateTable, CHANNELS};

/// Species order used throughout: progenitors, fibroblasts, chondrocytes,
/// osteoblasts.
pub const SPECIES: [&str; 4] = ["c_pro", "c_fib", "c_cho", "c_ost"];
/// Progenitor fraction held on marrow and periosteum nodes.
pub const PROGENITOR_SOURCE: f64 = 0.3;
/// Osteoblast fraction held on nodes touching cortical bone.
pub const OSTEOBLAST_SOURCE: f64 = 1.0;

/// Nodal cell fractions on the defect mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub fields: [Vec<f64>; 4],
}

impl CellState {
    pub fn zeros(nodes: usize) -> Self {
        Self { fields: std::array::from_fn(|_| vec![0.0; nodes]) }
    }

    /// Empty defect with the boundary sources imposed.
    pub fn initial(defect: &DefectMesh) -> Self {
        let mut s = Self::zeros(defect.nodes.len());
        s.impose_sources(defect);
        s
    }

    pub fn node_count(&self) -> usize {
        self.fields[0].len()
    }

    pub fn impose_sources(&mut self, defect: &DefectMesh) {
        for (v, &src) in defect.progenitor_source.iter().enumerate() {
            if src {
                self.fields[0][v] = PROGENITOR_SOURCE;
            }
        }
        // a node held at full osteoblast occupation has no room for other cells
        for (v, &src) in defect.osteoblast_source.iter().enumerate() {
            if src {
                for f in &mut self.fields[..3] {
                    f[v] = 0.0;
                }
                self.fields[3][v] = OSTEOBLAST_SOURCE;
            }
        }
    }

    pub fn clamp_unit(&mut self) {
        for f in &mut self.fields {
            for x in f.iter_mut() {
                *x = x.clamp(0.0, 1.0);
            }
        }
    }

    /// Mass-weighted averages over the defect.
    pub fn average(&self, defect: &DefectMesh) -> [f64; 4] {
        let vol = defect.volume();
        std::array::from_fn(|i| self.fields[i].iter().zip(&defect.mass).map(|(c, m)| c * m).sum::<f64>() / vol)
    }

    /// `∫ c_i` over the defect with the lumped mass.
    pub fn integral(&self, defect: &DefectMesh, species: usize) -> f64 {
        self.fields[species].iter().zip(&defect.mass).map(|(c, m)| c * m).sum()
    }

    pub fn at(&self, v: usize) -> [f64; 4] {
        [self.fields[0][v], self.fields[1][v], self.fields[2][v], self.fields[3][v]]
    }

    pub fn max_total(&self) -> f64 {
        (0..self.node_count()).map(|v| self.at(v).iter().sum::<f64>()).fold(0.0, f64::max)
    }
}

/// Reaction terms `R_i` for cell fractions `c`, channel values `ch` and
/// occupied scaffold fraction `r`. Logistic growth is limited by the free
/// capacity `1 - Σc / (1 - r)`.
pub fn reaction(rates: &RateTable, c: &[f64; 4], ch: &[f64; CHANNELS], r: f64) -> [f64; 4] {
    let k = rates.rates(ch);
    let logistic = 1.0 - c.iter().sum::<f64>() / (1.0 - r);
    let diff_total: f64 = k.differentiation.iter().sum();
    std::array::from_fn(|i| {
        let own = k.proliferation[i] * c[i] * logistic - k.apoptosis[i] * c[i];
        if i == 0 {
            own - diff_total * c[0]
        } else {
            own + k.differentiation[i - 1] * c[0]
        }
    })
}

/// Cotangents of `Σ_i w_i R_i(c, ch, r)` with respect to `c`, `ch`, `r`.
pub(crate) fn reaction_adjoint(
    rates: &RateTable,
    c: &[f64; 4],
    ch: &[f64; CHANNELS],
    r: f64,
    w: &[f64; 4],
) -> ([f64; 4], [f64; CHANNELS], f64) {
    let k = rates.rates(ch);
    let cap = 1.0 - r;
    let total: f64 = c.iter().sum();
    let logistic = 1.0 - total / cap;
    let growth: f64 = (0..4).map(|i| w[i] * k.proliferation[i] * c[i]).sum();
    let diff_total: f64 = k.differentiation.iter().sum();
    let mut cbar: [f64; 4] = std::array::from_fn(|j| w[j] * (k.proliferation[j] * logistic - k.apoptosis[j]) - growth / cap);
    cbar[0] += -w[0] * diff_total + (1..4).map(|i| w[i] * k.differentiation[i - 1]).sum::<f64>();
    let mut chbar = [0.0; CHANNELS];
    for i in 0..4 {
        chbar[i] = w[i] * c[i] * (rates.proliferation[i] * logistic + rates.apoptosis[i]);
    }
    for j in 0..3 {
        chbar[4 + j] = rates.differentiation * c[0] * (w[j + 1] - w[0]);
    }
    let rbar = -growth * total / (cap * cap);
    (cbar, chbar, rbar)
}

/// Node averages of per-element values over the adjacent defect elements.
pub(crate) fn nodal_average<const K: usize>(defect: &DefectMesh, values: &[[f64; K]]) -> Vec<[f64; K]> {
    let mut out = vec![[0.0; K]; defect.nodes.len()];
    for (conn, val) in defect.connectivity.iter().zip(values) {
        for &v in conn {
            for k in 0..K {
                out[v][k] += val[k];
            }
        }
    }
    for (o, &n) in out.iter_mut().zip(&defect.valence) {
        for x in o.iter_mut() {
            *x /= n as f64;
        }
    }
    out
}

/// Transpose of [`nodal_average`].
pub(crate) fn nodal_average_adjoint<const K: usize>(defect: &DefectMesh, nodal: &[[f64; K]]) -> Vec<[f64; K]> {
    defect
        .connectivity
        .iter()
        .map(|conn| {
            let mut acc = [0.0; K];
            for &v in conn {
                for k in 0..K {
                    acc[k] += nodal[v][k] / defect.valence[v] as f64;
                }
            }
            acc
        })
        .collect()
}

/// Diffusion operator pattern on the defect mesh.
#[derive(Debug, Clone)]
pub(crate) struct TransportSystem {
    pub assembly: Assembly,
}

/// `M + dt K_D`, unconstrained and with progenitor sources eliminated.
pub(crate) struct TransportMatrices {
    pub free: Vec<f64>,
    pub progenitor: Vec<f64>,
}

impl TransportSystem {
    pub fn new(defect: &DefectMesh) -> Self {
        let elements: Vec<Vec<usize>> = defect.connectivity.iter().map(|c| c.to_vec()).collect();
        Self { assembly: Assembly::new(defect.nodes.len(), &elements) }
    }

    pub fn matrices(&self, domain: &MacroDomain, diffusivity: &[Matrix3<f64>], dt: f64) -> TransportMatrices {
        let defect = &domain.defect;
        let mut free = self.assembly.assemble(|e| {
            let basis = &domain.bases[domain.elements[defect.elements[e]].basis];
            basis.diffusion_matrix(&diffusivity[e]).iter().map(|k| dt * k).collect()
        });
        let pattern = &self.assembly.pattern;
        for (v, m) in defect.mass.iter().enumerate() {
            free[pattern.slot(v, v).expect("diagonal")] += m;
        }
        let mut progenitor = free.clone();
        pattern.constrain(&mut progenitor, &defect.progenitor_source);
        TransportMatrices { free, progenitor }
    }

    pub fn solve(&self, values: &[f64], rhs: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<usize, MacroError> {
        pcg(&self.assembly.pattern, values, rhs, x, tol, max_iter).map(|r| r.iterations).map_err(|e| match e {
            CgFailure::Breakdown { iteration } => MacroError::Singular { system: "transport", iteration },
            CgFailure::NotConverged { iterations, relative_residual } => {
                MacroError::NotConverged { system: "transport", iterations, residual: relative_residual }
            }
        })
    }

    /// Semi-implicit step: diffusing species solve
    /// `(M + dt K_D) c̃ = M (c + dt R)`, the others update explicitly.
    /// Returns the unclamped predictor.
    #[allow(clippy::too_many_arguments)]
    pub fn predict(
        &self,
        defect: &DefectMesh,
        matrices: &TransportMatrices,
        rates: &RateTable,
        state: &CellState,
        channels: &[[f64; CHANNELS]],
        occupied: &[f64],
        dt: f64,
        tol: f64,
        max_iter: usize,
    ) -> Result<(CellState, usize), MacroError> {
        let n = state.node_count();
        let mut explicit = CellState::zeros(n);
        for v in 0..n {
            let c = state.at(v);
            let r = reaction(rates, &c, &channels[v], occupied[v]);
            for i in 0..4 {
                explicit.fields[i][v] = c[i] + dt * r[i];
            }
        }
        let mut next = explicit.clone();
        let mut iterations = 0;

        // progenitors: sources eliminated and lifted into the right-hand side
        let lift: Vec<f64> =
            defect.progenitor_source.iter().map(|&s| if s { PROGENITOR_SOURCE } else { 0.0 }).collect();
        let mut lifted = vec![0.0; n];
        self.assembly.pattern.matvec(&matrices.free, &lift, &mut lifted);
        let rhs: Vec<f64> = (0..n)
            .map(|v| {
                if defect.progenitor_source[v] {
                    PROGENITOR_SOURCE
                } else {
                    defect.mass[v] * explicit.fields[0][v] - lifted[v]
                }
            })
            .collect();
        let mut x = state.fields[0].clone();
        iterations += self.solve(&matrices.progenitor, &rhs, &mut x, tol, max_iter)?;
        next.fields[0] = x;

        let rhs: Vec<f64> = (0..n).map(|v| defect.mass[v] * explicit.fields[1][v]).collect();
        let mut x = state.fields[1].clone();
        iterations += self.solve(&matrices.free, &rhs, &mut x, tol, max_iter)?;
        next.fields[1] = x;
        Ok((next, iterations))
    }
}
