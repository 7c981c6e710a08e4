use nalgebra::Matrix6;
use rustfft::num_complex::Complex64;

use super::krylov::{self, CellOperator};
use super::{harmonic4, reference_value, ElasticLoadSolution, SolveError, SolverOptions, Stencil};
use crate::fft::Fft3;
use crate::geometry::{Grid3, StiffnessField};
use crate::par;
use crate::tensor::SymComponents;

/// Axis pairs of the shear slots `23, 13, 12`.
const SHEAR_AXES: [(usize, usize); 3] = [(1, 2), (0, 2), (0, 1)];

/// Shear slots touching axis `a`, with the other axis of each slot.
const SHEAR_OF_AXIS: [[(usize, usize); 2]; 3] = [[(1, 2), (2, 1)], [(0, 2), (2, 0)], [(0, 1), (1, 0)]];

/// Average of the four edge values of shear slot `s` around voxel `p`.
pub fn voxel_shear_from_edges(edges: &[f64], n: usize, s: usize, p: usize) -> f64 {
    let g = Grid3 { n };
    let (a, b) = SHEAR_AXES[s];
    let pa = g.shift(p, a, false);
    let pb = g.shift(p, b, false);
    let pab = g.shift(pa, b, false);
    0.25 * (edges[p] + edges[pa] + edges[pb] + edges[pab])
}

pub(super) struct ElasticMedium {
    stencil: Stencil,
    lambda: Vec<f64>,
    mu: Vec<f64>,
    mu_edge: [Vec<f64>; 3],
    lambda0: f64,
    mu0: f64,
}

impl ElasticMedium {
    pub(super) fn new(field: &StiffnessField) -> Result<Self, SolveError> {
        if let Some(voxel) = field
            .mu
            .iter()
            .zip(&field.lambda)
            .position(|(&m, &l)| !(m > 0.0 && 3.0 * l + 2.0 * m > 0.0))
        {
            return Err(SolveError::NotPositive { voxel });
        }
        let stencil = Stencil::new(field.n);
        let mu = &field.mu;
        let mu_edge = SHEAR_AXES.map(|(a, b)| {
            par::map_range(stencil.len(), |p| {
                let pa = stencil.plus[a][p] as usize;
                let pb = stencil.plus[b][p] as usize;
                let pab = stencil.plus[b][pa] as usize;
                harmonic4(mu[p], mu[pa], mu[pb], mu[pab])
            })
        });
        Ok(Self {
            lambda0: reference_value(&field.lambda),
            mu0: reference_value(&field.mu),
            stencil,
            lambda: field.lambda.clone(),
            mu: field.mu.clone(),
            mu_edge,
        })
    }

    pub(super) fn solve(&self, mean_strain: SymComponents, options: &SolverOptions) -> Result<ElasticLoadSolution, SolveError> {
        let len = self.stencil.len();
        let mut op = ElasticOperator::new(self);
        let mut rhs = vec![0.0; 3 * len];
        op.neg_div_stress(None, &mean_strain, &mut rhs);
        rhs.iter_mut().for_each(|v| *v = -*v);
        let mut u = vec![0.0; 3 * len];
        let diagnostics = krylov::solve(&mut op, &rhs, &mut u, options)?;
        let (normal, shear_edges) = self.strains(&u, &mean_strain);
        Ok(ElasticLoadSolution { mean_strain, normal, shear_edges, diagnostics })
    }

    fn strains(&self, u: &[f64], e: &SymComponents) -> ([Vec<f64>; 3], [Vec<f64>; 3]) {
        let st = &self.stencil;
        let len = st.len();
        let nf = st.n as f64;
        let normal = [0, 1, 2].map(|a| {
            let ua = &u[a * len..(a + 1) * len];
            (0..len).map(|p| e[a] + nf * (ua[p] - ua[st.minus[a][p] as usize])).collect()
        });
        let shear = [0, 1, 2].map(|s| {
            let (a, b) = SHEAR_AXES[s];
            let ua = &u[a * len..(a + 1) * len];
            let ub = &u[b * len..(b + 1) * len];
            (0..len)
                .map(|p| {
                    e[3 + s]
                        + 0.5 * nf * (ua[st.plus[b][p] as usize] - ua[p] + ub[st.plus[a][p] as usize] - ub[p])
                })
                .collect()
        });
        (normal, shear)
    }
}

struct ElasticOperator<'a> {
    medium: &'a ElasticMedium,
    fft: Fft3,
    spectra: [Vec<Complex64>; 3],
    stress: [Vec<f64>; 3],
    shear: [Vec<f64>; 3],
    phase: Vec<Complex64>,
}

impl<'a> ElasticOperator<'a> {
    fn new(medium: &'a ElasticMedium) -> Self {
        let n = medium.stencil.n;
        let len = medium.stencil.len();
        let zeros_c = || vec![Complex64::default(); len];
        Self {
            medium,
            fft: Fft3::new(n),
            spectra: [zeros_c(), zeros_c(), zeros_c()],
            stress: [vec![0.0; len], vec![0.0; len], vec![0.0; len]],
            shear: [vec![0.0; len], vec![0.0; len], vec![0.0; len]],
            phase: (0..n)
                .map(|k| Complex64::from_polar(1.0, std::f64::consts::PI * k as f64 / n as f64))
                .collect(),
        }
    }

    /// `out = -div C (E + D u)`; `u = None` means zero displacement.
    fn neg_div_stress(&mut self, u: Option<&[f64]>, e: &SymComponents, out: &mut [f64]) {
        let m = self.medium;
        let st = &m.stencil;
        let len = st.len();
        let nf = st.n as f64;
        let comp = |a: usize, p: usize| -> f64 { u.map_or(0.0, |u| u[a * len + p]) };

        for p in 0..len {
            let mut eps = [e[0], e[1], e[2]];
            if u.is_some() {
                for (a, ea) in eps.iter_mut().enumerate() {
                    *ea += nf * (comp(a, p) - comp(a, st.minus[a][p] as usize));
                }
            }
            let tr = eps[0] + eps[1] + eps[2];
            for a in 0..3 {
                self.stress[a][p] = m.lambda[p] * tr + 2.0 * m.mu[p] * eps[a];
            }
        }
        for (s, &(a, b)) in SHEAR_AXES.iter().enumerate() {
            let tau = &mut self.shear[s];
            let mu_e = &m.mu_edge[s];
            for p in 0..len {
                let mut g = e[3 + s];
                if u.is_some() {
                    g += 0.5
                        * nf
                        * (comp(a, st.plus[b][p] as usize) - comp(a, p) + comp(b, st.plus[a][p] as usize) - comp(b, p));
                }
                tau[p] = 2.0 * mu_e[p] * g;
            }
        }
        for a in 0..3 {
            let sig = &self.stress[a];
            let [(s1, b1), (s2, b2)] = SHEAR_OF_AXIS[a];
            let (t1, t2) = (&self.shear[s1], &self.shear[s2]);
            let o = &mut out[a * len..(a + 1) * len];
            for p in 0..len {
                let d = sig[st.plus[a][p] as usize] - sig[p] + t1[p] - t1[st.minus[b1][p] as usize] + t2[p]
                    - t2[st.minus[b2][p] as usize];
                o[p] = -nf * d;
            }
        }
    }
}

impl CellOperator for ElasticOperator<'_> {
    fn len(&self) -> usize {
        3 * self.medium.stencil.len()
    }

    fn apply(&mut self, x: &[f64], out: &mut [f64]) {
        self.neg_div_stress(Some(x), &[0.0; 6], out);
    }

    fn precondition(&mut self, r: &[f64], out: &mut [f64]) {
        let st = &self.medium.stencil;
        let (n, len) = (st.n, st.len());
        let (l0, m0) = (self.medium.lambda0, self.medium.mu0);
        for a in 0..3 {
            for (c, &v) in self.spectra[a].iter_mut().zip(&r[a * len..(a + 1) * len]) {
                *c = Complex64::new(v, 0.0);
            }
            self.fft.forward(&mut self.spectra[a]);
        }
        for idx in 0..len {
            let ks = [idx / (n * n), (idx / n) % n, idx % n];
            let t = ks.map(|k| st.symbol[k]);
            let tt = t[0] * t[0] + t[1] * t[1] + t[2] * t[2];
            if tt == 0.0 {
                for a in 0..3 {
                    self.spectra[a][idx] = Complex64::default();
                }
                continue;
            }
            let ph = ks.map(|k| self.phase[k]);
            let v = [0, 1, 2].map(|a| self.spectra[a][idx] * ph[a].conj());
            let tv = v[0] * t[0] + v[1] * t[1] + v[2] * t[2];
            let c = (l0 + m0) / ((l0 + 2.0 * m0) * tt);
            let inv = 1.0 / (m0 * tt);
            for a in 0..3 {
                self.spectra[a][idx] = (v[a] - tv * (c * t[a])) * inv * ph[a];
            }
        }
        for a in 0..3 {
            self.fft.inverse(&mut self.spectra[a]);
            for (o, c) in out[a * len..(a + 1) * len].iter_mut().zip(&self.spectra[a]) {
                *o = c.re;
            }
        }
    }
}

pub(super) fn energy_matrix(field: &StiffnessField, loads: &[ElasticLoadSolution]) -> Matrix6<f64> {
    assert_eq!(loads.len(), 6);
    let medium_mu_edge = {
        let st = Stencil::new(field.n);
        SHEAR_AXES.map(|(a, b)| {
            (0..st.len())
                .map(|p| {
                    let pa = st.plus[a][p] as usize;
                    let pb = st.plus[b][p] as usize;
                    let pab = st.plus[b][pa] as usize;
                    harmonic4(field.mu[p], field.mu[pa], field.mu[pb], field.mu[pab])
                })
                .collect::<Vec<f64>>()
        })
    };
    let len = field.lambda.len();
    let mut c = Matrix6::zeros();
    for i in 0..6 {
        for j in i..6 {
            let (li, lj) = (&loads[i], &loads[j]);
            let total = par::sum_range(len, |p| {
                let tri = li.normal[0][p] + li.normal[1][p] + li.normal[2][p];
                let trj = lj.normal[0][p] + lj.normal[1][p] + lj.normal[2][p];
                let mut w = field.lambda[p] * tri * trj;
                for a in 0..3 {
                    w += 2.0 * field.mu[p] * li.normal[a][p] * lj.normal[a][p];
                }
                for s in 0..3 {
                    w += 4.0 * medium_mu_edge[s][p] * li.shear_edges[s][p] * lj.shear_edges[s][p];
                }
                w
            });
            c[(i, j)] = total / len as f64;
            c[(j, i)] = c[(i, j)];
        }
    }
    c
}
