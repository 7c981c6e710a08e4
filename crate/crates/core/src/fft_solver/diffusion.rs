use nalgebra::Matrix3;
use rustfft::num_complex::Complex64;

use super::krylov::{self, CellOperator};
use super::{harmonic2, reference_value, DiffusionLoadSolution, SolveError, SolverOptions, Stencil};
use crate::fft::Fft3;
use crate::geometry::ConductivityField;
use crate::par;

pub(super) struct DiffusionMedium {
    stencil: Stencil,
    face: [Vec<f64>; 3],
    reference: f64,
}

fn face_values(field: &ConductivityField, stencil: &Stencil) -> [Vec<f64>; 3] {
    [0, 1, 2].map(|a| {
        (0..stencil.len())
            .map(|p| harmonic2(field.values[p], field.values[stencil.plus[a][p] as usize]))
            .collect()
    })
}

impl DiffusionMedium {
    pub(super) fn new(field: &ConductivityField) -> Result<Self, SolveError> {
        if let Some(voxel) = field.values.iter().position(|&d| !(d > 0.0)) {
            return Err(SolveError::NotPositive { voxel });
        }
        let stencil = Stencil::new(field.n);
        let face = face_values(field, &stencil);
        Ok(Self { reference: reference_value(&field.values), stencil, face })
    }

    pub(super) fn solve(&self, mean_gradient: [f64; 3], options: &SolverOptions) -> Result<DiffusionLoadSolution, SolveError> {
        let len = self.stencil.len();
        let mut op = DiffusionOperator::new(self);
        let mut rhs = vec![0.0; len];
        op.neg_div_flux(None, &mean_gradient, &mut rhs);
        rhs.iter_mut().for_each(|v| *v = -*v);
        let mut w = vec![0.0; len];
        let diagnostics = krylov::solve(&mut op, &rhs, &mut w, options)?;
        let st = &self.stencil;
        let nf = st.n as f64;
        let faces = [0, 1, 2].map(|a| {
            (0..len)
                .map(|p| mean_gradient[a] + nf * (w[st.plus[a][p] as usize] - w[p]))
                .collect()
        });
        Ok(DiffusionLoadSolution { mean_gradient, faces, diagnostics })
    }
}

struct DiffusionOperator<'a> {
    medium: &'a DiffusionMedium,
    fft: Fft3,
    spectrum: Vec<Complex64>,
    flux: [Vec<f64>; 3],
}

impl<'a> DiffusionOperator<'a> {
    fn new(medium: &'a DiffusionMedium) -> Self {
        let len = medium.stencil.len();
        Self {
            medium,
            fft: Fft3::new(medium.stencil.n),
            spectrum: vec![Complex64::default(); len],
            flux: [vec![0.0; len], vec![0.0; len], vec![0.0; len]],
        }
    }

    fn neg_div_flux(&mut self, w: Option<&[f64]>, g: &[f64; 3], out: &mut [f64]) {
        let st = &self.medium.stencil;
        let nf = st.n as f64;
        for a in 0..3 {
            let q = &mut self.flux[a];
            let d = &self.medium.face[a];
            match w {
                Some(w) => {
                    for p in 0..st.len() {
                        q[p] = d[p] * (g[a] + nf * (w[st.plus[a][p] as usize] - w[p]));
                    }
                }
                None => {
                    for p in 0..st.len() {
                        q[p] = d[p] * g[a];
                    }
                }
            }
        }
        for (p, o) in out.iter_mut().enumerate() {
            let mut div = 0.0;
            for a in 0..3 {
                div += self.flux[a][p] - self.flux[a][st.minus[a][p] as usize];
            }
            *o = -nf * div;
        }
    }
}

impl CellOperator for DiffusionOperator<'_> {
    fn len(&self) -> usize {
        self.medium.stencil.len()
    }

    fn apply(&mut self, x: &[f64], out: &mut [f64]) {
        self.neg_div_flux(Some(x), &[0.0; 3], out);
    }

    fn precondition(&mut self, r: &[f64], out: &mut [f64]) {
        let st = &self.medium.stencil;
        let n = st.n;
        for (c, &v) in self.spectrum.iter_mut().zip(r) {
            *c = Complex64::new(v, 0.0);
        }
        self.fft.forward(&mut self.spectrum);
        for (idx, c) in self.spectrum.iter_mut().enumerate() {
            let t = [idx / (n * n), (idx / n) % n, idx % n].map(|k| st.symbol[k]);
            let tt = t[0] * t[0] + t[1] * t[1] + t[2] * t[2];
            *c = if tt == 0.0 { Complex64::default() } else { *c / (self.medium.reference * tt) };
        }
        self.fft.inverse(&mut self.spectrum);
        for (o, c) in out.iter_mut().zip(&self.spectrum) {
            *o = c.re;
        }
    }
}

pub(super) fn energy_matrix(field: &ConductivityField, loads: &[DiffusionLoadSolution]) -> Matrix3<f64> {
    assert_eq!(loads.len(), 3);
    let stencil = Stencil::new(field.n);
    let face = face_values(field, &stencil);
    let len = stencil.len();
    let mut d = Matrix3::zeros();
    for i in 0..3 {
        for j in i..3 {
            let total = par::sum_range(len, |p| {
                (0..3).map(|a| face[a][p] * loads[i].faces[a][p] * loads[j].faces[a][p]).sum::<f64>()
            });
            d[(i, j)] = total / len as f64;
            d[(j, i)] = d[(i, j)];
        }
    }
    d
}
