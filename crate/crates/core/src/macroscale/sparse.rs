//! Compressed sparse rows assembled from element connectivity, and a
//! Jacobi-preconditioned conjugate gradient solver.

use crate::par;

#[derive(Debug, Clone)]
pub struct CsrPattern {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<u32>,
}

/// Pattern plus, for every element, the CSR slot of each local entry
/// (`maps[e * m * m + r * m + c]`).
#[derive(Debug, Clone)]
pub struct Assembly {
    pub pattern: CsrPattern,
    pub local: usize,
    pub maps: Vec<u32>,
}

impl Assembly {
    /// `elements[e]` lists the `m` global unknowns of element `e`.
    pub fn new(n: usize, elements: &[Vec<usize>]) -> Self {
        let local = elements.first().map_or(0, Vec::len);
        let mut rows: Vec<Vec<u32>> = vec![Vec::new(); n];
        for dofs in elements {
            debug_assert_eq!(dofs.len(), local);
            for &r in dofs {
                rows[r].extend(dofs.iter().map(|&c| c as u32));
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for row in &mut rows {
            row.sort_unstable();
            row.dedup();
            cols.extend_from_slice(row);
            row_ptr.push(cols.len());
        }
        let pattern = CsrPattern { n, row_ptr, cols };
        let maps = elements
            .iter()
            .flat_map(|dofs| {
                let pattern = &pattern;
                dofs.iter().flat_map(move |&r| {
                    dofs.iter().map(move |&c| pattern.slot(r, c).expect("entry in pattern") as u32)
                })
            })
            .collect();
        Self { pattern, local, maps }
    }

    pub fn element_count(&self) -> usize {
        if self.local == 0 {
            0
        } else {
            self.maps.len() / (self.local * self.local)
        }
    }

    /// Sums element matrices (row-major `m × m`) into CSR values. Element
    /// matrices are computed in parallel batches and scattered in element
    /// order, so the result does not depend on the thread count.
    pub fn assemble<F>(&self, element_matrix: F) -> Vec<f64>
    where
        F: Fn(usize) -> Vec<f64> + Sync + Send,
    {
        const BATCH: usize = 1024;
        let mut values = vec![0.0; self.pattern.cols.len()];
        let mm = self.local * self.local;
        let count = self.element_count();
        for start in (0..count).step_by(BATCH) {
            let len = BATCH.min(count - start);
            let batch = par::map_range(len, |i| element_matrix(start + i));
            for (i, ke) in batch.iter().enumerate() {
                let e = start + i;
                for (slot, v) in self.maps[e * mm..(e + 1) * mm].iter().zip(ke) {
                    values[*slot as usize] += v;
                }
            }
        }
        values
    }
}

impl CsrPattern {
    pub fn slot(&self, r: usize, c: usize) -> Option<usize> {
        let cols = &self.cols[self.row_ptr[r]..self.row_ptr[r + 1]];
        cols.binary_search(&(c as u32)).ok().map(|k| self.row_ptr[r] + k)
    }

    pub fn matvec(&self, values: &[f64], x: &[f64], y: &mut [f64]) {
        par::for_each_mut(y, |r, yr| {
            let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
            *yr = self.cols[a..b].iter().zip(&values[a..b]).map(|(&c, v)| v * x[c as usize]).sum();
        });
    }

    pub fn diagonal(&self, values: &[f64]) -> Vec<f64> {
        (0..self.n).map(|r| self.slot(r, r).map_or(0.0, |s| values[s])).collect()
    }

    /// Replaces rows and columns of `fixed` unknowns by the identity.
    pub fn constrain(&self, values: &mut [f64], fixed: &[bool]) {
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.cols[k] as usize;
                if fixed[r] || fixed[c] {
                    values[k] = if r == c { 1.0 } else { 0.0 };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgReport {
    pub iterations: usize,
    pub relative_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CgFailure {
    /// `p^T A p <= 0`: the operator is singular or indefinite.
    Breakdown { iteration: usize },
    NotConverged { iterations: usize, relative_residual: f64 },
}

/// Solves `A x = b` from the initial guess in `x`; stops when
/// `|r| <= tol |b|`.
pub fn pcg(
    pattern: &CsrPattern,
    values: &[f64],
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<CgReport, CgFailure> {
    let n = pattern.n;
    let diag = pattern.diagonal(values);
    if diag.iter().any(|&d| !(d > 0.0)) {
        return Err(CgFailure::Breakdown { iteration: 0 });
    }
    let bnorm = par::dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgReport { iterations: 0, relative_residual: 0.0 });
    }
    let mut r = vec![0.0; n];
    pattern.matvec(values, x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(a, d)| a / d).collect();
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = par::dot(&r, &z);
    let mut rel = par::dot(&r, &r).sqrt() / bnorm;
    if rel <= tol {
        return Ok(CgReport { iterations: 0, relative_residual: rel });
    }
    for it in 1..=max_iter {
        pattern.matvec(values, &p, &mut q);
        let pq = par::dot(&p, &q);
        if !(pq > 0.0) {
            return Err(CgFailure::Breakdown { iteration: it });
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        rel = par::dot(&r, &r).sqrt() / bnorm;
        if rel <= tol {
            return Ok(CgReport { iterations: it, relative_residual: rel });
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = par::dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(CgFailure::NotConverged { iterations: max_iter, relative_residual: rel })
}
