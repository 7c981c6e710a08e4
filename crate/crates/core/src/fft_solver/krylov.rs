//! Preconditioned iterations shared by the elastic and diffusive cell solves.

use super::{Scheme, SolveDiagnostics, SolveError, SolverOptions};
use crate::par;

/// Symmetric positive semi-definite operator with an approximate inverse.
pub(crate) trait CellOperator {
    fn len(&self) -> usize;
    fn apply(&mut self, x: &[f64], out: &mut [f64]);
    fn precondition(&mut self, r: &[f64], out: &mut [f64]);
}

/// Solves `A x = b` starting from `x`. Convergence is measured in the
/// preconditioner norm, `sqrt(r·Pr / r0·Pr0) <= tol`.
pub(crate) fn solve<Op: CellOperator>(
    op: &mut Op,
    rhs: &[f64],
    x: &mut [f64],
    options: &SolverOptions,
) -> Result<SolveDiagnostics, SolveError> {
    let len = op.len();
    let mut r = vec![0.0; len];
    let mut z = vec![0.0; len];
    residual(op, rhs, x, &mut r);
    op.precondition(&r, &mut z);
    let rz0 = par::dot(&r, &z);
    if rz0 <= f64::MIN_POSITIVE {
        return Ok(SolveDiagnostics { iterations: 1, relative_residual: 0.0, history: vec![0.0] });
    }

    let mut history = Vec::new();
    match options.scheme {
        Scheme::Basic => {
            for it in 1..=options.max_iter {
                for (xi, zi) in x.iter_mut().zip(&z) {
                    *xi += zi;
                }
                residual(op, rhs, x, &mut r);
                op.precondition(&r, &mut z);
                let rel = (par::dot(&r, &z).max(0.0) / rz0).sqrt();
                history.push(rel);
                if rel <= options.tol {
                    return Ok(SolveDiagnostics { iterations: it, relative_residual: rel, history });
                }
            }
        }
        Scheme::ConjugateGradient => {
            let mut p = z.clone();
            let mut q = vec![0.0; len];
            let mut rz = rz0;
            for it in 1..=options.max_iter {
                op.apply(&p, &mut q);
                let pq = par::dot(&p, &q);
                if !(pq > 0.0) {
                    return Err(SolveError::Breakdown { iteration: it, history });
                }
                let alpha = rz / pq;
                for i in 0..len {
                    x[i] += alpha * p[i];
                    r[i] -= alpha * q[i];
                }
                op.precondition(&r, &mut z);
                let rz_new = par::dot(&r, &z);
                let rel = (rz_new.max(0.0) / rz0).sqrt();
                history.push(rel);
                if rel <= options.tol {
                    return Ok(SolveDiagnostics { iterations: it, relative_residual: rel, history });
                }
                let beta = rz_new / rz;
                rz = rz_new;
                for i in 0..len {
                    p[i] = z[i] + beta * p[i];
                }
            }
        }
    }
    Err(SolveError::NotConverged { max_iter: options.max_iter, history })
}

fn residual<Op: CellOperator>(op: &mut Op, rhs: &[f64], x: &[f64], r: &mut [f64]) {
    op.apply(x, r);
    for (ri, bi) in r.iter_mut().zip(rhs) {
        *ri = bi - *ri;
    }
}
