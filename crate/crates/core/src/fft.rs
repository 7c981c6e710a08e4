//! Complex 3-D FFT on periodic `n^3` grids (x slowest, z contiguous).

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Planned forward/inverse transforms plus scratch space. Not `Sync`; each
/// solve owns its own instance.
pub struct Fft3 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    lines: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl Fft3 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Self {
            n,
            forward,
            inverse,
            lines: vec![Complex64::default(); n * n],
            scratch: vec![Complex64::default(); scratch_len],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Unnormalized forward transform `X(k) = Σ x(p) e^{-2πi k·p/n}`.
    pub fn forward(&mut self, data: &mut [Complex64]) {
        let plan = Arc::clone(&self.forward);
        self.transform(plan.as_ref(), data);
    }

    /// Inverse transform including the `1/n^3` factor.
    pub fn inverse(&mut self, data: &mut [Complex64]) {
        let plan = Arc::clone(&self.inverse);
        self.transform(plan.as_ref(), data);
        let scale = 1.0 / data.len() as f64;
        data.iter_mut().for_each(|v| *v *= scale);
    }

    fn transform(&mut self, plan: &dyn Fft<f64>, data: &mut [Complex64]) {
        let n = self.n;
        assert_eq!(data.len(), n * n * n);
        // z: lines are contiguous
        plan.process_with_scratch(data, &mut self.scratch);

        // y: one xz-slab at a time
        for i in 0..n {
            let base = i * n * n;
            for k in 0..n {
                for j in 0..n {
                    self.lines[k * n + j] = data[base + j * n + k];
                }
            }
            plan.process_with_scratch(&mut self.lines, &mut self.scratch);
            for k in 0..n {
                for j in 0..n {
                    data[base + j * n + k] = self.lines[k * n + j];
                }
            }
        }

        // x: one yz-column at a time
        for j in 0..n {
            for k in 0..n {
                for i in 0..n {
                    self.lines[k * n + i] = data[(i * n + j) * n + k];
                }
            }
            plan.process_with_scratch(&mut self.lines, &mut self.scratch);
            for k in 0..n {
                for i in 0..n {
                    data[(i * n + j) * n + k] = self.lines[k * n + i];
                }
            }
        }
    }
}

/// Signed wavenumber of index `k` on an `n`-point axis.
pub fn wavenumber(k: usize, n: usize) -> f64 {
    if 2 * k <= n {
        k as f64
    } else {
        k as f64 - n as f64
    }
}
