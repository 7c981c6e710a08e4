//! Trilinear box elements with 2×2×2 Gauss quadrature.
//!
//! Element matrices are linear in the material coefficients, so they are
//! precomputed once per element size as a basis: `K_e = Σ_IJ C_IJ K^IJ` for
//! elasticity and `K_e = Σ_ij D_ij K^ij` for diffusion.

/// Local node offsets `(di, dj, dk)`.
pub const NODE_OFFSETS: [[usize; 3]; 8] =
    [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0], [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]];

const ELASTIC_DOFS: usize = 24;

/// Basis matrices for a box of size `(hx, hy, hz)`.
#[derive(Debug, Clone)]
pub struct HexBasis {
    pub size: [f64; 3],
    pub volume: f64,
    /// `elastic[I * 6 + J]`, each 24×24 row-major.
    pub elastic: Vec<[f64; ELASTIC_DOFS * ELASTIC_DOFS]>,
    /// `diffusion[i * 3 + j]`, each 8×8 row-major.
    pub diffusion: Vec<[f64; 64]>,
    /// Strain-displacement matrix at the centroid, 6×24 row-major.
    pub centroid_b: [f64; 6 * ELASTIC_DOFS],
}

fn shape_gradients(size: [f64; 3], xi: [f64; 3]) -> [[f64; 3]; 8] {
    let mut g = [[0.0; 3]; 8];
    for (a, off) in NODE_OFFSETS.iter().enumerate() {
        let s = off.map(|o| if o == 0 { -1.0 } else { 1.0 });
        let f = [0, 1, 2].map(|d| 0.5 * (1.0 + s[d] * xi[d]));
        for d in 0..3 {
            let mut v = 0.5 * s[d] * 2.0 / size[d];
            for e in 0..3 {
                if e != d {
                    v *= f[e];
                }
            }
            g[a][d] = v;
        }
    }
    g
}

/// Engineering-Voigt strain-displacement matrix (6×24).
fn b_matrix(grad: &[[f64; 3]; 8]) -> [[f64; ELASTIC_DOFS]; 6] {
    let mut b = [[0.0; ELASTIC_DOFS]; 6];
    for (a, g) in grad.iter().enumerate() {
        let c = 3 * a;
        b[0][c] = g[0];
        b[1][c + 1] = g[1];
        b[2][c + 2] = g[2];
        b[3][c + 1] = g[2];
        b[3][c + 2] = g[1];
        b[4][c] = g[2];
        b[4][c + 2] = g[0];
        b[5][c] = g[1];
        b[5][c + 1] = g[0];
    }
    b
}

impl HexBasis {
    pub fn new(size: [f64; 3]) -> Self {
        let volume = size[0] * size[1] * size[2];
        let gp = 1.0 / 3f64.sqrt();
        let weight = volume / 8.0;
        let mut elastic = vec![[0.0; ELASTIC_DOFS * ELASTIC_DOFS]; 36];
        let mut diffusion = vec![[0.0; 64]; 9];
        for &x in &[-gp, gp] {
            for &y in &[-gp, gp] {
                for &z in &[-gp, gp] {
                    let grad = shape_gradients(size, [x, y, z]);
                    let b = b_matrix(&grad);
                    for i in 0..6 {
                        for j in 0..6 {
                            let k = &mut elastic[i * 6 + j];
                            for r in 0..ELASTIC_DOFS {
                                if b[i][r] == 0.0 {
                                    continue;
                                }
                                for c in 0..ELASTIC_DOFS {
                                    k[r * ELASTIC_DOFS + c] += weight * b[i][r] * b[j][c];
                                }
                            }
                        }
                    }
                    for i in 0..3 {
                        for j in 0..3 {
                            let k = &mut diffusion[i * 3 + j];
                            for r in 0..8 {
                                for c in 0..8 {
                                    k[r * 8 + c] += weight * grad[r][i] * grad[c][j];
                                }
                            }
                        }
                    }
                }
            }
        }
        let b0 = b_matrix(&shape_gradients(size, [0.0; 3]));
        let mut centroid_b = [0.0; 6 * ELASTIC_DOFS];
        for i in 0..6 {
            centroid_b[i * ELASTIC_DOFS..(i + 1) * ELASTIC_DOFS].copy_from_slice(&b0[i]);
        }
        Self { size, volume, elastic, diffusion, centroid_b }
    }

    /// `Σ_IJ C_IJ K^IJ` (24×24 row-major).
    pub fn elastic_matrix(&self, c: &nalgebra::Matrix6<f64>) -> [f64; ELASTIC_DOFS * ELASTIC_DOFS] {
        let mut out = [0.0; ELASTIC_DOFS * ELASTIC_DOFS];
        for i in 0..6 {
            for j in 0..6 {
                let cij = c[(i, j)];
                if cij == 0.0 {
                    continue;
                }
                for (o, k) in out.iter_mut().zip(self.elastic[i * 6 + j].iter()) {
                    *o += cij * k;
                }
            }
        }
        out
    }

    /// `Σ_ij D_ij K^ij` (8×8 row-major).
    pub fn diffusion_matrix(&self, d: &nalgebra::Matrix3<f64>) -> [f64; 64] {
        let mut out = [0.0; 64];
        for i in 0..3 {
            for j in 0..3 {
                let dij = d[(i, j)];
                if dij == 0.0 {
                    continue;
                }
                for (o, k) in out.iter_mut().zip(self.diffusion[i * 3 + j].iter()) {
                    *o += dij * k;
                }
            }
        }
        out
    }

    /// Centroid engineering strain of element displacements `ue`.
    pub fn centroid_strain(&self, ue: &[f64; ELASTIC_DOFS]) -> [f64; 6] {
        std::array::from_fn(|i| {
            self.centroid_b[i * ELASTIC_DOFS..(i + 1) * ELASTIC_DOFS].iter().zip(ue).map(|(b, u)| b * u).sum()
        })
    }

    /// `ue^T K^IJ ve` for all `(I, J)`.
    pub fn elastic_bilinear(&self, ue: &[f64; ELASTIC_DOFS], ve: &[f64; ELASTIC_DOFS]) -> [[f64; 6]; 6] {
        let mut out = [[0.0; 6]; 6];
        for (ij, k) in self.elastic.iter().enumerate() {
            let mut s = 0.0;
            for r in 0..ELASTIC_DOFS {
                if ue[r] == 0.0 {
                    continue;
                }
                let row = &k[r * ELASTIC_DOFS..(r + 1) * ELASTIC_DOFS];
                s += ue[r] * row.iter().zip(ve).map(|(a, b)| a * b).sum::<f64>();
            }
            out[ij / 6][ij % 6] = s;
        }
        out
    }

    /// `ue^T K^ij ve` for the diffusion basis.
    pub fn diffusion_bilinear(&self, ue: &[f64; 8], ve: &[f64; 8]) -> [[f64; 3]; 3] {
        let mut out = [[0.0; 3]; 3];
        for (ij, k) in self.diffusion.iter().enumerate() {
            let mut s = 0.0;
            for r in 0..8 {
                for c in 0..8 {
                    s += ue[r] * k[r * 8 + c] * ve[c];
                }
            }
            out[ij / 3][ij % 3] = s;
        }
        out
    }
}
