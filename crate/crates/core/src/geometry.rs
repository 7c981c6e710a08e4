//! Implicit microcell surfaces, thickness parameters and voxelization.
//!
//! A microcell `Y = [0,1]^3` is split by an implicit function `f` into the
//! scaffold shell `|f| <= α`, the bone coating `α < |f| <= β`, and void.
//! Volume fractions are measured by midpoint voxel counting and inverted by
//! bisection.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par;
use crate::tensor::IsotropicMaterial;

/// Relative stiffness of void voxels with respect to the scaffold material.
pub const DEFAULT_VOID_CONTRAST: f64 = 1e-3;
/// Relative migration coefficient inside scaffold and bone voxels.
pub const DEFAULT_SOLID_DIFFUSION_CONTRAST: f64 = 1e-3;
/// Iteration cap for the thickness bisection.
pub const BISECTION_ITERATIONS: usize = 60;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("volume fraction {name} = {value} outside [0, 1]")]
    FractionOutOfRange { name: &'static str, value: f64 },
    #[error("over-full cell: scaffold {rho} + bone {c_ost} exceeds the unit cell")]
    OverfullCell { rho: f64, c_ost: f64 },
    #[error("thickness pair requires 0 <= alpha <= beta, got alpha = {alpha}, beta = {beta}")]
    InvalidThickness { alpha: f64, beta: f64 },
    #[error("bisection reached fraction {reached} for target {target} (tolerance {tolerance})")]
    Unreachable { target: f64, reached: f64, tolerance: f64 },
}

/// Implicit surface family of the unit cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurfaceKind {
    Gyroid,
    Strut,
}

impl SurfaceKind {
    /// Implicit function `f(x, y, z)` on the unit cell.
    pub fn implicit_value(self, p: [f64; 3]) -> f64 {
        let [x, y, z] = p;
        match self {
            SurfaceKind::Gyroid => {
                let (sx, cx) = (2.0 * PI * x).sin_cos();
                let (sy, cy) = (2.0 * PI * y).sin_cos();
                let (sz, cz) = (2.0 * PI * z).sin_cos();
                cx * sy + cy * sz + cz * sx
            }
            SurfaceKind::Strut => {
                let (dx, dy, dz) = ((x - 0.5).powi(2), (y - 0.5).powi(2), (z - 0.5).powi(2));
                (dx + dy).min(dx + dz).min(dy + dz)
            }
        }
    }

    /// Supremum of `|f|` over the cell; `α` at this value fills the cell.
    pub fn max_abs(self) -> f64 {
        match self {
            SurfaceKind::Gyroid => 1.5,
            SurfaceKind::Strut => 0.5,
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            SurfaceKind::Gyroid => 0,
            SurfaceKind::Strut => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(SurfaceKind::Gyroid),
            1 => Some(SurfaceKind::Strut),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SurfaceKind::Gyroid => "gyroid",
            SurfaceKind::Strut => "strut",
        }
    }
}

/// Dimensionless shell (`alpha`) and coating (`beta`) thicknesses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThicknessPair {
    pub alpha: f64,
    pub beta: f64,
}

impl ThicknessPair {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, GeometryError> {
        if !(alpha >= 0.0 && beta >= alpha) {
            return Err(GeometryError::InvalidThickness { alpha, beta });
        }
        Ok(Self { alpha, beta })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Void,
    Scaffold,
    Bone,
}

/// Periodic voxel grid index helpers for an `n^3` cell (x slowest).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid3 {
    pub n: usize,
}

impl Grid3 {
    pub fn len(self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn index(self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    #[inline]
    pub fn coords(self, idx: usize) -> [usize; 3] {
        let n = self.n;
        [idx / (n * n), (idx / n) % n, idx % n]
    }

    /// Neighbour index shifted by `+1` (`forward`) or `-1` along `axis`.
    #[inline]
    pub fn shift(self, idx: usize, axis: usize, forward: bool) -> usize {
        let n = self.n;
        let stride = [n * n, n, 1][axis];
        let c = self.coords(idx)[axis];
        if forward {
            if c + 1 == n {
                idx + stride - n * stride
            } else {
                idx + stride
            }
        } else if c == 0 {
            idx + n * stride - stride
        } else {
            idx - stride
        }
    }

    /// Voxel center in unit-cell coordinates.
    pub fn center(self, idx: usize) -> [f64; 3] {
        let h = 1.0 / self.n as f64;
        let [i, j, k] = self.coords(idx);
        [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h, (k as f64 + 0.5) * h]
    }
}

/// `|f|` sampled at voxel centers, sorted once so that volume fractions
/// reduce to binary searches.
#[derive(Debug, Clone)]
pub struct LevelSet {
    kind: SurfaceKind,
    grid: Grid3,
    values: Vec<f64>,
    sorted: Vec<f64>,
}

impl LevelSet {
    pub fn new(kind: SurfaceKind, n: usize) -> Self {
        debug_assert!(n > 0);
        let grid = Grid3 { n };
        let values = par::map_range(grid.len(), |idx| kind.implicit_value(grid.center(idx)).abs());
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        Self { kind, grid, values, sorted }
    }

    pub fn kind(&self) -> SurfaceKind {
        self.kind
    }

    pub fn resolution(&self) -> usize {
        self.grid.n
    }

    fn count_le(&self, level: f64) -> usize {
        self.sorted.partition_point(|&v| v <= level)
    }

    /// Fraction of voxels with `|f| <= alpha`.
    pub fn scaffold_fraction(&self, alpha: f64) -> f64 {
        self.count_le(alpha) as f64 / self.sorted.len() as f64
    }

    /// Fraction of voxels with `alpha < |f| <= beta`.
    pub fn bone_fraction(&self, alpha: f64, beta: f64) -> f64 {
        let hi = self.count_le(beta);
        let lo = self.count_le(alpha);
        hi.saturating_sub(lo) as f64 / self.sorted.len() as f64
    }

    pub fn fractions(&self, pair: ThicknessPair) -> (f64, f64) {
        (self.scaffold_fraction(pair.alpha), self.bone_fraction(pair.alpha, pair.beta))
    }

    /// Inverts the volume maps: first `alpha` from `rho`, then `beta` from
    /// `c_ost` at that `alpha`.
    pub fn thickness_from_volumes(&self, rho: f64, c_ost: f64) -> Result<ThicknessPair, GeometryError> {
        check_fraction("rho", rho)?;
        check_fraction("c_ost", c_ost)?;
        if rho + c_ost > 1.0 + 1e-9 {
            return Err(GeometryError::OverfullCell { rho, c_ost });
        }
        let tol = 1.0 / self.grid.n as f64;
        let top = self.kind.max_abs();

        let alpha = if rho <= 0.0 {
            0.0
        } else if rho >= 1.0 {
            top
        } else {
            bisect(0.0, top, rho, tol, |a| self.scaffold_fraction(a))?
        };
        let beta = if c_ost <= 0.0 {
            alpha
        } else if rho + c_ost >= 1.0 {
            top
        } else {
            bisect(alpha, top, c_ost, tol, |b| self.bone_fraction(alpha, b))?
        };
        Ok(ThicknessPair { alpha, beta })
    }

    /// Phase labels for a thickness pair.
    pub fn voxelize(&self, pair: ThicknessPair) -> VoxelCell {
        let phases = self
            .values
            .iter()
            .map(|&v| {
                if v <= pair.alpha {
                    Phase::Scaffold
                } else if v <= pair.beta {
                    Phase::Bone
                } else {
                    Phase::Void
                }
            })
            .collect();
        VoxelCell { n: self.grid.n, phases }
    }
}

fn check_fraction(name: &'static str, value: f64) -> Result<(), GeometryError> {
    if !(0.0..=1.0).contains(&value) {
        return Err(GeometryError::FractionOutOfRange { name, value });
    }
    Ok(())
}

/// Bisection on a nondecreasing step function; returns whichever bracket end
/// lands closest to `target`.
fn bisect(
    mut lo: f64,
    mut hi: f64,
    target: f64,
    tolerance: f64,
    fraction: impl Fn(f64) -> f64,
) -> Result<f64, GeometryError> {
    for _ in 0..BISECTION_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        if fraction(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (f_lo, f_hi) = (fraction(lo), fraction(hi));
    let (best, reached) =
        if (f_lo - target).abs() <= (f_hi - target).abs() { (lo, f_lo) } else { (hi, f_hi) };
    if (reached - target).abs() > tolerance {
        return Err(GeometryError::Unreachable { target, reached, tolerance });
    }
    Ok(best)
}

/// Scaffold and bone fractions of the voxelized cell `(kind, pair)`.
pub fn volume_fraction(kind: SurfaceKind, pair: ThicknessPair, n: usize) -> (f64, f64) {
    LevelSet::new(kind, n).fractions(pair)
}

pub fn thickness_from_volumes(
    kind: SurfaceKind,
    rho: f64,
    c_ost: f64,
    n: usize,
) -> Result<ThicknessPair, GeometryError> {
    LevelSet::new(kind, n).thickness_from_volumes(rho, c_ost)
}

/// Periodic `n^3` phase labelling of the unit cell.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelCell {
    pub n: usize,
    pub phases: Vec<Phase>,
}

impl VoxelCell {
    pub fn uniform(n: usize, phase: Phase) -> Self {
        Self { n, phases: vec![phase; n * n * n] }
    }

    /// Builds a cell from a per-voxel labelling function of `(i, j, k)`.
    pub fn from_fn(n: usize, f: impl Fn(usize, usize, usize) -> Phase) -> Self {
        let grid = Grid3 { n };
        let phases = (0..grid.len())
            .map(|idx| {
                let [i, j, k] = grid.coords(idx);
                f(i, j, k)
            })
            .collect();
        Self { n, phases }
    }

    pub fn grid(&self) -> Grid3 {
        Grid3 { n: self.n }
    }

    pub fn fraction(&self, phase: Phase) -> f64 {
        self.phases.iter().filter(|&&p| p == phase).count() as f64 / self.phases.len() as f64
    }
}

/// Per-voxel isotropic stiffness `(λ, μ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StiffnessField {
    pub n: usize,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
}

impl StiffnessField {
    pub fn uniform(n: usize, material: IsotropicMaterial) -> Self {
        let (l, m) = material.lame();
        let len = n * n * n;
        Self { n, lambda: vec![l; len], mu: vec![m; len] }
    }

    pub fn grid(&self) -> Grid3 {
        Grid3 { n: self.n }
    }

    /// Cell average of the Voigt stiffness (the zero-corrector upper bound).
    pub fn voigt_average(&self) -> nalgebra::Matrix6<f64> {
        let len = self.lambda.len() as f64;
        let l = self.lambda.iter().sum::<f64>() / len;
        let m = self.mu.iter().sum::<f64>() / len;
        crate::tensor::isotropic_voigt(l, m)
    }
}

/// Scaffold voxels get the scaffold tensor, bone voxels the bone tensor and
/// void voxels `void_contrast` times the scaffold tensor.
pub fn micro_stiffness(
    cell: &VoxelCell,
    scaffold: IsotropicMaterial,
    bone: IsotropicMaterial,
    void_contrast: f64,
) -> StiffnessField {
    let (ls, ms) = scaffold.lame();
    let (lb, mb) = bone.lame();
    let (lambda, mu) = cell
        .phases
        .iter()
        .map(|p| match p {
            Phase::Scaffold => (ls, ms),
            Phase::Bone => (lb, mb),
            Phase::Void => (void_contrast * ls, void_contrast * ms),
        })
        .unzip();
    StiffnessField { n: cell.n, lambda, mu }
}

/// Per-voxel scalar conductivity.
#[derive(Debug, Clone, PartialEq)]
pub struct ConductivityField {
    pub n: usize,
    pub values: Vec<f64>,
}

impl ConductivityField {
    pub fn grid(&self) -> Grid3 {
        Grid3 { n: self.n }
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Cells migrate through the pores: void voxels carry `k_mig`, scaffold and
/// bone voxels `solid_contrast * k_mig`.
pub fn micro_diffusivity(cell: &VoxelCell, k_mig: f64, solid_contrast: f64) -> ConductivityField {
    let values = cell
        .phases
        .iter()
        .map(|p| match p {
            Phase::Void => k_mig,
            Phase::Scaffold | Phase::Bone => solid_contrast * k_mig,
        })
        .collect();
    ConductivityField { n: cell.n, values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gyroid_vanishes_at_origin_and_quarter_point() {
        assert_eq!(SurfaceKind::Gyroid.implicit_value([0.0, 0.0, 0.0]), 0.0);
        assert!(SurfaceKind::Gyroid.implicit_value([0.25, 0.25, 0.25]).abs() < 1e-15);
    }

    #[test]
    fn strut_vanishes_on_axis() {
        for z in [0.0, 0.1, 0.37, 0.9, 1.0] {
            assert_eq!(SurfaceKind::Strut.implicit_value([0.5, 0.5, z]), 0.0);
        }
    }

    #[test]
    fn max_abs_bounds_sampled_values() {
        for kind in [SurfaceKind::Gyroid, SurfaceKind::Strut] {
            let ls = LevelSet::new(kind, 32);
            let top = *ls.sorted.last().unwrap();
            assert!(top <= kind.max_abs());
            assert!(top > 0.9 * kind.max_abs());
        }
    }

    #[test]
    fn zero_thickness_gives_empty_cell() {
        for kind in [SurfaceKind::Gyroid, SurfaceKind::Strut] {
            for n in [16, 17, 32] {
                let (s, b) = volume_fraction(kind, ThicknessPair::new(0.0, 0.0).unwrap(), n);
                assert!(s < 1.0 / n as f64, "{kind:?} n={n}: {s}");
                assert_eq!(b, 0.0);
            }
        }
    }

    #[test]
    fn full_thickness_fills_cell() {
        let top = SurfaceKind::Strut.max_abs();
        let pair = ThicknessPair::new(top, top).unwrap();
        assert_eq!(volume_fraction(SurfaceKind::Strut, pair, 16), (1.0, 0.0));
    }

    #[test]
    fn thickness_limits() {
        let ls = LevelSet::new(SurfaceKind::Gyroid, 32);
        assert_eq!(ls.thickness_from_volumes(0.0, 0.0).unwrap(), ThicknessPair { alpha: 0.0, beta: 0.0 });
        let full = ls.thickness_from_volumes(1.0, 0.0).unwrap();
        assert_eq!(full.alpha, 1.5);
        assert_eq!(full.beta, 1.5);
    }

    #[test]
    fn overfull_and_out_of_range_rejected() {
        let ls = LevelSet::new(SurfaceKind::Gyroid, 16);
        assert!(matches!(ls.thickness_from_volumes(0.6, 0.5), Err(GeometryError::OverfullCell { .. })));
        assert!(matches!(ls.thickness_from_volumes(-0.1, 0.0), Err(GeometryError::FractionOutOfRange { .. })));
        assert!(ThicknessPair::new(0.3, 0.2).is_err());
    }

    /// Brute-force count straight from the implicit function, independent of
    /// the sorted level set.
    fn brute_fractions(kind: SurfaceKind, pair: ThicknessPair, n: usize) -> (f64, f64) {
        let h = 1.0 / n as f64;
        let (mut s, mut b) = (0usize, 0usize);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let p = [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h, (k as f64 + 0.5) * h];
                    let v = kind.implicit_value(p).abs();
                    if v <= pair.alpha {
                        s += 1;
                    } else if v <= pair.beta {
                        b += 1;
                    }
                }
            }
        }
        let total = (n * n * n) as f64;
        (s as f64 / total, b as f64 / total)
    }

    #[test]
    fn reference_cell_at_79_percent_porosity() {
        // alpha for 21 % scaffold: resolved at n = 64 and cross-checked at 128
        let pair64 = thickness_from_volumes(SurfaceKind::Gyroid, 0.21, 0.0, 64).unwrap();
        let (s64, _) = brute_fractions(SurfaceKind::Gyroid, pair64, 64);
        let (s128, _) = brute_fractions(SurfaceKind::Gyroid, pair64, 128);
        assert!((s64 - 0.21).abs() < 1.0 / 64.0);
        assert!((s64 - s128).abs() < 0.01, "n=64 {s64} vs n=128 {s128}");
    }

    #[test]
    fn round_trip_with_bone() {
        let n = 64;
        let ls = LevelSet::new(SurfaceKind::Gyroid, n);
        let pair = ls.thickness_from_volumes(0.21, 0.1).unwrap();
        let (s, b) = brute_fractions(SurfaceKind::Gyroid, pair, n);
        assert!((s - 0.21).abs() < 1.0 / n as f64);
        assert!((b - 0.1).abs() < 1.0 / n as f64);
    }

    #[test]
    fn material_assignment() {
        let cell = VoxelCell::from_fn(4, |i, _, _| if i < 2 { Phase::Scaffold } else { Phase::Bone });
        let f = micro_stiffness(&cell, IsotropicMaterial::PCL, IsotropicMaterial::BONE, 1e-3);
        assert_eq!(f.lambda[0], IsotropicMaterial::PCL.lame().0);
        assert_eq!(f.mu[cell.grid().index(3, 0, 0)], IsotropicMaterial::BONE.lame().1);

        let empty = VoxelCell::uniform(4, Phase::Void);
        let f = micro_stiffness(&empty, IsotropicMaterial::PCL, IsotropicMaterial::BONE, 1e-3);
        assert!(f.mu.iter().all(|&m| m == 1e-3 * IsotropicMaterial::PCL.lame().1));

        let d = micro_diffusivity(&empty, 6e-4, 1e-3);
        assert!(d.values.iter().all(|&v| v == 6e-4));
        let full = VoxelCell::uniform(4, Phase::Scaffold);
        let d = micro_diffusivity(&full, 6e-4, 1e-3);
        assert!(d.values.iter().all(|&v| (v - 6e-7).abs() < 1e-20));
        let half = micro_diffusivity(&cell, 6e-4, 1e-3);
        assert!(half.values.iter().zip(&cell.phases).all(|(&v, p)| (v == 6e-4) == (*p == Phase::Void)));
    }

    #[test]
    fn grid_shift_wraps() {
        let g = Grid3 { n: 4 };
        let idx = g.index(3, 0, 2);
        assert_eq!(g.shift(idx, 0, true), g.index(0, 0, 2));
        assert_eq!(g.shift(idx, 1, false), g.index(3, 3, 2));
        assert_eq!(g.shift(idx, 2, true), g.index(3, 0, 3));
    }

    proptest! {
        #[test]
        fn gyroid_is_periodic(x in 0.0f64..1.0, y in 0.0f64..1.0, z in 0.0f64..1.0, axis in 0usize..3) {
            let mut q = [x, y, z];
            q[axis] += 1.0;
            let a = SurfaceKind::Gyroid.implicit_value([x, y, z]);
            let b = SurfaceKind::Gyroid.implicit_value(q);
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn strut_is_permutation_symmetric(x in 0.0f64..1.0, y in 0.0f64..1.0, z in 0.0f64..1.0) {
            let f = |p| SurfaceKind::Strut.implicit_value(p);
            let v = f([x, y, z]);
            for p in [[y, x, z], [z, y, x], [x, z, y], [y, z, x], [z, x, y]] {
                prop_assert!((f(p) - v).abs() < 1e-15);
            }
        }

        #[test]
        fn fractions_monotone(a1 in 0.0f64..1.5, a2 in 0.0f64..1.5, b in 0.0f64..1.5) {
            let ls = LevelSet::new(SurfaceKind::Gyroid, 16);
            let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
            prop_assert!(ls.scaffold_fraction(lo) <= ls.scaffold_fraction(hi));
            let beta_lo = lo.max(b.min(hi));
            prop_assert!(ls.bone_fraction(lo, beta_lo) <= ls.bone_fraction(lo, hi.max(beta_lo)));
        }

        #[test]
        fn phases_partition_the_cell(a in 0.0f64..0.5, extra in 0.0f64..0.3) {
            let ls = LevelSet::new(SurfaceKind::Strut, 16);
            let cell = ls.voxelize(ThicknessPair::new(a, a + extra).unwrap());
            let total = cell.fraction(Phase::Void) + cell.fraction(Phase::Scaffold) + cell.fraction(Phase::Bone);
            prop_assert!((total - 1.0).abs() < 1e-12);
            let (s, b) = ls.fractions(ThicknessPair { alpha: a, beta: a + extra });
            prop_assert_eq!(s, cell.fraction(Phase::Scaffold));
            prop_assert_eq!(b, cell.fraction(Phase::Bone));
        }

        #[test]
        fn thickness_round_trip(rho in 0.0f64..1.0, share in 0.0f64..1.0) {
            let n = 24;
            let ls = LevelSet::new(SurfaceKind::Gyroid, n);
            let c = share * (1.0 - rho);
            let pair = ls.thickness_from_volumes(rho, c).unwrap();
            let (s, b) = ls.fractions(pair);
            prop_assert!((s - rho).abs() < 2.0 / n as f64);
            prop_assert!((b - c).abs() < 2.0 / n as f64);
        }
    }
}
