//! Offline tabulation of homogenized coefficients over `(rho, c_ost)`
//! samples, binary persistence, and nearest-neighbour lookup.
//!
//! File layout (all little-endian, fixed width):
//!
//! ```text
//! "SCHOM" | u32 version | u8 surface | u32 n | u32 #rho | u32 #ost
//! f64 rho[..] | f64 ost[..]
//! f64 E_s, nu_s, E_b, nu_b, void_contrast, k_mig, diffusion_contrast, tol | u32 max_iter | u8 scheme
//! per (rho, ost) pair, rho-major: u8 present, then if present
//!     f64 C[36] | f64 D[9] | u32 corrector_n | f32 G[corrector_n^3 * 36]
//!     u32 elastic_iterations | f64 elastic_residual | u32 diffusion_iterations | f64 diffusion_residual
//! u32 crc32 of everything above
//! ```

use std::borrow::Cow;
use std::io;
use std::path::Path;

use nalgebra::{Matrix3, Matrix6};
use thiserror::Error;

use crate::coefficients::{CoefficientSource, CorrectorDifference, DensityAxis, DEFAULT_K_MIG};
use crate::fft_solver::{self, CorrectorField, Scheme, SolveError, SolverOptions};
use crate::geometry::{
    micro_diffusivity, micro_stiffness, GeometryError, LevelSet, SurfaceKind, DEFAULT_SOLID_DIFFUSION_CONTRAST,
    DEFAULT_VOID_CONTRAST,
};
use crate::par;
use crate::tensor::IsotropicMaterial;

pub const MAGIC: &[u8; 5] = b"SCHOM";
pub const FORMAT_VERSION: u32 = 1;

/// Feasibility slack for `rho + c_ost <= 1`.
const FEASIBILITY_EPS: f64 = 1e-9;
/// Distances closer than this count as ties in nearest-neighbour lookup.
const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("not a coefficient table (bad magic)")]
    BadMagic,
    #[error("table format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("table file is truncated")]
    Truncated,
    #[error("table checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("malformed table: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("invalid sample axes: {0}")]
    InvalidAxes(String),
    #[error("table has no records")]
    Empty,
    #[error("no tabulated neighbour of ({rho}, {c_ost}) along {axis:?}")]
    MissingNeighbor { rho: f64, c_ost: f64, axis: DensityAxis },
    #[error("cell solve failed at sample (rho = {rho}, c_ost = {c_ost}): {source}")]
    Solve { rho: f64, c_ost: f64, source: SolveError },
    #[error("geometry failed at sample (rho = {rho}, c_ost = {c_ost}): {source}")]
    Geometry { rho: f64, c_ost: f64, source: GeometryError },
}

/// Materials and contrasts the table was computed with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableMetadata {
    pub scaffold: IsotropicMaterial,
    pub bone: IsotropicMaterial,
    pub void_contrast: f64,
    pub k_mig: f64,
    pub diffusion_contrast: f64,
    pub solver: SolverOptions,
}

impl Default for TableMetadata {
    fn default() -> Self {
        Self {
            scaffold: IsotropicMaterial::PCL,
            bone: IsotropicMaterial::BONE,
            void_contrast: DEFAULT_VOID_CONTRAST,
            k_mig: DEFAULT_K_MIG,
            diffusion_contrast: DEFAULT_SOLID_DIFFUSION_CONTRAST,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordDiagnostics {
    pub elastic_iterations: u32,
    pub elastic_residual: f64,
    pub diffusion_iterations: u32,
    pub diffusion_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellRecord {
    pub rho: f64,
    pub c_ost: f64,
    pub stiffness: Matrix6<f64>,
    pub diffusivity: Matrix3<f64>,
    pub corrector: CorrectorField,
    pub diagnostics: RecordDiagnostics,
}

/// What to tabulate.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulationSpec {
    pub kind: SurfaceKind,
    pub rho_samples: Vec<f64>,
    pub ost_samples: Vec<f64>,
    pub n: usize,
    pub metadata: TableMetadata,
}

impl TabulationSpec {
    pub fn new(kind: SurfaceKind, rho_samples: Vec<f64>, ost_samples: Vec<f64>, n: usize) -> Self {
        Self { kind, rho_samples, ost_samples, n, metadata: TableMetadata::default() }
    }

    /// Checks axes before any cell is solved: strictly increasing values in
    /// `[0, 1]`, and every sample must belong to at least one feasible pair.
    pub fn validate(&self) -> Result<(), TableError> {
        check_axis("rho", &self.rho_samples)?;
        check_axis("c_ost", &self.ost_samples)?;
        if self.n == 0 {
            return Err(TableError::InvalidAxes("resolution must be positive".into()));
        }
        let min_ost = self.ost_samples[0];
        let min_rho = self.rho_samples[0];
        if let Some(&r) = self.rho_samples.iter().find(|&&r| !feasible(r, min_ost)) {
            return Err(TableError::InvalidAxes(format!("rho = {r} has no feasible c_ost sample")));
        }
        if let Some(&c) = self.ost_samples.iter().find(|&&c| !feasible(min_rho, c)) {
            return Err(TableError::InvalidAxes(format!("c_ost = {c} has no feasible rho sample")));
        }
        Ok(())
    }
}

fn feasible(rho: f64, c_ost: f64) -> bool {
    rho + c_ost <= 1.0 + FEASIBILITY_EPS
}

fn check_axis(name: &str, axis: &[f64]) -> Result<(), TableError> {
    if axis.is_empty() {
        return Err(TableError::InvalidAxes(format!("{name} axis is empty")));
    }
    if axis.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(TableError::InvalidAxes(format!("{name} axis leaves [0, 1]")));
    }
    if axis.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(TableError::InvalidAxes(format!("{name} axis is not strictly increasing")));
    }
    Ok(())
}

/// `start, start + step, ...` up to `stop`, with `stop` appended when the
/// progression overshoots it. Values are rounded to 1e-12 to keep the grid
/// reproducible.
pub fn sample_axis(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut i = 0;
    loop {
        let v = ((start + step * i as f64) * 1e12).round() / 1e12;
        if v > stop + 1e-12 {
            break;
        }
        out.push(v);
        i += 1;
    }
    if out.last().is_none_or(|&l| l < stop - 1e-12) {
        out.push(stop);
    }
    out
}

/// `rho ∈ {0.10, 0.15, ..., 0.95, 0.99}`.
pub fn default_rho_axis() -> Vec<f64> {
    sample_axis(0.10, 0.99, 0.05)
}

/// `c_ost ∈ {0, 0.05, ..., 0.9}`.
pub fn default_ost_axis() -> Vec<f64> {
    sample_axis(0.0, 0.9, 0.05)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable {
    pub kind: SurfaceKind,
    pub n: usize,
    pub rho_axis: Vec<f64>,
    pub ost_axis: Vec<f64>,
    pub metadata: TableMetadata,
    /// `records[i * ost_axis.len() + j]`, `None` for infeasible pairs.
    pub records: Vec<Option<CellRecord>>,
}

/// Homogenizes one cell.
pub fn solve_sample(
    levels: &LevelSet,
    rho: f64,
    c_ost: f64,
    meta: &TableMetadata,
) -> Result<CellRecord, TableError> {
    let pair = levels
        .thickness_from_volumes(rho, c_ost)
        .map_err(|source| TableError::Geometry { rho, c_ost, source })?;
    let cell = levels.voxelize(pair);
    let stiff = micro_stiffness(&cell, meta.scaffold, meta.bone, meta.void_contrast);
    let diff = micro_diffusivity(&cell, meta.k_mig, meta.diffusion_contrast);
    let wrap = |source| TableError::Solve { rho, c_ost, source };
    let (stiffness, elastic) = fft_solver::homogenize_elastic(&stiff, &meta.solver).map_err(wrap)?;
    let (diffusivity, diffusion) = fft_solver::homogenize_diffusion(&diff, &meta.solver).map_err(wrap)?;
    let diagnostics = RecordDiagnostics {
        elastic_iterations: elastic.max_iterations() as u32,
        elastic_residual: elastic.max_residual(),
        diffusion_iterations: diffusion.iter().map(|d| d.diagnostics.iterations).max().unwrap_or(0) as u32,
        diffusion_residual: diffusion.iter().map(|d| d.diagnostics.relative_residual).fold(0.0, f64::max),
    };
    Ok(CellRecord {
        rho,
        c_ost,
        stiffness,
        diffusivity,
        corrector: fft_solver::assemble_corrector(&elastic),
        diagnostics,
    })
}

/// Solves every feasible sample; samples run concurrently.
pub fn tabulate(spec: &TabulationSpec) -> Result<CoefficientTable, TableError> {
    spec.validate()?;
    let levels = LevelSet::new(spec.kind, spec.n);
    let m = spec.ost_samples.len();
    let total = spec.rho_samples.len() * m;
    let results = par::map_range(total, |idx| {
        let (rho, c) = (spec.rho_samples[idx / m], spec.ost_samples[idx % m]);
        if !feasible(rho, c) {
            return Ok(None);
        }
        let record = solve_sample(&levels, rho, c, &spec.metadata)?;
        log::info!(
            "sample rho={rho:.3} c_ost={c:.3}: elastic {} it (res {:.1e}), diffusion {} it",
            record.diagnostics.elastic_iterations,
            record.diagnostics.elastic_residual,
            record.diagnostics.diffusion_iterations
        );
        Ok(Some(record))
    });
    let records = results.into_iter().collect::<Result<Vec<_>, TableError>>()?;
    Ok(CoefficientTable {
        kind: spec.kind,
        n: spec.n,
        rho_axis: spec.rho_samples.clone(),
        ost_axis: spec.ost_samples.clone(),
        metadata: spec.metadata,
        records,
    })
}

impl CoefficientTable {
    pub fn len(&self) -> usize {
        self.records.iter().filter(|r| r.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn record(&self, i: usize, j: usize) -> Option<&CellRecord> {
        self.records.get(i * self.ost_axis.len() + j)?.as_ref()
    }

    pub fn iter(&self) -> impl Iterator<Item = &CellRecord> {
        self.records.iter().flatten()
    }

    /// Grid indices of the nearest present sample; ties go to the smaller
    /// `rho`, then the smaller `c_ost`.
    pub fn nearest_index(&self, rho: f64, c_ost: f64) -> Result<(usize, usize), TableError> {
        let m = self.ost_axis.len();
        let mut best: Option<(f64, usize, usize)> = None;
        for (idx, rec) in self.records.iter().enumerate() {
            if rec.is_none() {
                continue;
            }
            let (i, j) = (idx / m, idx % m);
            let d = (self.rho_axis[i] - rho).powi(2) + (self.ost_axis[j] - c_ost).powi(2);
            // samples are visited in increasing (rho, c_ost) order, so ties keep the first
            match best {
                Some((bd, _, _)) if d >= bd - TIE_EPS => {}
                _ => best = Some((d, i, j)),
            }
        }
        best.map(|(_, i, j)| (i, j)).ok_or(TableError::Empty)
    }

    pub fn lookup(&self, rho: f64, c_ost: f64) -> Result<&CellRecord, TableError> {
        let (i, j) = self.nearest_index(rho, c_ost)?;
        Ok(self.record(i, j).expect("nearest index points at a record"))
    }

    /// Neighbours of sample `(i, j)` along `axis` as `(lower, upper)` records,
    /// falling back to the sample itself on one side at the table edge.
    /// `None` when every grid neighbour along `axis` is infeasible or off the
    /// axis, i.e. the feasible set `rho + c_ost <= 1` pins the density there.
    fn neighbours(
        &self,
        i: usize,
        j: usize,
        axis: DensityAxis,
    ) -> Result<Option<(&CellRecord, &CellRecord)>, TableError> {
        let center = self.record(i, j).expect("valid sample");
        let (lo, hi) = match axis {
            DensityAxis::Scaffold => (i.checked_sub(1).map(|k| (k, j)), Some((i + 1, j)).filter(|_| i + 1 < self.rho_axis.len())),
            DensityAxis::Bone => (j.checked_sub(1).map(|k| (i, k)), Some((i, j + 1)).filter(|_| j + 1 < self.ost_axis.len())),
        };
        let get = |p: Option<(usize, usize)>| p.and_then(|(a, b)| self.record(a, b));
        match (get(lo), get(hi)) {
            (Some(l), Some(h)) => Ok(Some((l, h))),
            (Some(l), None) => Ok(Some((l, center))),
            (None, Some(h)) => Ok(Some((center, h))),
            (None, None) if lo.is_some() || hi.is_some() => Ok(None),
            (None, None) => Err(TableError::MissingNeighbor { rho: center.rho, c_ost: center.c_ost, axis }),
        }
    }

    fn axis_step(lo: &CellRecord, hi: &CellRecord, axis: DensityAxis) -> f64 {
        match axis {
            DensityAxis::Scaffold => hi.rho - lo.rho,
            DensityAxis::Bone => hi.c_ost - lo.c_ost,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TableError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TableError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Vec::new();
        w.extend_from_slice(MAGIC);
        put_u32(&mut w, FORMAT_VERSION);
        w.push(self.kind.tag());
        put_u32(&mut w, self.n as u32);
        put_u32(&mut w, self.rho_axis.len() as u32);
        put_u32(&mut w, self.ost_axis.len() as u32);
        self.rho_axis.iter().chain(&self.ost_axis).for_each(|&v| put_f64(&mut w, v));
        let meta = &self.metadata;
        for v in [
            meta.scaffold.youngs_modulus,
            meta.scaffold.poisson_ratio,
            meta.bone.youngs_modulus,
            meta.bone.poisson_ratio,
            meta.void_contrast,
            meta.k_mig,
            meta.diffusion_contrast,
            meta.solver.tol,
        ] {
            put_f64(&mut w, v);
        }
        put_u32(&mut w, meta.solver.max_iter as u32);
        w.push(match meta.solver.scheme {
            Scheme::Basic => 0,
            Scheme::ConjugateGradient => 1,
        });
        for rec in &self.records {
            let Some(rec) = rec else {
                w.push(0);
                continue;
            };
            w.push(1);
            rec.stiffness.iter().for_each(|&v| put_f64(&mut w, v));
            rec.diffusivity.iter().for_each(|&v| put_f64(&mut w, v));
            put_u32(&mut w, rec.corrector.n as u32);
            w.reserve(rec.corrector.data.len() * 4);
            rec.corrector.data.iter().for_each(|v| w.extend_from_slice(&v.to_le_bytes()));
            let d = &rec.diagnostics;
            put_u32(&mut w, d.elastic_iterations);
            put_f64(&mut w, d.elastic_residual);
            put_u32(&mut w, d.diffusion_iterations);
            put_f64(&mut w, d.diffusion_residual);
        }
        let crc = crc32fast::hash(&w);
        put_u32(&mut w, crc);
        w
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TableError> {
        let head = &bytes[..bytes.len().min(MAGIC.len())];
        if head != &MAGIC[..head.len()] {
            return Err(TableError::BadMagic);
        }
        let mut r = Reader { bytes, pos: 0 };
        r.take(MAGIC.len())?;
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(TableError::VersionMismatch { found: version, expected: FORMAT_VERSION });
        }
        let kind = SurfaceKind::from_tag(r.u8()?)
            .ok_or_else(|| TableError::Malformed("unknown surface tag".into()))?;
        let n = r.u32()? as usize;
        let (nr, no) = (r.u32()? as usize, r.u32()? as usize);
        let rho_axis = (0..nr).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        let ost_axis = (0..no).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        let mut f = [0.0; 8];
        for v in &mut f {
            *v = r.f64()?;
        }
        let max_iter = r.u32()? as usize;
        let scheme = match r.u8()? {
            0 => Scheme::Basic,
            1 => Scheme::ConjugateGradient,
            other => return Err(TableError::Malformed(format!("unknown scheme tag {other}"))),
        };
        let metadata = TableMetadata {
            scaffold: IsotropicMaterial { youngs_modulus: f[0], poisson_ratio: f[1] },
            bone: IsotropicMaterial { youngs_modulus: f[2], poisson_ratio: f[3] },
            void_contrast: f[4],
            k_mig: f[5],
            diffusion_contrast: f[6],
            solver: SolverOptions { scheme, tol: f[7], max_iter },
        };
        let mut records = Vec::with_capacity(nr * no);
        for idx in 0..nr * no {
            match r.u8()? {
                0 => records.push(None),
                1 => {
                    let mut stiffness = Matrix6::zeros();
                    for v in stiffness.iter_mut() {
                        *v = r.f64()?;
                    }
                    let mut diffusivity = Matrix3::zeros();
                    for v in diffusivity.iter_mut() {
                        *v = r.f64()?;
                    }
                    let cn = r.u32()? as usize;
                    let count = cn
                        .checked_pow(3)
                        .and_then(|c| c.checked_mul(36))
                        .ok_or_else(|| TableError::Malformed("corrector size overflow".into()))?;
                    let raw = r.take(count.checked_mul(4).ok_or(TableError::Truncated)?)?;
                    let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
                    let diagnostics = RecordDiagnostics {
                        elastic_iterations: r.u32()?,
                        elastic_residual: r.f64()?,
                        diffusion_iterations: r.u32()?,
                        diffusion_residual: r.f64()?,
                    };
                    records.push(Some(CellRecord {
                        rho: rho_axis[idx / no],
                        c_ost: ost_axis[idx % no],
                        stiffness,
                        diffusivity,
                        corrector: CorrectorField { n: cn, data },
                        diagnostics,
                    }));
                }
                other => return Err(TableError::Malformed(format!("bad record flag {other}"))),
            }
        }
        let body_end = r.pos;
        let stored = r.u32()?;
        if r.pos != bytes.len() {
            return Err(TableError::Malformed("trailing bytes after checksum".into()));
        }
        let computed = crc32fast::hash(&bytes[..body_end]);
        if stored != computed {
            return Err(TableError::ChecksumMismatch { stored, computed });
        }
        Ok(Self { kind, n, rho_axis, ost_axis, metadata, records })
    }
}

impl CoefficientSource for CoefficientTable {
    fn stiffness(&self, rho: f64, c_ost: f64) -> Matrix6<f64> {
        self.lookup(rho, c_ost).expect("non-empty table").stiffness
    }

    fn diffusivity(&self, rho: f64, c_ost: f64) -> Matrix3<f64> {
        self.lookup(rho, c_ost).expect("non-empty table").diffusivity
    }

    fn corrector(&self, rho: f64, c_ost: f64) -> Cow<'_, CorrectorField> {
        Cow::Borrowed(&self.lookup(rho, c_ost).expect("non-empty table").corrector)
    }

    fn stiffness_derivative(&self, rho: f64, c_ost: f64, axis: DensityAxis) -> Result<Matrix6<f64>, TableError> {
        let (i, j) = self.nearest_index(rho, c_ost)?;
        Ok(match self.neighbours(i, j, axis)? {
            Some((lo, hi)) => (hi.stiffness - lo.stiffness) / Self::axis_step(lo, hi, axis),
            None => Matrix6::zeros(),
        })
    }

    fn diffusivity_derivative(&self, rho: f64, c_ost: f64, axis: DensityAxis) -> Result<Matrix3<f64>, TableError> {
        let (i, j) = self.nearest_index(rho, c_ost)?;
        Ok(match self.neighbours(i, j, axis)? {
            Some((lo, hi)) => (hi.diffusivity - lo.diffusivity) / Self::axis_step(lo, hi, axis),
            None => Matrix3::zeros(),
        })
    }

    fn corrector_difference(
        &self,
        rho: f64,
        c_ost: f64,
        axis: DensityAxis,
    ) -> Result<Option<CorrectorDifference<'_>>, TableError> {
        let (i, j) = self.nearest_index(rho, c_ost)?;
        let Some((lo, hi)) = self.neighbours(i, j, axis)? else { return Ok(None) };
        Ok(Some(CorrectorDifference {
            center: Cow::Borrowed(&self.record(i, j).expect("valid sample").corrector),
            lower: Cow::Borrowed(&lo.corrector),
            upper: Cow::Borrowed(&hi.corrector),
            step: Self::axis_step(lo, hi, axis),
        }))
    }
}

fn put_u32(w: &mut Vec<u8>, v: u32) {
    w.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(w: &mut Vec<u8>, v: f64) {
    w.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8], TableError> {
        let end = self.pos.checked_add(len).ok_or(TableError::Truncated)?;
        let out = self.bytes.get(self.pos..end).ok_or(TableError::Truncated)?;
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, TableError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, TableError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, TableError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
