//! Printable scaffold surface from a per-element density design.
//!
//! Each element density is converted to the shell thickness `α` of the unit
//! cell, and the solid is `{|f(x · cells_per_mm)| <= α(x)}` clipped to the
//! defect cylinder.

use thiserror::Error;

use crate::geometry::{GeometryError, LevelSet, SurfaceKind};
use crate::macroscale::{MacroDomain, MacroError, ScaffoldDesign, DENSITY_BOUNDS};
use crate::mesh::{marching_tetrahedra, ScalarGrid, TriangleMesh};

#[derive(Debug, Error)]
pub enum ReconstructError {
    #[error(transparent)]
    Design(#[from] MacroError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid reconstruction settings: {0}")]
    Settings(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructSettings {
    pub kind: SurfaceKind,
    /// Unit cells per mm.
    pub cells_per_mm: f64,
    /// Sampling points per mm.
    pub resolution: f64,
    /// Voxels per cell edge for the density-to-thickness inversion.
    pub level_resolution: usize,
    /// Cylinder radius in mm.
    pub radius: f64,
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub mesh: TriangleMesh,
    pub watertight: bool,
    /// Enclosed solid volume in mm³.
    pub volume: f64,
    /// Volume of the clipped defect cylinder in mm³.
    pub envelope_volume: f64,
}

/// Shell thickness of every grid cell in the axial range of the defect;
/// cells outside the defect mask take the value of the nearest defect
/// element.
struct ThicknessField {
    lines: [Vec<f64>; 3],
    first: usize,
    dims: [usize; 3],
    alpha: Vec<f64>,
}

impl ThicknessField {
    fn new(domain: &MacroDomain, element_alpha: &[f64]) -> Self {
        let defect = &domain.defect;
        let cells: Vec<[usize; 3]> = defect.elements.iter().map(|&e| domain.elements[e].cell).collect();
        let first = cells.iter().map(|c| c[0]).min().unwrap_or(0);
        let last = cells.iter().map(|c| c[0]).max().unwrap_or(0);
        let [_, ny, nz] = domain.dims();
        let dims = [last + 1 - first, ny, nz];
        let mut alpha = vec![f64::NAN; dims.iter().product()];
        let index = |c: [usize; 3]| (c[0] - first) + dims[0] * (c[1] + dims[1] * c[2]);
        for (c, &a) in cells.iter().zip(element_alpha) {
            alpha[index(*c)] = a;
        }
        let centers: Vec<[f64; 3]> = defect.elements.iter().map(|&e| domain.element_center(e)).collect();
        let center = |c: [usize; 3]| [0, 1, 2].map(|a| 0.5 * (domain.lines[a][c[a]] + domain.lines[a][c[a] + 1]));
        for k in 0..nz {
            for j in 0..ny {
                for i in first..=last {
                    let slot = index([i, j, k]);
                    if !alpha[slot].is_nan() {
                        continue;
                    }
                    let p = center([i, j, k]);
                    let nearest = centers
                        .iter()
                        .map(|q| (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2))
                        .enumerate()
                        .min_by(|a, b| a.1.total_cmp(&b.1))
                        .map(|(e, _)| e)
                        .expect("defect has elements");
                    alpha[slot] = element_alpha[nearest];
                }
            }
        }
        Self { lines: domain.lines.clone(), first, dims, alpha }
    }

    fn at(&self, p: [f64; 3]) -> f64 {
        let cell = |axis: usize, lo: usize, count: usize| {
            let line = &self.lines[axis];
            let i = line.partition_point(|&v| v <= p[axis]).saturating_sub(1);
            i.clamp(lo, lo + count - 1) - lo
        };
        let (i, j, k) = (cell(0, self.first, self.dims[0]), cell(1, 0, self.dims[1]), cell(2, 0, self.dims[2]));
        self.alpha[i + self.dims[0] * (j + self.dims[1] * k)]
    }
}

pub fn reconstruct(
    domain: &MacroDomain,
    design: &ScaffoldDesign,
    settings: &ReconstructSettings,
) -> Result<Reconstruction, ReconstructError> {
    if !(settings.cells_per_mm > 0.0 && settings.resolution > 0.0 && settings.radius > 0.0 && settings.level_resolution > 0) {
        return Err(ReconstructError::Settings(format!("{settings:?}")));
    }
    let defect = &domain.defect;
    design.validate(defect.elements.len(), DENSITY_BOUNDS)?;
    if defect.elements.is_empty() {
        return Err(ReconstructError::Settings("domain has no defect elements".into()));
    }

    let level = LevelSet::new(settings.kind, settings.level_resolution);
    let element_alpha = design
        .density
        .iter()
        .map(|&rho| level.thickness_from_volumes(rho, 0.0).map(|t| t.alpha))
        .collect::<Result<Vec<_>, _>>()?;
    let thickness = ThicknessField::new(domain, &element_alpha);

    let xs: Vec<f64> = defect.elements.iter().flat_map(|&e| {
        let c = domain.elements[e].cell[0];
        [domain.lines[0][c], domain.lines[0][c + 1]]
    }).collect();
    let x0 = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let x1 = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let radius = settings.radius;
    let h = 1.0 / settings.resolution;
    let pad = 2.0 * h;
    let origin = [x0 - pad, -radius - pad, -radius - pad];
    let span = [x1 - x0 + 2.0 * pad, 2.0 * (radius + pad), 2.0 * (radius + pad)];
    let dims = span.map(|s| (s / h).ceil() as usize + 1);
    let scale = settings.cells_per_mm;
    let kind = settings.kind;
    let grid = ScalarGrid::sample(origin, [h; 3], dims, |p| {
        let shell = thickness.at(p) - kind.implicit_value(p.map(|x| x * scale)).abs();
        let radial = radius - p[1].hypot(p[2]);
        shell.min(radial).min(p[0] - x0).min(x1 - p[0])
    });
    let mesh = marching_tetrahedra(&grid);
    if mesh.is_empty() {
        log::warn!("reconstructed surface is empty");
    }
    Ok(Reconstruction {
        watertight: mesh.is_watertight(),
        volume: mesh.enclosed_volume(),
        envelope_volume: std::f64::consts::PI * radius * radius * (x1 - x0),
        mesh,
    })
}
