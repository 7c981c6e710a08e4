//! Legacy ASCII VTK on the rectilinear macro grid.
//!
//! Point data lives on all grid nodes and cell data on all grid cells;
//! entries outside the active domain (or outside the defect for cell
//! fields) are written as zero.

use std::fmt::Write as _;
use std::path::Path;

use super::IoError;
use crate::macroscale::{CellState, MacroDomain, SPECIES};

/// Fields of one time step. Missing fields are skipped.
#[derive(Debug, Clone, Copy, Default)]
pub struct Snapshot<'a> {
    /// Three components per active node.
    pub displacement: Option<&'a [f64]>,
    /// Cell fractions on the defect nodes.
    pub cells: Option<&'a CellState>,
    /// Occupied scaffold fraction `σ(t) ρ` per defect element.
    pub occupied: Option<&'a [f64]>,
    /// Stimulus per defect element.
    pub stimulus: Option<&'a [f64]>,
    /// Design density per defect element.
    pub density: Option<&'a [f64]>,
}

struct Layout {
    points: [usize; 3],
    cells: [usize; 3],
}

impl Layout {
    fn new(domain: &MacroDomain) -> Self {
        let cells = domain.dims();
        Self { points: cells.map(|n| n + 1), cells }
    }

    fn point(&self, g: [usize; 3]) -> usize {
        g[0] + self.points[0] * (g[1] + self.points[1] * g[2])
    }

    fn cell(&self, g: [usize; 3]) -> usize {
        g[0] + self.cells[0] * (g[1] + self.cells[1] * g[2])
    }

    fn point_count(&self) -> usize {
        self.points.iter().product()
    }

    fn cell_count(&self) -> usize {
        self.cells.iter().product()
    }
}

fn push_scalars(out: &mut String, name: &str, kind: &str, values: &[f64]) {
    let _ = writeln!(out, "SCALARS {name} {kind} 1\nLOOKUP_TABLE default");
    for v in values {
        let _ = writeln!(out, "{v}");
    }
}

pub fn write_vtk(path: impl AsRef<Path>, domain: &MacroDomain, title: &str, snapshot: &Snapshot) -> Result<(), IoError> {
    let path = path.as_ref();
    let layout = Layout::new(domain);
    let defect = &domain.defect;
    let mut out = String::new();
    let title: String = title.chars().filter(|c| *c != '\n').take(255).collect();
    let _ = writeln!(out, "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET RECTILINEAR_GRID");
    let [nx, ny, nz] = layout.points;
    let _ = writeln!(out, "DIMENSIONS {nx} {ny} {nz}");
    for (axis, name) in ["X", "Y", "Z"].iter().enumerate() {
        let _ = writeln!(out, "{name}_COORDINATES {} double", domain.lines[axis].len());
        let line: Vec<String> = domain.lines[axis].iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }

    let mut point_fields: Vec<(String, Vec<f64>)> = Vec::new();
    let mut vectors = None;
    if let Some(u) = snapshot.displacement {
        if u.len() != 3 * domain.node_count() {
            return Err(IoError::Format { path: path.to_path_buf(), message: "displacement length mismatch".into() });
        }
        let mut v = vec![0.0; 3 * layout.point_count()];
        for (node, g) in domain.node_grid.iter().enumerate() {
            let p = layout.point(*g);
            v[3 * p..3 * p + 3].copy_from_slice(&u[3 * node..3 * node + 3]);
        }
        vectors = Some(v);
    }
    if let Some(cells) = snapshot.cells {
        for (i, name) in SPECIES.iter().enumerate() {
            let mut v = vec![0.0; layout.point_count()];
            for (local, &node) in defect.nodes.iter().enumerate() {
                v[layout.point(domain.node_grid[node])] = cells.fields[i][local];
            }
            point_fields.push((name.to_string(), v));
        }
    }
    if vectors.is_some() || !point_fields.is_empty() {
        let _ = writeln!(out, "POINT_DATA {}", layout.point_count());
        if let Some(v) = vectors {
            let _ = writeln!(out, "VECTORS displacement double");
            for p in v.chunks(3) {
                let _ = writeln!(out, "{} {} {}", p[0], p[1], p[2]);
            }
        }
        for (name, v) in &point_fields {
            push_scalars(&mut out, name, "double", v);
        }
    }

    let _ = writeln!(out, "CELL_DATA {}", layout.cell_count());
    let mut region = vec![0.0; layout.cell_count()];
    for el in &domain.elements {
        region[layout.cell(el.cell)] = el.region.code() as f64;
    }
    push_scalars(&mut out, "region", "int", &region);
    for (name, field) in [("occupied", snapshot.occupied), ("stimulus", snapshot.stimulus), ("rho", snapshot.density)] {
        let Some(values) = field else { continue };
        if values.len() != defect.elements.len() {
            return Err(IoError::Format { path: path.to_path_buf(), message: format!("{name} length mismatch") });
        }
        let mut v = vec![0.0; layout.cell_count()];
        for (&ge, &x) in defect.elements.iter().zip(values) {
            v[layout.cell(domain.elements[ge].cell)] = x;
        }
        push_scalars(&mut out, name, "double", &v);
    }
    std::fs::write(path, out).map_err(IoError::file(path))
}

/// Design density as cell data.
pub fn write_design_vtk(path: impl AsRef<Path>, domain: &MacroDomain, density: &[f64]) -> Result<(), IoError> {
    write_vtk(path, domain, "scaffold design", &Snapshot { density: Some(density), ..Default::default() })
}
