//! CSV series with a header row.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::IoError;
use crate::macroscale::{MacroModel, ScaffoldDesign, Trajectory};
use crate::optimize::OptimizationHistory;

#[derive(Serialize)]
struct CellRow {
    day: f64,
    c_pro: f64,
    c_fib: f64,
    c_cho: f64,
    c_ost: f64,
    compliance: f64,
}

#[derive(Serialize)]
struct HistoryRow {
    iteration: usize,
    objective: f64,
    compliance_term: f64,
    bone_term: f64,
    gradient_norm: f64,
    step: f64,
    halvings: usize,
}

#[derive(Serialize, Deserialize)]
struct DesignRow {
    element: usize,
    x: f64,
    y: f64,
    z: f64,
    rho: f64,
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path).map_err(IoError::csv(path))?;
    for row in rows {
        w.serialize(row).map_err(IoError::csv(path))?;
    }
    w.flush().map_err(IoError::file(path))
}

/// Defect-averaged cell fractions and compliance per recorded time.
pub fn write_cell_series(path: impl AsRef<Path>, model: &MacroModel, trajectory: &Trajectory) -> Result<(), IoError> {
    let defect = &model.domain.defect;
    let rows = trajectory.states.iter().zip(&trajectory.compliance).zip(trajectory.times()).map(|((s, &c), day)| {
        let [c_pro, c_fib, c_cho, c_ost] = s.average(defect);
        CellRow { day, c_pro, c_fib, c_cho, c_ost, compliance: c }
    });
    write_rows(path.as_ref(), rows)
}

pub fn write_history(path: impl AsRef<Path>, history: &OptimizationHistory) -> Result<(), IoError> {
    let rows = history.records.iter().map(|r| HistoryRow {
        iteration: r.iteration,
        objective: r.objective.total,
        compliance_term: r.objective.compliance,
        bone_term: r.objective.bone,
        gradient_norm: r.gradient_norm,
        step: r.step,
        halvings: r.halvings,
    });
    write_rows(path.as_ref(), rows)
}

/// One row per defect element with its center.
pub fn write_design(path: impl AsRef<Path>, model: &MacroModel, design: &ScaffoldDesign) -> Result<(), IoError> {
    let defect = &model.domain.defect;
    let rows = defect.elements.iter().zip(&design.density).enumerate().map(|(element, (&ge, &rho))| {
        let [x, y, z] = model.domain.element_center(ge);
        DesignRow { element, x, y, z, rho }
    });
    write_rows(path.as_ref(), rows)
}

/// Densities from a design CSV, ordered by element index. Every element in
/// `0..elements` must appear exactly once.
pub fn read_design(path: impl AsRef<Path>, elements: usize) -> Result<Vec<f64>, IoError> {
    let path = path.as_ref();
    let bad = |message: String| IoError::Format { path: path.to_path_buf(), message };
    let mut reader = csv::Reader::from_path(path).map_err(IoError::csv(path))?;
    let mut density: Vec<Option<f64>> = vec![None; elements];
    for row in reader.deserialize() {
        let row: DesignRow = row.map_err(IoError::csv(path))?;
        let slot = density.get_mut(row.element).ok_or_else(|| bad(format!("element {} out of range", row.element)))?;
        if slot.replace(row.rho).is_some() {
            return Err(bad(format!("element {} listed twice", row.element)));
        }
    }
    density
        .iter()
        .enumerate()
        .map(|(e, r)| r.ok_or_else(|| bad(format!("element {e} missing ({elements} expected)"))))
        .collect()
}
