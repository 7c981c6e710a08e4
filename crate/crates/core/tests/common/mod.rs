#![allow(dead_code)]

use scaffold_core::tensor::IsotropicMaterial;
use scaffold_core::macroscale::{LoadCase, MacroDomain, MacroModel, Materials, Region};

/// Marrow, one defect element, a fixator spacer and a loaded cortical
/// element along `x`, one element in cross-section.
pub fn single_element_domain(h: f64) -> MacroDomain {
    let lines = [(0..5).map(|i| i as f64 * h).collect(), vec![0.0, h], vec![0.0, h]];
    let labels = vec![Some(Region::Marrow), Some(Region::Defect), Some(Region::Fixator), Some(Region::Cortical)];
    MacroDomain::from_labels(lines, labels, false).unwrap()
}

/// Element size 0.05 mm with the load scaled to keep the default traction.
/// The marrow element carries the load here, so it is given a stiffness
/// comparable to the scaffold to keep the system well conditioned.
pub fn single_element_model(days: f64) -> MacroModel {
    let h = 0.05;
    let load = LoadCase::default().scaled(h * h);
    let materials = Materials { marrow: IsotropicMaterial::new(300.0, 0.3).unwrap(), ..Materials::default() };
    let mut model = MacroModel::new(single_element_domain(h), materials, load, 1.0, days).unwrap();
    model.solver.elastic_tol = 1e-13;
    model.solver.transport_tol = 1e-13;
    model
}

/// Relative difference with an absolute floor.
pub fn rel_diff(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
