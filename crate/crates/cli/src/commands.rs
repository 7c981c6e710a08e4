use std::path::Path;

use scaffold_core::coefficients::CoefficientSource;
use scaffold_core::config::RunConfig;
use scaffold_core::io::{self, Snapshot};
use scaffold_core::macroscale::{MacroDomain, MacroModel, Mode, ScaffoldDesign};
use scaffold_core::optimize::optimize as run_optimizer;
use scaffold_core::reconstruct::{reconstruct as build_surface, ReconstructSettings};
use scaffold_core::table::{tabulate as run_tabulation, CoefficientTable};

use crate::failure::{io_error, Failure};

fn output_dir(cfg: &RunConfig) -> Result<&Path, Failure> {
    let dir = cfg.output_dir.as_path();
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    Ok(dir)
}

fn load_table(cfg: &RunConfig) -> Result<CoefficientTable, Failure> {
    let path = &cfg.table.path;
    let table = CoefficientTable::load(path).map_err(|e| match Failure::from(e) {
        Failure::Io(m) => Failure::Io(format!("{}: {m}", path.display())),
        other => other,
    })?;
    if table.kind != cfg.geometry.kind || table.n != cfg.geometry.cell_resolution {
        log::warn!(
            "{} was built for {} cells at n = {}, configuration asks for {} at n = {}",
            path.display(),
            table.kind.name(),
            table.n,
            cfg.geometry.kind.name(),
            cfg.geometry.cell_resolution
        );
    }
    log::info!("loaded {} samples from {}", table.len(), path.display());
    Ok(table)
}

/// Runs `f` with the coefficient source of the configured mode.
fn with_source<R>(
    cfg: &RunConfig,
    model: &MacroModel,
    f: impl FnOnce(&dyn CoefficientSource) -> Result<R, Failure>,
) -> Result<R, Failure> {
    match cfg.simulation.mode {
        Mode::N => f(&model.law),
        Mode::Ed | Mode::Eds => f(&load_table(cfg)?),
    }
}

pub fn tabulate(cfg: &RunConfig) -> Result<(), Failure> {
    let spec = cfg.tabulation_spec();
    spec.validate()?;
    let table = run_tabulation(&spec)?;
    let path = &cfg.table.path;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    table.save(path)?;
    println!("rho,c_ost,elastic_iterations,elastic_residual,diffusion_iterations,diffusion_residual");
    for r in table.iter() {
        let d = &r.diagnostics;
        println!(
            "{},{},{},{:.3e},{},{:.3e}",
            r.rho, r.c_ost, d.elastic_iterations, d.elastic_residual, d.diffusion_iterations, d.diffusion_residual
        );
    }
    eprintln!("wrote {} converged samples to {}", table.len(), path.display());
    Ok(())
}

pub fn simulate(cfg: &RunConfig) -> Result<(), Failure> {
    let model = cfg.model()?;
    let design = cfg.initial_design(&model);
    let mode = cfg.simulation.mode;
    let trajectory = with_source(cfg, &model, |source| Ok(model.simulate(&design, mode, source)?))?;
    let dir = output_dir(cfg)?;
    io::write_cell_series(dir.join("cells.csv"), &model, &trajectory)?;

    let steps = trajectory.steps();
    let every = cfg.simulation.vtk_every;
    let snapshots = (0..=steps).filter(|&n| n == steps || if every == 0 { n == 0 } else { n % every == 0 });
    for n in snapshots {
        let occupied = model.occupied(&design, n as f64 * model.dt);
        let snapshot = Snapshot {
            displacement: Some(&trajectory.displacements[n]),
            cells: Some(&trajectory.states[n]),
            occupied: Some(&occupied),
            stimulus: Some(&trajectory.stimulus[n]),
            density: Some(&design.density),
        };
        let title = format!("mode {} day {}", mode.name(), n as f64 * model.dt);
        io::write_vtk(dir.join(format!("fields_{n:04}.vtk")), &model.domain, &title, &snapshot)?;
    }

    let [pro, fib, cho, ost] = trajectory.final_state().average(&model.domain.defect);
    println!(
        "mode {}, {} days: c_pro {pro:.4}, c_fib {fib:.4}, c_cho {cho:.4}, c_ost {ost:.4}, compliance {:.6e}",
        mode.name(),
        steps as f64 * model.dt,
        trajectory.compliance[steps]
    );
    Ok(())
}

pub fn optimize(cfg: &RunConfig) -> Result<(), Failure> {
    let model = cfg.model()?;
    let initial = cfg.initial_design(&model);
    let mode = cfg.simulation.mode;
    let (design, history) = with_source(cfg, &model, |source| {
        Ok(run_optimizer(&model, &initial, mode, source, &cfg.objective, &cfg.optimization)?)
    })?;
    let dir = output_dir(cfg)?;
    io::write_history(dir.join("history.csv"), &history)?;
    io::write_design(dir.join("design.csv"), &model, &design)?;
    for (i, d) in history.designs.iter().enumerate() {
        io::write_design_vtk(dir.join(format!("design_{i:03}.vtk")), &model.domain, d)?;
    }
    for r in &history.records {
        println!(
            "iteration {}: objective {:.6e} (compliance {:.6e}, bone {:.6e}), projected gradient {:.3e}, step {:.3e}",
            r.iteration, r.objective.total, r.objective.compliance, r.objective.bone, r.gradient_norm, r.step
        );
    }
    println!("stopped: {:?} after {} accepted steps", history.stop, history.accepted());
    Ok(())
}

pub fn reconstruct(cfg: &RunConfig) -> Result<(), Failure> {
    let domain = MacroDomain::cylinder(&cfg.domain)?;
    let elements = domain.defect.elements.len();
    let density = match &cfg.reconstruct.design {
        Some(path) => io::read_design(path, elements)?,
        None => vec![cfg.simulation.initial_density; elements],
    };
    let design = ScaffoldDesign { density, decay_rate: cfg.simulation.decay_rate };
    let settings = ReconstructSettings {
        kind: cfg.geometry.kind,
        cells_per_mm: cfg.geometry.cells_per_mm,
        resolution: cfg.reconstruct.resolution,
        level_resolution: cfg.geometry.cell_resolution.max(64),
        radius: cfg.domain.radius,
    };
    let out = build_surface(&domain, &design, &settings)?;
    let dir = output_dir(cfg)?;
    let path = dir.join("scaffold.stl");
    io::write_stl(&path, &out.mesh)?;
    println!(
        "{} triangles, watertight: {}, solid volume {:.4} mm^3 ({:.1}% of the defect)",
        out.mesh.triangles.len(),
        out.watertight,
        out.volume,
        100.0 * out.volume / out.envelope_volume
    );
    Ok(())
}
