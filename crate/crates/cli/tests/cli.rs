use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use scaffold_core::config::RunConfig;
use scaffold_core::table::CoefficientTable;

const COARSE: &str = "\
[domain]
defect_elements = 4
bone_elements = 3
cross_elements = [6, 6]
";

struct Run {
    dir: tempfile::TempDir,
}

impl Run {
    fn new(extra: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("run.toml"), format!("output_dir = \"out\"\n{COARSE}{extra}")).unwrap();
        Self { dir }
    }

    fn exec(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_scaffold"))
            .arg("--config")
            .arg(self.dir.path().join("run.toml"))
            .args(args)
            .output()
            .unwrap()
    }

    fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join("out").join(name)
    }
}

fn code(output: &Output) -> i32 {
    output.status.code().unwrap()
}

fn vtk_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".vtk"))
        .collect();
    names.sort();
    names
}

#[test]
fn show_config_prints_loadable_defaults() {
    let output = Command::new(env!("CARGO_BIN_EXE_scaffold")).arg("show-config").output().unwrap();
    assert_eq!(code(&output), 0);
    let cfg = RunConfig::from_toml(&String::from_utf8(output.stdout).unwrap()).unwrap();
    assert_eq!(cfg, RunConfig::default());
}

#[test]
fn config_errors_exit_with_code_two() {
    assert_eq!(code(&Run::new("bogus = 1\n").exec(&["simulate"])), 2);
    assert_eq!(code(&Run::new("[simulation]\ndt = -1.0\n").exec(&["simulate"])), 2);
    let missing = Command::new(env!("CARGO_BIN_EXE_scaffold"))
        .args(["--config", "/nonexistent/run.toml", "simulate"])
        .output()
        .unwrap();
    assert_ne!(code(&missing), 0);
    let usage = Command::new(env!("CARGO_BIN_EXE_scaffold")).args(["simulate", "--mode", "xyz"]).output().unwrap();
    assert_eq!(code(&usage), 2);
}

#[test]
fn infeasible_axes_rejected_before_solving() {
    let run = Run::new("[table]\npath = \"t.schom\"\nrho = [0.5]\nc_ost = [0.7]\n");
    let output = run.exec(&["tabulate"]);
    assert_eq!(code(&output), 2);
    assert!(!run.dir.path().join("t.schom").exists());
}

#[test]
fn single_sample_table_is_loadable() {
    let run = Run::new("[geometry]\ncell_resolution = 8\n[table]\npath = \"t.schom\"\nrho = [0.3]\nc_ost = [0.0]\n");
    let output = run.exec(&["tabulate"]);
    assert_eq!(code(&output), 0, "{}", String::from_utf8_lossy(&output.stderr));
    let table = CoefficientTable::load(run.dir.path().join("t.schom")).unwrap();
    assert_eq!(table.rho_axis, vec![0.3]);
    assert_eq!(table.len(), 1);
}

#[test]
fn missing_table_is_an_io_failure() {
    let run = Run::new("[table]\npath = \"none.schom\"\n[simulation]\ndays = 1\n");
    let output = run.exec(&["simulate", "--mode", "ed"]);
    assert_eq!(code(&output), 4);
    assert!(String::from_utf8_lossy(&output.stderr).contains("none.schom"));
}

#[test]
fn zero_days_give_a_single_snapshot() {
    let run = Run::new("[simulation]\nmode = \"n\"\ndays = 0\n");
    let output = run.exec(&["simulate"]);
    assert_eq!(code(&output), 0, "{}", String::from_utf8_lossy(&output.stderr));
    let text = std::fs::read_to_string(run.out("cells.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert_eq!(vtk_files(&run.dir.path().join("out")), vec!["fields_0000.vtk"]);
}

#[test]
fn simulate_output_is_byte_identical_across_runs() {
    let run = Run::new("[simulation]\nmode = \"n\"\ndays = 3\n");
    assert_eq!(code(&run.exec(&["simulate"])), 0);
    let first = std::fs::read(run.out("cells.csv")).unwrap();
    assert_eq!(code(&run.exec(&["simulate"])), 0);
    assert_eq!(std::fs::read(run.out("cells.csv")).unwrap(), first);
    assert_eq!(std::str::from_utf8(&first).unwrap().lines().count(), 5);
}

#[test]
fn zero_iterations_echo_the_initial_design() {
    let run = Run::new("[simulation]\nmode = \"n\"\ndays = 2\ninitial_density = 0.3\n[optimization]\nmax_iters = 0\n");
    let output = run.exec(&["optimize"]);
    assert_eq!(code(&output), 0, "{}", String::from_utf8_lossy(&output.stderr));
    let mut reader = csv::Reader::from_path(run.out("design.csv")).unwrap();
    let rho: Vec<f64> = reader.records().map(|r| r.unwrap()[4].parse().unwrap()).collect();
    let model = RunConfig::load(run.dir.path().join("run.toml")).unwrap().model().unwrap();
    assert_eq!(rho.len(), model.defect_elements());
    assert!(rho.iter().all(|&r| r == 0.3));
    let history = std::fs::read_to_string(run.out("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 2);
}

#[test]
fn history_logs_both_objective_terms() {
    let run = Run::new("[simulation]\nmode = \"n\"\ndays = 3\n[objective]\ngamma = 1.0\neta = 1.0\n[optimization]\nmax_iters = 1\n");
    let output = run.exec(&["optimize"]);
    assert_eq!(code(&output), 0, "{}", String::from_utf8_lossy(&output.stderr));
    let mut reader = csv::Reader::from_path(run.out("history.csv")).unwrap();
    let headers = reader.headers().unwrap().clone();
    let column = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (total, comp, bone) = (column("objective"), column("compliance_term"), column("bone_term"));
    for record in reader.records() {
        let r = record.unwrap();
        let v = |i: usize| r[i].parse::<f64>().unwrap();
        assert!(v(comp) > 0.0 && v(bone) <= 0.0);
        assert!((v(total) - v(comp) - v(bone)).abs() < 1e-9 * v(total).abs().max(1.0));
    }
}

#[test]
fn reconstruct_rejects_density_below_the_floor() {
    let run = Run::new("[reconstruct]\nresolution = 8\n");
    let model = RunConfig::load(run.dir.path().join("run.toml")).unwrap().model().unwrap();
    let mut text = String::from("element,x,y,z,rho\n");
    for e in 0..model.defect_elements() {
        text.push_str(&format!("{e},0,0,0,0.05\n"));
    }
    let design = run.dir.path().join("thin.csv");
    std::fs::write(&design, text).unwrap();
    let output = run.exec(&["reconstruct", "--design", design.to_str().unwrap()]);
    assert_eq!(code(&output), 2);
    assert!(!run.out("scaffold.stl").exists());
}

#[test]
fn reconstruct_writes_a_closed_mesh() {
    let run = Run::new("[simulation]\ninitial_density = 0.99\n[reconstruct]\nresolution = 10\n");
    let output = run.exec(&["reconstruct"]);
    assert_eq!(code(&output), 0, "{}", String::from_utf8_lossy(&output.stderr));
    let triangles = scaffold_core::io::read_stl(run.out("scaffold.stl")).unwrap();
    assert!(!triangles.is_empty());
    assert!(String::from_utf8_lossy(&output.stdout).contains("watertight: true"));
}
