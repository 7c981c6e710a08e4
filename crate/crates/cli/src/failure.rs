use std::fmt;

use scaffold_core::config::ConfigError;
use scaffold_core::io::IoError;
use scaffold_core::macroscale::MacroError;
use scaffold_core::reconstruct::ReconstructError;
use scaffold_core::table::TableError;

/// Command failure with its process exit code.
#[derive(Debug)]
pub enum Failure {
    /// Invalid configuration or input data (exit 2).
    Config(String),
    /// A numerical solve failed (exit 3).
    Solver(String),
    /// Reading or writing a file failed (exit 4).
    Io(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Solver(_) => 3,
            Failure::Io(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration: {m}"),
            Failure::Solver(m) => write!(f, "solver: {m}"),
            Failure::Io(m) => write!(f, "i/o: {m}"),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<TableError> for Failure {
    fn from(e: TableError) -> Self {
        let m = e.to_string();
        match e {
            TableError::InvalidAxes(_) => Failure::Config(m),
            TableError::Solve { .. } | TableError::Geometry { .. } | TableError::Empty | TableError::MissingNeighbor { .. } => {
                Failure::Solver(m)
            }
            _ => Failure::Io(m),
        }
    }
}

impl From<MacroError> for Failure {
    fn from(e: MacroError) -> Self {
        let m = e.to_string();
        match e {
            MacroError::Singular { .. } | MacroError::NotConverged { .. } => Failure::Solver(m),
            MacroError::Table(t) => t.into(),
            _ => Failure::Config(m),
        }
    }
}

impl From<ReconstructError> for Failure {
    fn from(e: ReconstructError) -> Self {
        match e {
            ReconstructError::Design(m) => m.into(),
            ReconstructError::Geometry(g) => Failure::Solver(g.to_string()),
            ReconstructError::Settings(m) => Failure::Config(m),
        }
    }
}

pub fn io_error(path: &std::path::Path, e: std::io::Error) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}
