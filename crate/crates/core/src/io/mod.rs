//! File output: legacy VTK snapshots, CSV series and binary STL.

mod series;
mod stl;
mod vtk;

use std::path::PathBuf;

use thiserror::Error;

pub use series::{read_design, write_cell_series, write_design, write_history};
pub use stl::{read_stl, write_stl};
pub use vtk::{write_design_vtk, write_vtk, Snapshot};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl IoError {
    pub(crate) fn file(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
        move |source| IoError::File { path: path.to_path_buf(), source }
    }

    pub(crate) fn csv(path: &std::path::Path) -> impl FnOnce(csv::Error) -> IoError + '_ {
        move |source| IoError::Csv { path: path.to_path_buf(), source }
    }
}
