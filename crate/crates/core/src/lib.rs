//! Two-scale model of scaffold-mediated bone regeneration.
//!
//! Microscale: periodic scaffold/bone unit cells are voxelized
//! ([`geometry`]) and homogenized with FFT-preconditioned solvers
//! ([`fft_solver`]). The results are tabulated over scaffold and bone volume
//! fractions ([`table`]). Macroscale: a fixator-stabilized bone defect is
//! simulated with coupled elasticity and cell reaction-diffusion
//! ([`macroscale`]), and the scaffold density is optimized with a discrete
//! adjoint ([`optimize`]).

pub mod coefficients;
pub mod config;
pub mod fft;
pub mod fft_solver;
pub mod geometry;
pub mod io;
pub mod macroscale;
pub mod mesh;
pub mod optimize;
pub mod par;
pub mod reconstruct;
pub mod stimulus;
pub mod table;
pub mod tensor;
