//! Reaction-diffusion solvers for competing species in heterogeneous 2-D media.
//!
//! The crate provides
//!
//! - [`grid`]: structured fine grids, circular inclusions, coarse grids with local
//!   domains and bilinear partition-of-unity weights;
//! - [`fvm`]: two-point flux transmissibilities, diffusion/mass operators and the
//!   Lotka-Volterra competition reaction term with its Jacobian;
//! - [`timestepping`]: the coupled fully-implicit Newton scheme, the decoupled
//!   semi-implicit scheme and an RK4 reference for the diffusion-free system;
//! - [`gmsfem`]: spectral multiscale basis construction and the reduced coarse solver;
//! - [`linalg`]: CSR kernels, Krylov/direct solvers and symmetric eigensolvers;
//! - [`experiment`]: test presets, averages and errors, CSV/VTK output and the
//!   experiment pipeline used by the `rdms` command line tool.

pub mod error;
pub mod experiment;
pub mod fvm;
pub mod gmsfem;
pub mod grid;
pub mod linalg;
pub mod timestepping;

pub use error::{Error, Result};
pub use fvm::{CoefficientField, Piecewise, ReactionParams, SpeciesState};
pub use gmsfem::{MultiscaleModel, ProjectionMatrix};
pub use grid::{CoarseGrid, FineGrid, PartitionOfUnity, Subdomain, SubdomainMap};
pub use linalg::{CsrMatrix, LinearSolveSpec};
pub use timestepping::{Scheme, TimeSteppingConfig};
