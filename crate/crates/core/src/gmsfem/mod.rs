//! Multiscale model reduction: local spectral bases glued by a partition of unity,
//! Galerkin coarse operators, and an online coarse stepper that evaluates the reaction
//! on the reconstructed fine field.

mod model;
mod projection;
mod spectral;

pub use model::{basis_fingerprint, MsStepper, MultiscaleModel, SpeciesSpace, ARTIFACT_VERSION};
pub use projection::{
    assemble_coarse, build_projection, project_initial, reconstruct_fine, CoarseSystem, ProjectionMatrix,
};
pub use spectral::{
    assemble_local_diffusion, check_spectral_contract, compute_local_spectra, solve_local_spectral, LocalSpectralResult,
    CONSTANT_MODE_TOL, NULL_EIGENVALUE_TOL, RESIDUAL_TOL,
};
