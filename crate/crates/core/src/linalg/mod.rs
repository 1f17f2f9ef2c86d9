//! Sparse kernels, linear solvers and symmetric eigensolvers.

mod cholesky;
mod csr;
mod eigen;
mod ilu;
mod krylov;
mod solver;

pub use cholesky::EnvelopeCholesky;
pub use csr::CsrMatrix;
pub use eigen::{eig_sparse_psd_smallest, eig_sym_smallest, normalize_sign, Eigenpairs};
pub use ilu::Ilu0;
pub use solver::{
    solve_linear, LinearSolution, LinearSolveSpec, Preconditioner, PreparedSolver, SolverMethod,
};

/// `y = A x`, the free-function form of [`CsrMatrix::spmv`].
pub fn spmv(a: &CsrMatrix, x: &[f64]) -> crate::Result<Vec<f64>> {
    a.spmv(x)
}
