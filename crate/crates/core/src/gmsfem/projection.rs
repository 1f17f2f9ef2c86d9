use serde::{Deserialize, Serialize};

use super::spectral::LocalSpectralResult;
use crate::error::{Error, Result};
use crate::grid::{CoarseGrid, PartitionOfUnity};
use crate::linalg::{CsrMatrix, PreparedSolver};

/// `DOF_H × N` matrix whose row `(i, l)` is `χ^i ⊙ ψ^i_l`, rows ordered node-major.
/// Fine fields are reconstructed as `Pᵀ u_H`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionMatrix {
    pub matrix: CsrMatrix,
    /// `(node, basis index)` of every row.
    pub rows: Vec<(usize, usize)>,
}

impl ProjectionMatrix {
    pub fn dof(&self) -> usize {
        self.rows.len()
    }

    pub fn n_fine(&self) -> usize {
        self.matrix.ncols()
    }

    /// Keeps the first `count` basis functions of every node.
    pub fn truncate(&self, count: usize) -> Result<ProjectionMatrix> {
        let keep: Vec<usize> = (0..self.rows.len()).filter(|&r| self.rows[r].1 < count).collect();
        Ok(ProjectionMatrix {
            matrix: self.matrix.select_rows(&keep)?,
            rows: keep.iter().map(|&r| self.rows[r]).collect(),
        })
    }
}

/// Glues the first `min(count, available)` eigenvectors of each node with the node's
/// partition-of-unity weights.
pub fn build_projection(
    spectra: &[LocalSpectralResult],
    coarse: &CoarseGrid,
    pou: &PartitionOfUnity,
    n_fine: usize,
    count: usize,
) -> Result<ProjectionMatrix> {
    if spectra.len() != coarse.n_nodes() || pou.n_nodes() != coarse.n_nodes() {
        return Err(Error::DimensionMismatch { expected: coarse.n_nodes(), found: spectra.len() });
    }
    let mut triplets = Vec::new();
    let mut rows = Vec::new();
    for (node, spectrum) in spectra.iter().enumerate() {
        let cells = coarse.local_cells(node);
        let weights = pou.weights(node);
        for (l, psi) in spectrum.vectors.iter().take(count).enumerate() {
            if psi.len() != cells.len() {
                return Err(Error::DimensionMismatch { expected: cells.len(), found: psi.len() });
            }
            let row = rows.len();
            for ((&c, &w), &p) in cells.iter().zip(weights).zip(psi) {
                let v = w * p;
                if v != 0.0 {
                    triplets.push((row, c, v));
                }
            }
            rows.push((node, l));
        }
    }
    Ok(ProjectionMatrix { matrix: CsrMatrix::from_triplets(rows.len(), n_fine, &triplets)?, rows })
}

/// Galerkin coarse operators `A_H = P A Pᵀ` and `M_H = P M Pᵀ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseSystem {
    pub stiffness: CsrMatrix,
    pub mass: CsrMatrix,
}

impl CoarseSystem {
    pub fn truncate(&self, keep: &[usize]) -> Result<CoarseSystem> {
        Ok(CoarseSystem {
            stiffness: self.stiffness.principal_submatrix(keep)?,
            mass: self.mass.principal_submatrix(keep)?,
        })
    }
}

/// `P B Pᵀ`, symmetrized to remove rounding asymmetry.
fn galerkin(p: &CsrMatrix, b: &CsrMatrix, pt: &CsrMatrix) -> Result<CsrMatrix> {
    let product = p.matmul(b)?.matmul(pt)?;
    product.add_scaled(0.5, &product.transpose(), 0.5)
}

pub fn assemble_coarse(p: &ProjectionMatrix, stiffness: &CsrMatrix, mass: &CsrMatrix) -> Result<CoarseSystem> {
    let pt = p.matrix.transpose();
    Ok(CoarseSystem { stiffness: galerkin(&p.matrix, stiffness, &pt)?, mass: galerkin(&p.matrix, mass, &pt)? })
}

/// Coarse coefficients of the mass-weighted projection: `M_H u_H = P M u0`.
pub fn project_initial(p: &ProjectionMatrix, volumes: &[f64], mass_solver: &PreparedSolver, u0: &[f64]) -> Result<Vec<f64>> {
    if u0.len() != p.n_fine() || volumes.len() != p.n_fine() {
        return Err(Error::DimensionMismatch { expected: p.n_fine(), found: u0.len() });
    }
    let weighted: Vec<f64> = u0.iter().zip(volumes).map(|(u, v)| u * v).collect();
    let rhs = p.matrix.spmv(&weighted)?;
    Ok(mass_solver.solve(&rhs, None)?.x)
}

/// `u_ms = Pᵀ u_H`.
pub fn reconstruct_fine(p: &ProjectionMatrix, u_h: &[f64]) -> Result<Vec<f64>> {
    p.matrix.transpose_spmv(u_h)
}
