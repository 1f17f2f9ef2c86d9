use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::CoarseGrid;
use crate::linalg::{eig_sparse_psd_smallest, CsrMatrix};

/// Smallest eigenpairs of one local diffusion operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalSpectralResult {
    pub domain: usize,
    /// Ascending.
    pub values: Vec<f64>,
    /// Unit norm, largest-magnitude entry positive, over the domain's sorted fine cells.
    pub vectors: Vec<Vec<f64>>,
}

impl LocalSpectralResult {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Restriction of a global TPFA operator to `cells` (sorted): only faces with both
/// cells inside are kept, so the diagonal is rebuilt from the retained off-diagonals
/// and row sums stay zero.
pub fn assemble_local_diffusion(global: &CsrMatrix, cells: &[usize]) -> Result<CsrMatrix> {
    if cells.is_empty() {
        return Err(Error::invalid("local domain has no cells"));
    }
    let mut local = global.principal_submatrix(cells)?;
    let row_ptr = local.row_ptr().to_vec();
    let col_idx = local.col_idx().to_vec();
    let values = local.values_mut();
    for r in 0..cells.len() {
        let range = row_ptr[r]..row_ptr[r + 1];
        let off: f64 = range.clone().filter(|&p| col_idx[p] != r).map(|p| values[p]).sum();
        match range.clone().find(|&p| col_idx[p] == r) {
            Some(p) => values[p] = -off,
            None if off != 0.0 => return Err(Error::invalid(format!("local row {r} has no diagonal entry"))),
            None => {}
        }
    }
    Ok(local)
}

/// Residual tolerance relative to `‖A_local‖_F`.
pub const RESIDUAL_TOL: f64 = 1e-8;
/// Bound on the first eigenvalue.
pub const NULL_EIGENVALUE_TOL: f64 = 1e-10;
/// Entrywise deviation of the first eigenvector from the normalized constant.
pub const CONSTANT_MODE_TOL: f64 = 1e-8;

/// The `count` smallest eigenpairs of a local operator, checked against
/// [`check_spectral_contract`].
pub fn solve_local_spectral(domain: usize, local: &CsrMatrix, count: usize) -> Result<LocalSpectralResult> {
    if count == 0 || count > local.nrows() {
        return Err(Error::invalid(format!(
            "domain {domain}: cannot take {count} eigenpairs of a {0}x{0} operator",
            local.nrows()
        )));
    }
    let pairs = eig_sparse_psd_smallest(local, count).map_err(|e| match e {
        Error::InvalidArgument(_) => e,
        other => Error::Eigen { domain, reason: other.to_string() },
    })?;
    let result = LocalSpectralResult { domain, values: pairs.values, vectors: pairs.vectors };
    check_spectral_contract(local, &result)?;
    Ok(result)
}

/// Residuals, non-negativity, and the constant null mode of a local spectrum.
pub fn check_spectral_contract(local: &CsrMatrix, result: &LocalSpectralResult) -> Result<()> {
    let domain = result.domain;
    let fail = |reason: String| Err(Error::Eigen { domain, reason });
    let norm = local.frobenius_norm();
    let n = local.nrows();
    for (l, (lambda, v)) in result.values.iter().zip(&result.vectors).enumerate() {
        let av = local.spmv(v)?;
        let res = av.iter().zip(v).map(|(a, x)| (a - lambda * x).powi(2)).sum::<f64>().sqrt();
        if res > RESIDUAL_TOL * norm.max(f64::MIN_POSITIVE) && res > 0.0 {
            return fail(format!("pair {l} has residual {res:.3e} (operator norm {norm:.3e})"));
        }
        if *lambda < -NULL_EIGENVALUE_TOL {
            return fail(format!("negative eigenvalue {lambda:.3e}"));
        }
        let vnorm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (vnorm - 1.0).abs() > 1e-10 {
            return fail(format!("pair {l} is not normalized ({vnorm})"));
        }
    }
    if let (Some(&l1), Some(v1)) = (result.values.first(), result.vectors.first()) {
        if l1 > NULL_EIGENVALUE_TOL {
            return fail(format!("first eigenvalue {l1:.3e} is not zero"));
        }
        let c = 1.0 / (n as f64).sqrt();
        if v1.iter().any(|x| (x - c).abs() > CONSTANT_MODE_TOL) {
            return fail("first eigenvector is not constant".into());
        }
    }
    Ok(())
}

/// Spectra of every node's local operator, `min(count, |ω_i|)` pairs each.
pub fn compute_local_spectra(global: &CsrMatrix, coarse: &CoarseGrid, count: usize) -> Result<Vec<LocalSpectralResult>> {
    (0..coarse.n_nodes())
        .map(|node| {
            let cells = coarse.local_cells(node);
            let local = assemble_local_diffusion(global, cells)?;
            solve_local_spectral(node, &local, count.min(cells.len()))
        })
        .collect()
}
