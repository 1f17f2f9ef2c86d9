//! Smallest eigenpairs of symmetric matrices.
//!
//! Dense problems go through nalgebra's symmetric eigendecomposition. Sparse positive
//! semidefinite problems (the local diffusion operators) use block shift-invert subspace
//! iteration with Rayleigh-Ritz extraction on top of an envelope Cholesky factorization,
//! falling back to the dense path when the iteration stalls.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cholesky::EnvelopeCholesky;
use super::krylov::{dot, norm2};
use super::CsrMatrix;
use crate::error::{Error, Result};

/// Ascending eigenvalues with unit-norm, sign-normalized eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

impl Eigenpairs {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Flips `v` so its largest-magnitude entry (first one on ties) is positive.
pub fn normalize_sign(v: &mut [f64]) {
    let mut best = 0usize;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Sorts pairs by eigenvalue; runs of values within `tie_tol` are ordered
/// lexicographically by their (sign-normalized) vectors, with the run's values
/// reassigned in ascending order.
fn sort_pairs(pairs: &mut [(f64, Vec<f64>)], tie_tol: f64) {
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut start = 0;
    while start < pairs.len() {
        let mut end = start + 1;
        while end < pairs.len() && pairs[end].0 - pairs[end - 1].0 <= tie_tol {
            end += 1;
        }
        if end - start > 1 {
            let values: Vec<f64> = pairs[start..end].iter().map(|p| p.0).collect();
            pairs[start..end].sort_by(|a, b| {
                a.1.iter()
                    .zip(&b.1)
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
            // Keep the reported values ascending; they agree to within `tie_tol`.
            for (p, v) in pairs[start..end].iter_mut().zip(values) {
                p.0 = v;
            }
        }
        start = end;
    }
}

fn finish(mut pairs: Vec<(f64, Vec<f64>)>, m: usize, scale: f64) -> Eigenpairs {
    for (_, v) in pairs.iter_mut() {
        let nrm = norm2(v);
        v.iter_mut().for_each(|x| *x /= nrm);
        normalize_sign(v);
    }
    sort_pairs(&mut pairs, 1e-12 * scale.max(f64::MIN_POSITIVE));
    pairs.truncate(m);
    let (values, vectors) = pairs.into_iter().unzip();
    Eigenpairs { values, vectors }
}

fn frobenius(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// The `m` smallest eigenpairs of a dense symmetric matrix.
pub fn eig_sym_smallest(a: &DMatrix<f64>, m: usize) -> Result<Eigenpairs> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::invalid("eigenproblem needs a square matrix"));
    }
    if m > n {
        return Err(Error::invalid(format!(
            "requested {m} eigenpairs of a {n}x{n} matrix"
        )));
    }
    let norm = frobenius(a);
    let sym_tol = 1e-12 * norm.max(1.0);
    for i in 0..n {
        for j in 0..i {
            if (a[(i, j)] - a[(j, i)]).abs() > sym_tol {
                return Err(Error::invalid(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    if m == 0 {
        return Ok(Eigenpairs {
            values: Vec::new(),
            vectors: Vec::new(),
        });
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 10_000).ok_or_else(|| Error::Eigen {
        domain: usize::MAX,
        reason: "symmetric QR iteration did not converge".into(),
    })?;
    let pairs = (0..n)
        .map(|k| (eig.eigenvalues[k], eig.eigenvectors.column(k).iter().copied().collect()))
        .collect();
    Ok(finish(pairs, m, norm))
}

/// Below this dimension the dense solver is used directly.
const DENSE_CUTOFF: usize = 200;
const MAX_SUBSPACE_ITERS: usize = 400;
const RITZ_TOL: f64 = 1e-11;

/// The `m` smallest eigenpairs of a sparse symmetric positive semidefinite matrix.
pub fn eig_sparse_psd_smallest(a: &CsrMatrix, m: usize) -> Result<Eigenpairs> {
    let n = a.nrows();
    if !a.is_square() {
        return Err(Error::invalid("eigenproblem needs a square matrix"));
    }
    if m > n {
        return Err(Error::invalid(format!(
            "requested {m} eigenpairs of a {n}x{n} matrix"
        )));
    }
    let norm = a.frobenius_norm();
    if n <= DENSE_CUTOFF || 3 * m >= n || norm == 0.0 {
        return eig_sym_smallest(&a.to_dense(), m);
    }
    if !a.is_symmetric(1e-12 * norm.max(1.0)) {
        return Err(Error::invalid("matrix is not symmetric"));
    }
    match shift_invert_subspace(a, m, norm) {
        Some(pairs) => Ok(pairs),
        None => {
            log::warn!("subspace iteration stalled (n = {n}, m = {m}); using dense eigensolver");
            eig_sym_smallest(&a.to_dense(), m)
        }
    }
}

fn orthonormalize(block: &mut [Vec<f64>], locked: &[Vec<f64>], rng: &mut ChaCha8Rng) {
    for j in 0..block.len() {
        for attempt in 0..3 {
            let before = norm2(&block[j]);
            for _ in 0..2 {
                for q in locked.iter() {
                    let c = dot(q, &block[j]);
                    block[j].iter_mut().zip(q).for_each(|(x, qi)| *x -= c * qi);
                }
                for k in 0..j {
                    let (head, tail) = block.split_at_mut(j);
                    let c = dot(&head[k], &tail[0]);
                    tail[0].iter_mut().zip(&head[k]).for_each(|(x, qi)| *x -= c * qi);
                }
            }
            let after = norm2(&block[j]);
            if after > 1e-10 * before && after > 0.0 {
                block[j].iter_mut().for_each(|x| *x /= after);
                break;
            }
            // Column collapsed into the span of its predecessors; restart it randomly.
            block[j].iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
            debug_assert!(attempt < 2, "repeated orthogonalization failure");
        }
    }
}

fn shift_invert_subspace(a: &CsrMatrix, m: usize, norm: f64) -> Option<Eigenpairs> {
    let n = a.nrows();
    let max_diag = a.diagonal().iter().fold(0.0f64, |acc, d| acc.max(d.abs()));
    let sigma = 1e-6 * max_diag.max(f64::MIN_POSITIVE);
    let shifted = a.add_scaled(1.0, &CsrMatrix::identity(n), sigma).ok()?;
    let chol = EnvelopeCholesky::factor(&shifted).ok()?;

    // Constants are locked when they lie in the nullspace (zero row sums).
    let ones = vec![1.0 / (n as f64).sqrt(); n];
    let a_ones = a.spmv(&ones).ok()?;
    let mut locked: Vec<Vec<f64>> = Vec::new();
    let mut pairs: Vec<(f64, Vec<f64>)> = Vec::new();
    if norm2(&a_ones) <= 1e-12 * norm {
        pairs.push((dot(&ones, &a_ones), ones.clone()));
        locked.push(ones);
    }
    let wanted = m - pairs.len().min(m);
    if wanted == 0 {
        return Some(finish(pairs, m, norm));
    }
    let avail = n - locked.len();
    let p = (wanted + 8).max(2 * wanted).min(avail);

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let mut block: Vec<Vec<f64>> = (0..p)
        .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    orthonormalize(&mut block, &locked, &mut rng);

    for _ in 0..MAX_SUBSPACE_ITERS {
        for col in block.iter_mut() {
            chol.solve_in_place(col).ok()?;
        }
        orthonormalize(&mut block, &locked, &mut rng);
        let a_block: Vec<Vec<f64>> = block.iter().map(|v| a.spmv(v).unwrap()).collect();
        let h = DMatrix::from_fn(p, p, |i, j| {
            0.5 * (dot(&block[i], &a_block[j]) + dot(&block[j], &a_block[i]))
        });
        let ritz = SymmetricEigen::try_new(h, f64::EPSILON, 10_000)?;
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&i, &j| ritz.eigenvalues[i].total_cmp(&ritz.eigenvalues[j]));
        let mut new_block = vec![vec![0.0; n]; p];
        let mut new_a_block = vec![vec![0.0; n]; p];
        for (slot, &k) in order.iter().enumerate() {
            let coeffs = ritz.eigenvectors.column(k);
            for (c, (v, av)) in coeffs.iter().zip(block.iter().zip(&a_block)) {
                new_block[slot].iter_mut().zip(v).for_each(|(x, vi)| *x += c * vi);
                new_a_block[slot].iter_mut().zip(av).for_each(|(x, vi)| *x += c * vi);
            }
        }
        let thetas: Vec<f64> = order.iter().map(|&k| ritz.eigenvalues[k]).collect();
        let converged = (0..wanted).all(|j| {
            let r: f64 = new_a_block[j]
                .iter()
                .zip(&new_block[j])
                .map(|(av, v)| (av - thetas[j] * v).powi(2))
                .sum::<f64>()
                .sqrt();
            r <= RITZ_TOL * norm
        });
        block = new_block;
        if converged {
            pairs.extend(thetas.into_iter().zip(block).take(wanted));
            return Some(finish(pairs, m, norm));
        }
    }
    None
}
