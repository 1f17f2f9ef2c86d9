//! Preconditioned conjugate gradients and restarted GMRES.

use super::CsrMatrix;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

pub(crate) fn residual(a: &CsrMatrix, x: &[f64], b: &[f64], r: &mut [f64]) {
    a.spmv_into(x, r).expect("dimensions checked by caller");
    r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
}

/// Outcome of a Krylov run: iterations used and final true relative residual.
pub(crate) struct KrylovOutcome {
    pub iterations: usize,
    pub rel_residual: f64,
    pub converged: bool,
}

/// Preconditioned CG on an SPD matrix. `x` holds the initial guess and receives the result.
pub(crate) fn conjugate_gradient(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    precond: &dyn Fn(&[f64], &mut [f64]),
    rel_tol: f64,
    max_iters: usize,
) -> KrylovOutcome {
    let n = b.len();
    let bnorm = norm2(b);
    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut iterations = 0;
    let target = rel_tol * bnorm;
    loop {
        residual(a, x, b, &mut r);
        let mut rnorm = norm2(&r);
        if rnorm <= target || iterations >= max_iters {
            return KrylovOutcome {
                iterations,
                rel_residual: rnorm / bnorm,
                converged: rnorm <= target,
            };
        }
        let start = iterations;
        precond(&r, &mut z);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        while iterations < max_iters {
            a.spmv_into(&p, &mut q).expect("dimensions checked by caller");
            let pq = dot(&p, &q);
            if pq <= 0.0 || !pq.is_finite() {
                break;
            }
            let alpha = rz / pq;
            axpy(alpha, &p, x);
            axpy(-alpha, &q, &mut r);
            iterations += 1;
            rnorm = norm2(&r);
            if rnorm <= target {
                break;
            }
            precond(&r, &mut z);
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
        }
        if iterations == start {
            // Breakdown without progress (pq <= 0).
            residual(a, x, b, &mut r);
            let true_norm = norm2(&r);
            return KrylovOutcome {
                iterations,
                rel_residual: true_norm / bnorm,
                converged: true_norm <= target,
            };
        }
    }
}

/// Right-preconditioned restarted GMRES. `x` holds the initial guess and receives the result.
pub(crate) fn gmres(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    precond: &dyn Fn(&[f64], &mut [f64]),
    restart: usize,
    rel_tol: f64,
    max_iters: usize,
) -> KrylovOutcome {
    let n = b.len();
    let m = restart.max(1);
    let bnorm = norm2(b);
    let target = rel_tol * bnorm;
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut iterations = 0;
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    let mut h = vec![vec![0.0; m]; m + 1];
    let mut cs = vec![0.0; m];
    let mut sn = vec![0.0; m];
    let mut g = vec![0.0; m + 1];
    loop {
        residual(a, x, b, &mut r);
        let beta = norm2(&r);
        if beta <= target || iterations >= max_iters {
            return KrylovOutcome {
                iterations,
                rel_residual: beta / bnorm,
                converged: beta <= target,
            };
        }
        basis.clear();
        basis.push(r.iter().map(|v| v / beta).collect());
        g.iter_mut().for_each(|v| *v = 0.0);
        g[0] = beta;
        let mut k = 0;
        while k < m && iterations < max_iters {
            precond(&basis[k], &mut z);
            a.spmv_into(&z, &mut w).expect("dimensions checked by caller");
            for (j, v) in basis.iter().enumerate() {
                let hj = dot(&w, v);
                h[j][k] = hj;
                axpy(-hj, v, &mut w);
            }
            let wnorm = norm2(&w);
            h[k + 1][k] = wnorm;
            for j in 0..k {
                let t = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = t;
            }
            let denom = h[k][k].hypot(h[k + 1][k]);
            if denom == 0.0 {
                cs[k] = 1.0;
                sn[k] = 0.0;
            } else {
                cs[k] = h[k][k] / denom;
                sn[k] = h[k + 1][k] / denom;
            }
            h[k][k] = denom;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            iterations += 1;
            k += 1;
            if g[k].abs() <= target || wnorm == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / wnorm).collect());
        }
        // Back substitution for the Krylov coefficients.
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let s: f64 = (i + 1..k).map(|j| h[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        let mut update = vec![0.0; n];
        for (yi, v) in y.iter().zip(&basis) {
            axpy(*yi, v, &mut update);
        }
        precond(&update, &mut z);
        axpy(1.0, &z, x);
    }
}
