use serde::{Deserialize, Serialize};

use super::cholesky::EnvelopeCholesky;
use super::ilu::Ilu0;
use super::krylov::{self, norm2};
use super::CsrMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    /// Conjugate gradients; requires a symmetric positive definite matrix.
    ConjugateGradient,
    /// Restarted GMRES for general matrices.
    Gmres { restart: usize },
    /// Envelope Cholesky factorization; requires a symmetric positive definite matrix.
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preconditioner {
    None,
    Jacobi,
    Ilu0,
}

/// How to solve one linear system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearSolveSpec {
    pub method: SolverMethod,
    pub preconditioner: Preconditioner,
    pub rel_tol: f64,
    pub max_iters: usize,
}

impl LinearSolveSpec {
    /// CG with Jacobi preconditioning, for the SPD per-species systems.
    pub fn symmetric() -> Self {
        LinearSolveSpec {
            method: SolverMethod::ConjugateGradient,
            preconditioner: Preconditioner::Jacobi,
            rel_tol: 1e-10,
            max_iters: 2000,
        }
    }

    /// GMRES with ILU(0), for the coupled nonsymmetric Newton systems.
    pub fn nonsymmetric() -> Self {
        LinearSolveSpec {
            method: SolverMethod::Gmres { restart: 50 },
            preconditioner: Preconditioner::Ilu0,
            rel_tol: 1e-10,
            max_iters: 2000,
        }
    }

    pub fn direct() -> Self {
        LinearSolveSpec {
            method: SolverMethod::Direct,
            preconditioner: Preconditioner::None,
            rel_tol: 1e-10,
            max_iters: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(Error::invalid(format!(
                "rel_tol must lie in (0, 1), got {}",
                self.rel_tol
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        match (self.method, self.preconditioner) {
            (SolverMethod::ConjugateGradient, Preconditioner::Ilu0) => Err(Error::invalid(
                "ILU(0) is not symmetric; use Jacobi or no preconditioner with CG",
            )),
            (SolverMethod::Gmres { restart: 0 }, _) => {
                Err(Error::invalid("GMRES restart length must be at least 1"))
            }
            _ => Ok(()),
        }
    }
}

impl Default for LinearSolveSpec {
    fn default() -> Self {
        Self::symmetric()
    }
}

#[derive(Debug, Clone)]
pub struct LinearSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Achieved `‖b − Ax‖ / ‖b‖` (zero when `b = 0`).
    pub rel_residual: f64,
}

#[derive(Debug, Clone)]
enum Prepared {
    Identity,
    Jacobi(Vec<f64>),
    Ilu(Ilu0),
    Cholesky(EnvelopeCholesky),
}

/// A matrix with its preconditioner or factorization built once, for repeated solves.
#[derive(Debug, Clone)]
pub struct PreparedSolver {
    matrix: CsrMatrix,
    spec: LinearSolveSpec,
    prepared: Prepared,
}

impl PreparedSolver {
    pub fn new(matrix: CsrMatrix, spec: LinearSolveSpec) -> Result<Self> {
        spec.validate()?;
        if !matrix.is_square() {
            return Err(Error::invalid("linear solve needs a square matrix"));
        }
        let prepared = match spec.method {
            SolverMethod::Direct => {
                if !matrix.is_symmetric(1e-12 * matrix.frobenius_norm().max(1.0)) {
                    return Err(Error::invalid(
                        "direct solves are limited to symmetric positive definite matrices",
                    ));
                }
                Prepared::Cholesky(EnvelopeCholesky::factor(&matrix)?)
            }
            _ => match spec.preconditioner {
                Preconditioner::None => Prepared::Identity,
                Preconditioner::Jacobi => {
                    let diag = matrix.diagonal();
                    if diag.contains(&0.0) {
                        return Err(Error::invalid("Jacobi preconditioner needs a nonzero diagonal"));
                    }
                    Prepared::Jacobi(diag.iter().map(|d| 1.0 / d).collect())
                }
                Preconditioner::Ilu0 => Prepared::Ilu(Ilu0::factor(&matrix)?),
            },
        };
        Ok(PreparedSolver {
            matrix,
            spec,
            prepared,
        })
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn spec(&self) -> &LinearSolveSpec {
        &self.spec
    }

    /// Solves `A x = b`, starting Krylov methods from `guess` when given.
    pub fn solve(&self, b: &[f64], guess: Option<&[f64]>) -> Result<LinearSolution> {
        let n = self.matrix.nrows();
        if b.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: b.len(),
            });
        }
        if let Some(g) = guess {
            if g.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: g.len(),
                });
            }
        }
        let bnorm = norm2(b);
        if bnorm == 0.0 {
            return Ok(LinearSolution {
                x: vec![0.0; n],
                iterations: 0,
                rel_residual: 0.0,
            });
        }
        let precond = |r: &[f64], z: &mut [f64]| match &self.prepared {
            Prepared::Jacobi(inv) => {
                z.iter_mut().zip(r).zip(inv).for_each(|((zi, ri), di)| *zi = ri * di);
            }
            Prepared::Ilu(ilu) => {
                z.copy_from_slice(r);
                ilu.apply(z);
            }
            _ => z.copy_from_slice(r),
        };
        let mut x = guess.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
        let outcome = match (&self.prepared, self.spec.method) {
            (Prepared::Cholesky(chol), _) => {
                x = chol.solve(b)?;
                // Up to two refinement sweeps against the stored matrix.
                let mut r = vec![0.0; n];
                let mut rel = 0.0;
                for sweep in 0..3 {
                    krylov::residual(&self.matrix, &x, b, &mut r);
                    rel = norm2(&r) / bnorm;
                    if rel <= self.spec.rel_tol || sweep == 2 {
                        break;
                    }
                    chol.solve_in_place(&mut r)?;
                    x.iter_mut().zip(&r).for_each(|(xi, di)| *xi += di);
                }
                krylov::KrylovOutcome {
                    iterations: 1,
                    rel_residual: rel,
                    converged: rel <= self.spec.rel_tol,
                }
            }
            (_, SolverMethod::Gmres { restart }) => krylov::gmres(
                &self.matrix,
                b,
                &mut x,
                &precond,
                restart,
                self.spec.rel_tol,
                self.spec.max_iters,
            ),
            _ => krylov::conjugate_gradient(
                &self.matrix,
                b,
                &mut x,
                &precond,
                self.spec.rel_tol,
                self.spec.max_iters,
            ),
        };
        if !outcome.converged {
            return Err(Error::LinearSolve {
                iterations: outcome.iterations,
                residual: outcome.rel_residual,
            });
        }
        Ok(LinearSolution {
            x,
            iterations: outcome.iterations,
            rel_residual: outcome.rel_residual,
        })
    }
}

/// One-shot solve of `A x = b`.
pub fn solve_linear(a: &CsrMatrix, b: &[f64], spec: &LinearSolveSpec) -> Result<LinearSolution> {
    PreparedSolver::new(a.clone(), *spec)?.solve(b, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        b.transpose() * &b + DMatrix::identity(n, n)
    }

    fn rel_err(x: &[f64], y: &[f64]) -> f64 {
        let num: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        num / y.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    #[test]
    fn diagonal_system_with_jacobi_is_immediate() {
        let a = CsrMatrix::from_diagonal(&[2.0, 4.0, 0.5, 10.0]);
        let b = [1.0, 2.0, 3.0, 4.0];
        let sol = solve_linear(&a, &b, &LinearSolveSpec::symmetric()).unwrap();
        assert!(sol.iterations <= 2);
        assert_eq!(sol.x, vec![0.5, 0.5, 6.0, 0.4]);
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let a = CsrMatrix::from_dense(&random_spd(5, 3));
        for spec in [LinearSolveSpec::symmetric(), LinearSolveSpec::nonsymmetric(), LinearSolveSpec::direct()] {
            let sol = solve_linear(&a, &[0.0; 5], &spec).unwrap();
            assert_eq!(sol.x, vec![0.0; 5]);
            assert_eq!(sol.iterations, 0);
        }
    }

    #[test]
    fn random_spd_matches_dense_factorization() {
        let dense = random_spd(50, 11);
        let a = CsrMatrix::from_dense(&dense);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b: Vec<f64> = (0..50).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let oracle = dense
            .clone()
            .cholesky()
            .unwrap()
            .solve(&nalgebra::DVector::from_column_slice(&b));
        for spec in [
            LinearSolveSpec::symmetric(),
            LinearSolveSpec { preconditioner: Preconditioner::None, ..LinearSolveSpec::symmetric() },
            LinearSolveSpec::nonsymmetric(),
            LinearSolveSpec::direct(),
        ] {
            let sol = solve_linear(&a, &b, &spec).unwrap();
            assert!(rel_err(&sol.x, oracle.as_slice()) < 1e-8, "{spec:?}");
            let r = a.spmv(&sol.x).unwrap();
            let res: f64 = r.iter().zip(&b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
            assert!(res <= spec.rel_tol * norm2(&b) * (1.0 + 1e-9));
            assert!((res / norm2(&b) - sol.rel_residual).abs() < 1e-12);
        }
    }

    #[test]
    fn gmres_solves_nonsymmetric_system() {
        let n = 30;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0));
            if i + 1 < n {
                t.push((i, i + 1, rng.gen_range(-1.5..0.0)));
                t.push((i + 1, i, rng.gen_range(0.0..1.0)));
            }
        }
        let a = CsrMatrix::from_triplets(n, n, &t).unwrap();
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let b = a.spmv(&x_true).unwrap();
        for pc in [Preconditioner::None, Preconditioner::Jacobi, Preconditioner::Ilu0] {
            let spec = LinearSolveSpec { preconditioner: pc, method: SolverMethod::Gmres { restart: 5 }, ..LinearSolveSpec::nonsymmetric() };
            let sol = solve_linear(&a, &b, &spec).unwrap();
            assert!(rel_err(&sol.x, &x_true) < 1e-8, "{pc:?}");
        }
    }

    #[test]
    fn non_convergence_reports_residual() {
        let a = CsrMatrix::from_dense(&random_spd(40, 2));
        let b = vec![1.0; 40];
        let spec = LinearSolveSpec { max_iters: 2, ..LinearSolveSpec::symmetric() };
        match solve_linear(&a, &b, &spec) {
            Err(Error::LinearSolve { iterations, residual }) => {
                assert_eq!(iterations, 2);
                assert!(residual > spec.rel_tol);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let a = CsrMatrix::identity(2);
        let bad = [
            LinearSolveSpec { rel_tol: 0.0, ..LinearSolveSpec::symmetric() },
            LinearSolveSpec { rel_tol: 1.5, ..LinearSolveSpec::symmetric() },
            LinearSolveSpec { max_iters: 0, ..LinearSolveSpec::symmetric() },
            LinearSolveSpec { preconditioner: Preconditioner::Ilu0, ..LinearSolveSpec::symmetric() },
        ];
        for spec in bad {
            assert!(matches!(solve_linear(&a, &[1.0, 1.0], &spec), Err(Error::InvalidArgument(_))));
        }
        let nonsym = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 0.5), (1, 1, 1.0)]).unwrap();
        assert!(solve_linear(&nonsym, &[1.0, 1.0], &LinearSolveSpec::direct()).is_err());
    }
}
