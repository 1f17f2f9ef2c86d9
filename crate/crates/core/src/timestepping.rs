//! Fine-grid time integration: the coupled fully implicit Newton scheme (FI), the
//! semi-implicit scheme with lagged reaction (SI), and an RK4 integrator for the
//! diffusion-free ODE.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fvm::{
    assemble_diffusion, assemble_transmissibilities, eval_reaction, reaction_jacobian_into, CoefficientField,
    ReactionField, ReactionParams, SpeciesState,
};
use crate::grid::{FineGrid, SubdomainMap};
use crate::linalg::{CsrMatrix, LinearSolveSpec, PreparedSolver};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    #[serde(alias = "FI")]
    Fi,
    #[serde(alias = "SI")]
    Si,
    #[serde(alias = "MS")]
    Ms,
}

impl Scheme {
    pub fn label(self) -> &'static str {
        match self {
            Scheme::Fi => "FI",
            Scheme::Si => "SI",
            Scheme::Ms => "MS",
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSteppingConfig {
    pub tau: f64,
    pub n_steps: usize,
    /// Newton stops once every species' volume-weighted L2 norm of `δu` is below this.
    #[serde(default = "default_newton_tol")]
    pub newton_tol: f64,
    #[serde(default = "default_newton_max_iters")]
    pub newton_max_iters: usize,
    /// Per-species SPD systems of SI and the fine reference.
    #[serde(default = "LinearSolveSpec::symmetric")]
    pub symmetric_solver: LinearSolveSpec,
    /// Coupled Newton systems of FI.
    #[serde(default = "LinearSolveSpec::nonsymmetric")]
    pub coupled_solver: LinearSolveSpec,
}

fn default_newton_tol() -> f64 {
    1e-8
}

fn default_newton_max_iters() -> usize {
    20
}

impl TimeSteppingConfig {
    /// `n_steps` uniform steps up to `t_max`.
    pub fn new(t_max: f64, n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::invalid("n_steps must be at least 1"));
        }
        let cfg = TimeSteppingConfig {
            tau: t_max / n_steps as f64,
            n_steps,
            newton_tol: default_newton_tol(),
            newton_max_iters: default_newton_max_iters(),
            symmetric_solver: LinearSolveSpec::symmetric(),
            coupled_solver: LinearSolveSpec::nonsymmetric(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn t_max(&self) -> f64 {
        self.tau * self.n_steps as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::invalid(format!("time step must be positive, got {}", self.tau)));
        }
        if self.n_steps == 0 || self.newton_max_iters == 0 {
            return Err(Error::invalid("step and Newton iteration counts must be at least 1"));
        }
        if !(self.newton_tol > 0.0) {
            return Err(Error::invalid("Newton tolerance must be positive"));
        }
        self.symmetric_solver.validate()?;
        self.coupled_solver.validate()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    /// Zero for the linear schemes.
    pub newton_iterations: usize,
    pub linear_iterations: usize,
    /// Final Newton update norm (FI only).
    pub residual_norm: f64,
    pub wall_time: f64,
}

/// Assembled fine-grid operators: cell volumes, one diffusion matrix per species and
/// the per-cell reaction coefficients.
#[derive(Debug, Clone)]
pub struct FineProblem {
    pub volumes: Vec<f64>,
    pub diffusion: Vec<CsrMatrix>,
    pub reaction: ReactionField,
}

impl FineProblem {
    pub fn assemble(grid: &FineGrid, subdomains: &SubdomainMap, coeff: &CoefficientField) -> Result<Self> {
        coeff.validate()?;
        let diffusion = (0..coeff.n_species())
            .map(|k| {
                let t = assemble_transmissibilities(grid, subdomains, coeff, k)?;
                assemble_diffusion(grid, &t)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FineProblem {
            volumes: grid.cell_volumes().to_vec(),
            diffusion,
            reaction: ReactionField::new(coeff, subdomains),
        })
    }

    pub fn n_species(&self) -> usize {
        self.diffusion.len()
    }

    pub fn n_cells(&self) -> usize {
        self.volumes.len()
    }

    fn check_state(&self, state: &SpeciesState) -> Result<()> {
        if state.n_species() != self.n_species() {
            return Err(Error::DimensionMismatch { expected: self.n_species(), found: state.n_species() });
        }
        if state.n_cells() != self.n_cells() {
            return Err(Error::DimensionMismatch { expected: self.n_cells(), found: state.n_cells() });
        }
        Ok(())
    }

    /// `M/τ + A^k`.
    fn implicit_matrix(&self, k: usize, tau: f64) -> Result<CsrMatrix> {
        let mass = CsrMatrix::from_diagonal(&self.volumes);
        self.diffusion[k].add_scaled(1.0, &mass, 1.0 / tau)
    }

    /// Total amount `Σ_i |K_i| u_i^k` of each species.
    pub fn masses(&self, state: &SpeciesState) -> Vec<f64> {
        state.u.iter().map(|f| f.iter().zip(&self.volumes).map(|(u, v)| u * v).sum()).collect()
    }
}

/// Advances a state by one time step.
pub trait Stepper {
    fn advance(&mut self, current: &SpeciesState) -> Result<(SpeciesState, StepReport)>;
}

/// Semi-implicit scheme: `(M/τ + A^k) u^k = M ǔ^k/τ + |K| R^k(ǔ)`, species decoupled.
#[derive(Debug, Clone)]
pub struct SiStepper {
    problem: FineProblem,
    solvers: Vec<PreparedSolver>,
    tau: f64,
}

impl SiStepper {
    pub fn new(problem: FineProblem, cfg: &TimeSteppingConfig) -> Result<Self> {
        cfg.validate()?;
        let solvers = (0..problem.n_species())
            .map(|k| {
                problem
                    .implicit_matrix(k, cfg.tau)
                    .and_then(|a| PreparedSolver::new(a, cfg.symmetric_solver))
                    .map_err(|e| e.in_species(k))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SiStepper { problem, solvers, tau: cfg.tau })
    }

    pub fn problem(&self) -> &FineProblem {
        &self.problem
    }
}

impl Stepper for SiStepper {
    fn advance(&mut self, current: &SpeciesState) -> Result<(SpeciesState, StepReport)> {
        step_si(&self.problem, &self.solvers, self.tau, current)
    }
}

fn step_si(
    problem: &FineProblem,
    solvers: &[PreparedSolver],
    tau: f64,
    current: &SpeciesState,
) -> Result<(SpeciesState, StepReport)> {
    let start = Instant::now();
    problem.check_state(current)?;
    let (l, n) = (problem.n_species(), problem.n_cells());
    let mut rhs = vec![vec![0.0; n]; l];
    problem.reaction.volume_weighted_rates(current, &problem.volumes, &mut rhs);
    let mut report = StepReport::default();
    let mut next = Vec::with_capacity(l);
    for (k, (solver, b)) in solvers.iter().zip(rhs.iter_mut()).enumerate() {
        for ((bi, ui), vi) in b.iter_mut().zip(&current.u[k]).zip(&problem.volumes) {
            *bi += vi * ui / tau;
        }
        let sol = solver.solve(b, Some(&current.u[k])).map_err(|e| e.in_species(k))?;
        report.linear_iterations += sol.iterations;
        next.push(sol.x);
    }
    let next = SpeciesState { u: next };
    next.check_finite()?;
    report.wall_time = start.elapsed().as_secs_f64();
    Ok((next, report))
}

/// Fully implicit scheme solved by Newton's method on the coupled `L·N` system, with
/// unknowns interleaved per cell (`cell * L + k`).
#[derive(Debug, Clone)]
pub struct FiStepper {
    problem: FineProblem,
    /// `M/τ + A` in interleaved ordering, with explicit zeros for every cell's
    /// cross-species block.
    linear_part: CsrMatrix,
    /// Value index of entry `(k, j)` of cell `i`'s reaction block: `[i * L * L + k * L + j]`.
    block_pos: Vec<usize>,
    tau: f64,
    newton_tol: f64,
    newton_max_iters: usize,
    solver: LinearSolveSpec,
}

impl FiStepper {
    pub fn new(problem: FineProblem, cfg: &TimeSteppingConfig) -> Result<Self> {
        cfg.validate()?;
        let (l, n) = (problem.n_species(), problem.n_cells());
        let mut triplets = Vec::new();
        for k in 0..l {
            let a = problem.implicit_matrix(k, cfg.tau)?;
            for row in 0..n {
                let (cols, vals) = a.row(row);
                for (&c, &v) in cols.iter().zip(vals) {
                    triplets.push((row * l + k, c * l + k, v));
                }
            }
        }
        for i in 0..n {
            for k in 0..l {
                for j in 0..l {
                    if j != k {
                        triplets.push((i * l + k, i * l + j, 0.0));
                    }
                }
            }
        }
        let linear_part = CsrMatrix::from_triplets(l * n, l * n, &triplets)?;
        let mut block_pos = Vec::with_capacity(n * l * l);
        for i in 0..n {
            for k in 0..l {
                let row = i * l + k;
                let start = linear_part.row_ptr()[row];
                let (cols, _) = linear_part.row(row);
                for j in 0..l {
                    let offset = cols.binary_search(&(i * l + j)).expect("block entry present in pattern");
                    block_pos.push(start + offset);
                }
            }
        }
        Ok(FiStepper {
            problem,
            linear_part,
            block_pos,
            tau: cfg.tau,
            newton_tol: cfg.newton_tol,
            newton_max_iters: cfg.newton_max_iters,
            solver: cfg.coupled_solver,
        })
    }

    pub fn problem(&self) -> &FineProblem {
        &self.problem
    }

    /// Largest per-species volume-weighted L2 norm of an interleaved vector.
    fn update_norm(&self, delta: &[f64]) -> f64 {
        let l = self.problem.n_species();
        let mut sums = vec![0.0; l];
        for (i, vol) in self.problem.volumes.iter().enumerate() {
            for (k, s) in sums.iter_mut().enumerate() {
                let d = delta[i * l + k];
                *s += vol * d * d;
            }
        }
        sums.into_iter().map(f64::sqrt).fold(0.0, f64::max)
    }

    /// Newton residual `F(u) = (M/τ + A) u − M ǔ/τ − |K| R(u)` and its Jacobian.
    fn linearize(&self, u: &[f64], history: &[f64], f: &mut [f64], jac: &mut CsrMatrix) -> Result<()> {
        let l = self.problem.n_species();
        self.linear_part.spmv_into(u, f)?;
        jac.values_mut().copy_from_slice(self.linear_part.values());
        let values = jac.values_mut();
        let mut row = vec![0.0; l];
        for (i, vol) in self.problem.volumes.iter().enumerate() {
            let local = &u[i * l..(i + 1) * l];
            let params = self.problem.reaction.at(i);
            for k in 0..l {
                let idx = i * l + k;
                f[idx] -= vol * (history[idx] / self.tau + eval_reaction(local, params, k));
                reaction_jacobian_into(local, params, k, &mut row);
                for (j, d) in row.iter().enumerate() {
                    values[self.block_pos[(i * l + k) * l + j]] -= vol * d;
                }
            }
        }
        Ok(())
    }
}

impl Stepper for FiStepper {
    fn advance(&mut self, current: &SpeciesState) -> Result<(SpeciesState, StepReport)> {
        let start = Instant::now();
        self.problem.check_state(current)?;
        let (l, n) = (self.problem.n_species(), self.problem.n_cells());
        let mut history = vec![0.0; l * n];
        for (k, field) in current.u.iter().enumerate() {
            for (i, &v) in field.iter().enumerate() {
                history[i * l + k] = v;
            }
        }
        let mut u = history.clone();
        let mut f = vec![0.0; l * n];
        let mut jac = self.linear_part.clone();
        let mut report = StepReport::default();
        let mut norm = f64::INFINITY;
        for s in 1..=self.newton_max_iters {
            self.linearize(&u, &history, &mut f, &mut jac)?;
            f.iter_mut().for_each(|v| *v = -*v);
            let solver = PreparedSolver::new(jac.clone(), self.solver)?;
            let delta = solver.solve(&f, None)?;
            report.linear_iterations += delta.iterations;
            u.iter_mut().zip(&delta.x).for_each(|(ui, di)| *ui += di);
            norm = self.update_norm(&delta.x);
            log::trace!("Newton iteration {s}: update norm {norm:.3e}");
            if !norm.is_finite() {
                break;
            }
            if norm < self.newton_tol {
                report.newton_iterations = s;
                report.residual_norm = norm;
                let state = SpeciesState {
                    u: (0..l).map(|k| (0..n).map(|i| u[i * l + k]).collect()).collect(),
                };
                state.check_finite()?;
                report.wall_time = start.elapsed().as_secs_f64();
                return Ok((state, report));
            }
        }
        Err(Error::NewtonDivergence { iterations: self.newton_max_iters, update_norm: norm })
    }
}

/// Result of [`solve_transient`].
#[derive(Debug, Clone)]
pub struct Transient {
    pub final_state: SpeciesState,
    pub reports: Vec<StepReport>,
    /// Sum of the per-step wall times; observer work is excluded.
    pub wall_time: f64,
}

impl Transient {
    pub fn total_newton_iterations(&self) -> usize {
        self.reports.iter().map(|r| r.newton_iterations).sum()
    }

    pub fn total_linear_iterations(&self) -> usize {
        self.reports.iter().map(|r| r.linear_iterations).sum()
    }
}

/// Applies `stepper` `n_steps` times. `observer(step, time, state)` sees the initial
/// state (step 0) and every subsequent level.
pub fn solve_transient(
    stepper: &mut dyn Stepper,
    initial: &SpeciesState,
    n_steps: usize,
    tau: f64,
    observer: &mut dyn FnMut(usize, f64, &SpeciesState),
) -> Result<Transient> {
    observer(0, 0.0, initial);
    let mut state = initial.clone();
    let mut reports = Vec::with_capacity(n_steps);
    let mut wall_time = 0.0;
    for step in 1..=n_steps {
        let (next, report) = stepper.advance(&state).map_err(|e| e.at_step(step))?;
        wall_time += report.wall_time;
        reports.push(report);
        state = next;
        observer(step, step as f64 * tau, &state);
    }
    Ok(Transient { final_state: state, reports, wall_time })
}

/// Trajectory of the diffusion-free system, `values[n][k]` at `times[n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeTrajectory {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl OdeTrajectory {
    pub fn last(&self) -> &[f64] {
        self.values.last().expect("trajectory holds the initial value")
    }
}

/// Integrates `du^k/dt = R^k(u)` with `n_steps` classical RK4 steps.
pub fn solve_ode_reference(params: &ReactionParams, u0: &[f64], t_max: f64, n_steps: usize) -> Result<OdeTrajectory> {
    if u0.len() != params.n_species() {
        return Err(Error::DimensionMismatch { expected: params.n_species(), found: u0.len() });
    }
    if n_steps == 0 || !(t_max >= 0.0) {
        return Err(Error::invalid("ODE reference needs at least one step and t_max >= 0"));
    }
    let h = t_max / n_steps as f64;
    let rate = |u: &[f64]| -> Vec<f64> { (0..u.len()).map(|k| eval_reaction(u, params, k)).collect() };
    let axpy = |u: &[f64], a: f64, d: &[f64]| -> Vec<f64> { u.iter().zip(d).map(|(x, y)| x + a * y).collect() };
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut values = Vec::with_capacity(n_steps + 1);
    let mut u = u0.to_vec();
    times.push(0.0);
    values.push(u.clone());
    for n in 1..=n_steps {
        let k1 = rate(&u);
        let k2 = rate(&axpy(&u, h / 2.0, &k1));
        let k3 = rate(&axpy(&u, h / 2.0, &k2));
        let k4 = rate(&axpy(&u, h, &k3));
        for (i, ui) in u.iter_mut().enumerate() {
            *ui += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        times.push(n as f64 * h);
        values.push(u.clone());
    }
    Ok(OdeTrajectory { times, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fvm::Piecewise;
    use crate::grid::{build_structured_grid, mark_inclusions, Circle, Subdomain};
    use rand::{Rng, SeedableRng};

    fn logistic(r: f64) -> CoefficientField {
        CoefficientField {
            diffusion: vec![Piecewise::uniform(1.0)],
            growth: vec![Piecewise::uniform(r)],
            competition: vec![vec![Piecewise::uniform(0.0)]],
        }
    }

    fn single_cell(coeff: &CoefficientField) -> FineProblem {
        let g = build_structured_grid(1, 1, 1.0, 1.0).unwrap();
        FineProblem::assemble(&g, &SubdomainMap::uniform(1, Subdomain::Background), coeff).unwrap()
    }

    fn cfg(tau: f64, n_steps: usize) -> TimeSteppingConfig {
        TimeSteppingConfig::new(tau * n_steps as f64, n_steps).unwrap()
    }

    fn test1(with_reaction: bool) -> CoefficientField {
        let c = CoefficientField {
            diffusion: vec![Piecewise::new(1e-4, 1e-2), Piecewise::new(1e-2, 1e-4)],
            growth: vec![Piecewise::new(0.15, 0.1), Piecewise::new(0.1, 0.15)],
            competition: vec![
                vec![Piecewise::uniform(0.0), Piecewise::new(0.055, 0.05)],
                vec![Piecewise::new(0.05, 0.055), Piecewise::uniform(0.0)],
            ],
        };
        if with_reaction {
            c
        } else {
            c.without_reaction()
        }
    }

    fn heterogeneous(nx: usize, coeff: &CoefficientField) -> FineProblem {
        let g = build_structured_grid(nx, nx, 1.0, 1.0).unwrap();
        let s = mark_inclusions(
            &g,
            &[Circle { center: [0.3, 0.3], radius: 0.15 }, Circle { center: [0.7, 0.6], radius: 0.2 }],
        );
        FineProblem::assemble(&g, &s, coeff).unwrap()
    }

    fn random_state(l: usize, n: usize, seed: u64) -> SpeciesState {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        SpeciesState { u: (0..l).map(|_| (0..n).map(|_| rng.gen_range(0.0..1.0)).collect()).collect() }
    }

    #[test]
    fn si_single_cell_logistic() {
        let mut si = SiStepper::new(single_cell(&logistic(0.15)), &cfg(0.5, 1)).unwrap();
        let (u, _) = si.advance(&SpeciesState::uniform(&[0.5], 1)).unwrap();
        assert!((u.u[0][0] - 0.51875).abs() < 1e-12);
    }

    #[test]
    fn fi_single_cell_logistic() {
        let mut fi = FiStepper::new(single_cell(&logistic(0.15)), &cfg(0.5, 1)).unwrap();
        let (u, report) = fi.advance(&SpeciesState::uniform(&[0.5], 1)).unwrap();
        // Positive root of 0.075 u^2 + 0.925 u - 0.5 = 0.
        let root = (-0.925 + (0.925f64 * 0.925 + 4.0 * 0.075 * 0.5).sqrt()) / (2.0 * 0.075);
        assert!((root - 0.5187235).abs() < 1e-6);
        assert!((u.u[0][0] - root).abs() < 1e-12);
        assert!(report.newton_iterations >= 2 && report.newton_iterations <= 4);
    }

    #[test]
    fn constant_state_is_steady_without_reaction() {
        let p = heterogeneous(12, &test1(false));
        let mut si = SiStepper::new(p, &cfg(0.5, 1)).unwrap();
        let u0 = SpeciesState::uniform(&[0.3, 0.8], 144);
        let (u, _) = si.advance(&u0).unwrap();
        for k in 0..2 {
            assert!(u.u[k].iter().zip(&u0.u[k]).all(|(a, b)| (a - b).abs() < 1e-12));
        }
    }

    #[test]
    fn si_conserves_mass_without_reaction() {
        let p = heterogeneous(20, &test1(false));
        let masses0 = p.masses(&random_state(2, 400, 3));
        let mut si = SiStepper::new(p, &cfg(0.5, 20)).unwrap();
        let out = solve_transient(&mut si, &random_state(2, 400, 3), 20, 0.5, &mut |_, _, _| {}).unwrap();
        let masses = si.problem().masses(&out.final_state);
        for k in 0..2 {
            let drift = (masses[k] - masses0[k]).abs() / masses0[k];
            assert!(drift <= 1e-9, "species {k}: drift {drift:e}");
        }
    }

    #[test]
    fn comparison_principle_without_reaction() {
        let p = heterogeneous(16, &test1(false));
        let mut si = SiStepper::new(p, &cfg(0.5, 1)).unwrap();
        let mut state = random_state(2, 256, 9);
        for _ in 0..10 {
            let (next, _) = si.advance(&state).unwrap();
            for k in 0..2 {
                let (lo0, hi0) = min_max(&state.u[k]);
                let (lo1, hi1) = min_max(&next.u[k]);
                assert!(lo1 >= lo0 - 1e-9 && hi1 <= hi0 + 1e-9);
            }
            state = next;
        }
    }

    fn min_max(v: &[f64]) -> (f64, f64) {
        v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
    }

    #[test]
    fn fi_matches_si_for_linear_problem() {
        let u0 = random_state(2, 144, 5);
        let mut si = SiStepper::new(heterogeneous(12, &test1(false)), &cfg(0.5, 1)).unwrap();
        let mut fi = FiStepper::new(heterogeneous(12, &test1(false)), &cfg(0.5, 1)).unwrap();
        let (a, _) = si.advance(&u0).unwrap();
        let (b, report) = fi.advance(&u0).unwrap();
        assert_eq!(report.newton_iterations, 2);
        assert!(report.residual_norm < 1e-8);
        for k in 0..2 {
            assert!(a.u[k].iter().zip(&b.u[k]).all(|(x, y)| (x - y).abs() < 1e-8));
        }
    }

    #[test]
    fn newton_updates_decrease() {
        let p = heterogeneous(12, &test1(true));
        let config = TimeSteppingConfig { newton_tol: 1e-13, ..cfg(0.5, 1) };
        let mut fi = FiStepper::new(p, &config).unwrap();
        let u0 = random_state(2, 144, 11);
        let (l, n) = (2, 144);
        let mut history = vec![0.0; l * n];
        for k in 0..l {
            for i in 0..n {
                history[i * l + k] = u0.u[k][i];
            }
        }
        let mut u = history.clone();
        let mut f = vec![0.0; l * n];
        let mut jac = fi.linear_part.clone();
        let mut norms = Vec::new();
        for _ in 0..4 {
            fi.linearize(&u, &history, &mut f, &mut jac).unwrap();
            f.iter_mut().for_each(|v| *v = -*v);
            let d = crate::linalg::solve_linear(&jac, &f, &LinearSolveSpec::nonsymmetric()).unwrap();
            u.iter_mut().zip(&d.x).for_each(|(a, b)| *a += b);
            norms.push(fi.update_norm(&d.x));
        }
        assert!(norms.windows(2).take(3).all(|w| w[1] < w[0] || w[1] < 1e-14), "{norms:?}");
        assert!(fi.advance(&u0).is_ok());
    }

    #[test]
    fn fi_newton_jacobian_matches_finite_differences() {
        let p = heterogeneous(4, &test1(true));
        let fi = FiStepper::new(p, &cfg(0.5, 1)).unwrap();
        let n = 32;
        let history: Vec<f64> = random_state(1, n, 2).u.remove(0);
        let u: Vec<f64> = random_state(1, n, 4).u.remove(0);
        let mut f0 = vec![0.0; n];
        let mut jac = fi.linear_part.clone();
        fi.linearize(&u, &history, &mut f0, &mut jac).unwrap();
        let dense = jac.to_dense();
        let h = 1e-6;
        let mut scratch = fi.linear_part.clone();
        for col in 0..n {
            let mut up = u.clone();
            let mut um = u.clone();
            up[col] += h;
            um[col] -= h;
            let (mut fp, mut fm) = (vec![0.0; n], vec![0.0; n]);
            fi.linearize(&up, &history, &mut fp, &mut scratch).unwrap();
            fi.linearize(&um, &history, &mut fm, &mut scratch).unwrap();
            for row in 0..n {
                let fd = (fp[row] - fm[row]) / (2.0 * h);
                assert!((fd - dense[(row, col)]).abs() < 1e-7, "({row}, {col})");
            }
        }
    }

    #[test]
    fn newton_cap_is_reported() {
        let config = TimeSteppingConfig { newton_max_iters: 1, ..cfg(0.5, 1) };
        let mut fi = FiStepper::new(single_cell(&logistic(0.15)), &config).unwrap();
        let err = fi.advance(&SpeciesState::uniform(&[0.5], 1)).unwrap_err();
        assert!(matches!(err, Error::NewtonDivergence { iterations: 1, .. }));
    }

    #[test]
    fn zero_steps_return_initial_state() {
        let mut si = SiStepper::new(single_cell(&logistic(0.15)), &cfg(0.5, 1)).unwrap();
        let u0 = SpeciesState::uniform(&[0.5], 1);
        let mut seen = Vec::new();
        let out = solve_transient(&mut si, &u0, 0, 0.5, &mut |s, t, _| seen.push((s, t))).unwrap();
        assert_eq!(out.final_state, u0);
        assert!(out.reports.is_empty());
        assert_eq!(seen, vec![(0, 0.0)]);
    }

    #[test]
    fn step_errors_carry_the_step_index() {
        let mut si = SiStepper::new(single_cell(&logistic(0.15)), &cfg(0.5, 1)).unwrap();
        let bad = SpeciesState::uniform(&[0.5, 0.5], 1);
        let err = solve_transient(&mut si, &bad, 3, 0.5, &mut |_, _, _| {}).unwrap_err();
        assert!(matches!(err, Error::Step { step: 1, .. }));
    }

    #[test]
    fn si_is_first_order_against_fi() {
        let coeff = test1(true);
        let u0 = SpeciesState::uniform(&[0.5, 0.5], 64);
        let run = |fi: bool, n_steps: usize| {
            let p = heterogeneous(8, &coeff);
            let c = TimeSteppingConfig::new(50.0, n_steps).unwrap();
            let mut stepper: Box<dyn Stepper> = if fi {
                Box::new(FiStepper::new(p, &c).unwrap())
            } else {
                Box::new(SiStepper::new(p, &c).unwrap())
            };
            solve_transient(stepper.as_mut(), &u0, n_steps, c.tau, &mut |_, _, _| {}).unwrap().final_state
        };
        let reference = run(true, 800);
        let err = |s: &SpeciesState| -> f64 {
            s.u.iter().zip(&reference.u).flat_map(|(a, b)| a.iter().zip(b)).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
        };
        let e1 = err(&run(false, 100));
        let e2 = err(&run(false, 200));
        let ratio = e1 / e2;
        assert!((1.6..2.4).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn ode_zero_state_is_fixed() {
        let p = ReactionParams { growth: vec![0.15, 0.1], competition: vec![vec![0.0, 0.055], vec![0.05, 0.0]] };
        let traj = solve_ode_reference(&p, &[0.0, 0.0], 10.0, 10).unwrap();
        assert!(traj.values.iter().all(|v| v == &[0.0, 0.0]));
    }

    #[test]
    fn ode_logistic_rises_monotonically_to_one() {
        let p = ReactionParams { growth: vec![0.4], competition: vec![vec![0.0]] };
        let traj = solve_ode_reference(&p, &[0.5], 100.0, 1000).unwrap();
        assert!(traj.values.windows(2).all(|w| w[1][0] >= w[0][0] && w[1][0] <= 1.0));
        assert!((traj.last()[0] - 1.0).abs() < 1e-6);
        // Exact solution 1 / (1 + e^{-rt}) at t = 5.
        let exact = 1.0 / (1.0 + (-0.4f64 * 5.0).exp());
        assert!((traj.values[50][0] - exact).abs() < 1e-8);
    }

    #[test]
    fn ode_reaches_coexistence_equilibrium() {
        let p = ReactionParams { growth: vec![0.15, 0.1], competition: vec![vec![0.0, 0.055], vec![0.05, 0.0]] };
        let traj = solve_ode_reference(&p, &[0.5, 0.5], 500.0, 5000).unwrap();
        let u1 = 0.095 / 0.1225;
        let u2 = 1.0 - 0.5 * u1;
        let last = traj.last();
        assert!((last[0] - u1).abs() < 1e-3 && (last[1] - u2).abs() < 1e-3, "{last:?}");
    }

    #[test]
    fn config_validation() {
        assert!(TimeSteppingConfig::new(50.0, 0).is_err());
        assert!((TimeSteppingConfig::new(50.0, 100).unwrap().tau - 0.5).abs() < 1e-15);
        let mut c = cfg(0.5, 1);
        c.newton_tol = 0.0;
        assert!(c.validate().is_err());
        let parsed: TimeSteppingConfig = serde_json::from_str(r#"{"tau": 0.25, "n_steps": 4}"#).unwrap();
        assert_eq!(parsed.newton_max_iters, 20);
        assert_eq!(parsed.t_max(), 1.0);
        assert_eq!(serde_json::from_str::<Scheme>("\"FI\"").unwrap(), Scheme::Fi);
    }
}
