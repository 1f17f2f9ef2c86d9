use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ReferenceConfig};
use super::metrics::{compute_averages, compute_relative_l2};
use super::output::{write_outputs, OutputSet};
use crate::error::{Error, Result};
use crate::fvm::{CoefficientField, SpeciesState};
use crate::gmsfem::{basis_fingerprint, compute_local_spectra, LocalSpectralResult, MsStepper, MultiscaleModel};
use crate::grid::{CoarseGrid, FineGrid, GeometryConfig, PartitionOfUnity, SubdomainMap};
use crate::linalg::LinearSolveSpec;
use crate::timestepping::{solve_transient, FiStepper, FineProblem, Scheme, SiStepper, Stepper, TimeSteppingConfig};

/// Subdomain averages of every species at one time level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageRow {
    pub step: usize,
    pub time: f64,
    /// `ū^k_m`, `None` when there is no background cell.
    pub background: Vec<Option<f64>>,
    /// `ū^k_c`, `None` when there is no inclusion cell.
    pub inclusion: Vec<Option<f64>>,
}

/// Everything derived from a config before time stepping starts.
#[derive(Debug, Clone)]
pub struct Setup {
    pub config: ExperimentConfig,
    pub grid: FineGrid,
    pub subdomains: SubdomainMap,
    pub coefficients: CoefficientField,
    pub problem: FineProblem,
    pub initial: SpeciesState,
}

impl Setup {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let geometry = config.geometry.build()?;
        let coefficients = config.resolved_coefficients()?;
        let problem = FineProblem::assemble(&geometry.grid, &geometry.subdomains, &coefficients)?;
        let initial = SpeciesState::uniform(&config.resolved_initial(coefficients.n_species())?, geometry.grid.n_cells());
        Ok(Setup {
            config: config.clone(),
            grid: geometry.grid,
            subdomains: geometry.subdomains,
            coefficients,
            problem,
            initial,
        })
    }

    /// Coarse grid, partition of unity and basis fingerprint.
    pub fn coarse(&self) -> Result<(CoarseGrid, PartitionOfUnity, String)> {
        let (coarse, pou) = self.config.geometry.build_coarse(&self.grid)?;
        let hash = basis_fingerprint(&self.grid, &self.subdomains, &coarse, &self.coefficients);
        Ok((coarse, pou, hash))
    }

    pub fn averages(&self, step: usize, time: f64, state: &SpeciesState) -> AverageRow {
        let (background, inclusion) = state
            .u
            .iter()
            .map(|u| compute_averages(u, self.grid.cell_volumes(), &self.subdomains))
            .unzip();
        AverageRow { step, time, background, inclusion }
    }

    /// Relative L2 error of every species against `reference`.
    pub fn errors(&self, state: &SpeciesState, reference: &SpeciesState) -> Result<Vec<f64>> {
        state
            .u
            .iter()
            .zip(&reference.u)
            .map(|(u, r)| compute_relative_l2(u, r, self.grid.cell_volumes()))
            .collect()
    }
}

/// Result of one transient run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub scheme: Scheme,
    pub basis_count: Option<usize>,
    /// Unknowns per species.
    pub dof: usize,
    pub tau: f64,
    pub n_steps: usize,
    pub averages: Vec<AverageRow>,
    pub final_state: SpeciesState,
    pub snapshots: Vec<(usize, f64, SpeciesState)>,
    pub newton_iterations: usize,
    pub linear_iterations: usize,
    pub offline_time: f64,
    /// Time spent inside the steppers.
    pub online_time: f64,
}

type Snapshots = Vec<(usize, f64, SpeciesState)>;

fn drive(
    setup: &Setup,
    stepper: &mut dyn Stepper,
    initial: &SpeciesState,
    stepping: &TimeSteppingConfig,
    snapshot_steps: &[usize],
) -> Result<(crate::timestepping::Transient, Vec<AverageRow>, Snapshots)> {
    let mut averages = Vec::with_capacity(stepping.n_steps + 1);
    let mut snapshots = Vec::new();
    let transient = solve_transient(stepper, initial, stepping.n_steps, stepping.tau, &mut |step, time, state| {
        averages.push(setup.averages(step, time, state));
        if snapshot_steps.contains(&step) {
            snapshots.push((step, time, state.clone()));
        }
    })?;
    Ok((transient, averages, snapshots))
}

/// Fine-grid run with the FI or SI scheme.
pub fn run_fine(setup: &Setup, scheme: Scheme, stepping: &TimeSteppingConfig, snapshot_steps: &[usize]) -> Result<RunOutcome> {
    let mut stepper: Box<dyn Stepper> = match scheme {
        Scheme::Si => Box::new(SiStepper::new(setup.problem.clone(), stepping)?),
        Scheme::Fi => Box::new(FiStepper::new(setup.problem.clone(), stepping)?),
        Scheme::Ms => return Err(Error::invalid("multiscale runs need a basis; use run_multiscale")),
    };
    let (transient, averages, snapshots) = drive(setup, stepper.as_mut(), &setup.initial, stepping, snapshot_steps)?;
    Ok(RunOutcome {
        scheme,
        basis_count: None,
        dof: setup.grid.n_cells(),
        tau: stepping.tau,
        n_steps: stepping.n_steps,
        averages,
        newton_iterations: transient.total_newton_iterations(),
        linear_iterations: transient.total_linear_iterations(),
        final_state: transient.final_state,
        snapshots,
        offline_time: 0.0,
        online_time: transient.wall_time,
    })
}

/// Online multiscale run on a prebuilt model. The reported online time includes the
/// initial projection.
pub fn run_multiscale(
    setup: &Setup,
    model: &MultiscaleModel,
    stepping: &TimeSteppingConfig,
    coarse_solver: LinearSolveSpec,
    snapshot_steps: &[usize],
) -> Result<RunOutcome> {
    let start = Instant::now();
    let mut stepper = MsStepper::new(model, &setup.problem, stepping, coarse_solver, &setup.initial)?;
    let initial = stepper.initial_fine()?;
    let setup_time = start.elapsed().as_secs_f64();
    let (transient, averages, snapshots) = drive(setup, &mut stepper, &initial, stepping, snapshot_steps)?;
    Ok(RunOutcome {
        scheme: Scheme::Ms,
        basis_count: Some(model.basis_count),
        dof: model.dof(),
        tau: stepping.tau,
        n_steps: stepping.n_steps,
        averages,
        newton_iterations: 0,
        linear_iterations: transient.total_linear_iterations(),
        final_state: transient.final_state,
        snapshots,
        offline_time: 0.0,
        online_time: setup_time + transient.wall_time,
    })
}

/// Local spectra of every species, `spectra[k][node]`.
pub fn compute_spectra(setup: &Setup, coarse: &CoarseGrid, count: usize) -> Result<Vec<Vec<LocalSpectralResult>>> {
    setup
        .problem
        .diffusion
        .iter()
        .enumerate()
        .map(|(k, a)| compute_local_spectra(a, coarse, count).map_err(|e| e.in_species(k)))
        .collect()
}

/// Builds the offline basis with `count` functions per node, returning it with its
/// build time.
pub fn build_model(setup: &Setup, count: usize) -> Result<(MultiscaleModel, f64)> {
    let start = Instant::now();
    let (coarse, pou, hash) = setup.coarse()?;
    let model = MultiscaleModel::build(&setup.problem, &coarse, &pou, count, hash)?;
    Ok((model, start.elapsed().as_secs_f64()))
}

fn load_or_build_model(setup: &Setup) -> Result<(MultiscaleModel, f64)> {
    let count = setup.config.resolved_basis_count();
    let Some(path) = &setup.config.artifact else {
        return build_model(setup, count);
    };
    let start = Instant::now();
    let (_, _, hash) = setup.coarse()?;
    let model = MultiscaleModel::load(path, &hash)?;
    let model = match count.cmp(&model.basis_count) {
        std::cmp::Ordering::Equal => model,
        std::cmp::Ordering::Less => model.truncate(count)?,
        std::cmp::Ordering::Greater => {
            return Err(Error::Artifact(format!(
                "{} holds {} basis functions per node, {count} requested",
                path.display(),
                model.basis_count
            )))
        }
    };
    Ok((model, start.elapsed().as_secs_f64()))
}

/// Serializable summary of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub label: String,
    pub scheme: Scheme,
    pub basis_count: Option<usize>,
    pub dof: usize,
    pub tau: f64,
    pub n_steps: usize,
    pub geometry: GeometryConfig,
    pub averages: Vec<AverageRow>,
    /// Present only when a reference run was configured.
    pub errors: Option<Vec<f64>>,
    pub reference: Option<ReferenceConfig>,
    pub newton_iterations: usize,
    pub linear_iterations: usize,
    pub offline_time: f64,
    pub online_time: f64,
    pub final_state: Vec<Vec<f64>>,
}

impl ExperimentReport {
    fn new(setup: &Setup, run: &RunOutcome, errors: Option<Vec<f64>>) -> Self {
        ExperimentReport {
            label: setup.config.label(),
            scheme: run.scheme,
            basis_count: run.basis_count,
            dof: run.dof,
            tau: run.tau,
            n_steps: run.n_steps,
            geometry: setup.config.geometry.clone(),
            averages: run.averages.clone(),
            errors,
            reference: setup.config.reference,
            newton_iterations: run.newton_iterations,
            linear_iterations: run.linear_iterations,
            offline_time: run.offline_time,
            online_time: run.online_time,
            final_state: run.final_state.u.clone(),
        }
    }

    pub fn final_averages(&self) -> Option<&AverageRow> {
        self.averages.last()
    }
}

/// Runs the configured scheme, the optional reference, and writes outputs when an
/// output directory is set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let setup = Setup::new(cfg).map_err(|e| e.in_stage("setup"))?;
    let stepping = cfg.stepping().map_err(|e| e.in_stage("setup"))?;
    let mut run = match cfg.scheme {
        Scheme::Ms => {
            let (model, offline) = load_or_build_model(&setup).map_err(|e| e.in_stage("offline"))?;
            let mut run = run_multiscale(&setup, &model, &stepping, cfg.solver.coarse, &cfg.snapshot_steps)
                .map_err(|e| e.in_stage("online"))?;
            run.offline_time = offline;
            run
        }
        scheme => run_fine(&setup, scheme, &stepping, &cfg.snapshot_steps).map_err(|e| e.in_stage("solve"))?,
    };
    let errors = match &cfg.reference {
        Some(r) => {
            let ref_stepping = cfg.stepping_with(r.step_multiplier).map_err(|e| e.in_stage("reference"))?;
            let reference = run_fine(&setup, r.scheme, &ref_stepping, &[]).map_err(|e| e.in_stage("reference"))?;
            Some(setup.errors(&run.final_state, &reference.final_state).map_err(|e| e.in_stage("reference"))?)
        }
        None => None,
    };
    let report = ExperimentReport::new(&setup, &run, errors);
    if let Some(dir) = &cfg.output_dir {
        let snapshots = std::mem::take(&mut run.snapshots);
        let rows = vec![ErrorRow::from_report(&report)];
        write_outputs(dir, &OutputSet { averages: Some(report.averages.as_slice()), errors: &rows, report: Some(&report), snapshots: &snapshots, grid: &setup.grid, subdomains: &setup.subdomains })
            .map_err(|e| e.in_stage("output"))?;
    }
    Ok(report)
}

/// One line of `errors.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub scheme: Scheme,
    pub basis_count: Option<usize>,
    pub errors: Option<Vec<f64>>,
    pub dof: usize,
    pub offline_time: f64,
    pub online_time: f64,
}

impl ErrorRow {
    fn from_report(r: &ExperimentReport) -> Self {
        ErrorRow {
            scheme: r.scheme,
            basis_count: r.basis_count,
            errors: r.errors.clone(),
            dof: r.dof,
            offline_time: r.offline_time,
            online_time: r.online_time,
        }
    }

    fn from_run(run: &RunOutcome, errors: Option<Vec<f64>>) -> Self {
        ErrorRow {
            scheme: run.scheme,
            basis_count: run.basis_count,
            errors,
            dof: run.dof,
            offline_time: run.offline_time,
            online_time: run.online_time,
        }
    }
}

/// Fine SI reference followed by one multiscale run per basis count.
#[derive(Debug, Clone)]
pub struct SweepReport {
    pub reference: RunOutcome,
    pub runs: Vec<RunOutcome>,
    pub rows: Vec<ErrorRow>,
    /// Local eigensolves at the largest basis count, shared by all rows.
    pub spectra_time: f64,
}

/// Errors of the multiscale solution for every basis count in `counts` against the
/// fine SI solution at the configured time step. Local spectra are computed once, at
/// the largest count; each row's offline time is that shared cost plus its own
/// projection and Galerkin assembly.
pub fn run_sweep(cfg: &ExperimentConfig, counts: &[usize]) -> Result<SweepReport> {
    if counts.is_empty() || counts.contains(&0) {
        return Err(Error::Config("basis counts must be positive and non-empty".into()));
    }
    let setup = Setup::new(cfg).map_err(|e| e.in_stage("setup"))?;
    let stepping = cfg.stepping().map_err(|e| e.in_stage("setup"))?;
    let reference = run_fine(&setup, Scheme::Si, &stepping, &[]).map_err(|e| e.in_stage("reference"))?;
    let start = Instant::now();
    let (coarse, pou, hash) = setup.coarse().map_err(|e| e.in_stage("offline"))?;
    let max = *counts.iter().max().expect("non-empty");
    let spectra = compute_spectra(&setup, &coarse, max).map_err(|e| e.in_stage("offline"))?;
    let spectra_time = start.elapsed().as_secs_f64();
    let mut rows = vec![ErrorRow::from_run(&reference, None)];
    let mut runs = Vec::with_capacity(counts.len());
    for &m in counts {
        let start = Instant::now();
        let model = MultiscaleModel::from_spectra(&setup.problem, &coarse, &pou, &spectra, m, hash.clone())
            .map_err(|e| e.in_stage("offline"))?;
        let offline = spectra_time + start.elapsed().as_secs_f64();
        let mut run = run_multiscale(&setup, &model, &stepping, cfg.solver.coarse, &[]).map_err(|e| e.in_stage("online"))?;
        run.offline_time = offline;
        let errors = setup.errors(&run.final_state, &reference.final_state)?;
        log::info!("M = {m}: DOF_H = {}, errors {errors:?}, online {:.3}s", run.dof, run.online_time);
        rows.push(ErrorRow::from_run(&run, Some(errors)));
        runs.push(run);
    }
    if let Some(dir) = &cfg.output_dir {
        write_outputs(dir, &OutputSet { averages: Some(reference.averages.as_slice()), errors: &rows, report: None, snapshots: &[], grid: &setup.grid, subdomains: &setup.subdomains })
            .map_err(|e| e.in_stage("output"))?;
    }
    Ok(SweepReport { reference, runs, rows, spectra_time })
}

/// Differences between two reports on the same grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    /// Relative L2 error of `a`'s final state against `b`'s, per species.
    pub errors: Vec<f64>,
    /// Largest absolute difference of any subdomain average at matching steps.
    pub max_average_difference: f64,
}

pub fn compare_reports(a: &ExperimentReport, b: &ExperimentReport) -> Result<Comparison> {
    if a.geometry.fine != b.geometry.fine || a.geometry.domain != b.geometry.domain {
        return Err(Error::Config("reports were computed on different grids".into()));
    }
    if a.final_state.len() != b.final_state.len() {
        return Err(Error::DimensionMismatch { expected: b.final_state.len(), found: a.final_state.len() });
    }
    let grid = crate::grid::build_structured_grid(b.geometry.fine[0], b.geometry.fine[1], b.geometry.domain[0], b.geometry.domain[1])?;
    let errors = a
        .final_state
        .iter()
        .zip(&b.final_state)
        .map(|(u, r)| compute_relative_l2(u, r, grid.cell_volumes()))
        .collect::<Result<Vec<_>>>()?;
    let diff = |x: &[Option<f64>], y: &[Option<f64>]| {
        x.iter().zip(y).filter_map(|(p, q)| Some((p.as_ref()? - q.as_ref()?).abs())).fold(0.0, f64::max)
    };
    let max_average_difference = a
        .averages
        .iter()
        .zip(&b.averages)
        .filter(|(p, q)| p.step == q.step)
        .map(|(p, q)| diff(&p.background, &q.background).max(diff(&p.inclusion, &q.inclusion)))
        .fold(0.0, f64::max);
    Ok(Comparison { errors, max_average_difference })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::config::Preset;

    fn small(preset: Preset) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::preset(preset);
        cfg.geometry = cfg.geometry.with_fine(20, 20).with_coarse(4, 4);
        cfg.n_steps = 10;
        cfg
    }

    #[test]
    fn run_records_every_step() {
        let report = run_experiment(&small(Preset::Test1b)).unwrap();
        assert_eq!(report.averages.len(), 11);
        assert_eq!(report.averages[0].background, vec![Some(0.5), Some(0.5)]);
        assert!(report.errors.is_none());
        assert_eq!(report.dof, 400);
    }

    #[test]
    fn self_reference_gives_zero_error() {
        let mut cfg = small(Preset::Test1a);
        cfg.reference = Some(ReferenceConfig { scheme: Scheme::Si, step_multiplier: 1.0 });
        let report = run_experiment(&cfg).unwrap();
        assert_eq!(report.errors, Some(vec![0.0, 0.0]));
    }

    #[test]
    fn runs_are_deterministic() {
        let cfg = small(Preset::Test2a);
        assert_eq!(run_experiment(&cfg).unwrap().averages, run_experiment(&cfg).unwrap().averages);
    }

    #[test]
    fn multiscale_run_reports_coarse_dof() {
        let mut cfg = small(Preset::Test1b);
        cfg.scheme = Scheme::Ms;
        cfg.basis_count = Some(2);
        cfg.reference = Some(ReferenceConfig { scheme: Scheme::Si, step_multiplier: 1.0 });
        let report = run_experiment(&cfg).unwrap();
        assert_eq!(report.dof, 50);
        assert_eq!(report.basis_count, Some(2));
        let e = report.errors.unwrap();
        assert!(e.iter().all(|&x| x > 0.0 && x < 0.1), "{e:?}");
    }

    #[test]
    fn sweep_errors_do_not_grow() {
        let cfg = small(Preset::Test1b);
        let sweep = run_sweep(&cfg, &[1, 2, 4]).unwrap();
        assert_eq!(sweep.rows.len(), 4);
        assert_eq!(sweep.rows[0].errors, None);
        assert_eq!(sweep.rows.iter().map(|r| r.dof).collect::<Vec<_>>(), vec![400, 25, 50, 100]);
        for k in 0..2 {
            let e: Vec<f64> = sweep.rows[1..].iter().map(|r| r.errors.as_ref().unwrap()[k]).collect();
            assert!(e.windows(2).all(|w| w[1] <= w[0]), "{e:?}");
        }
    }

    #[test]
    fn comparison_against_itself_is_zero() {
        let report = run_experiment(&small(Preset::Test1a)).unwrap();
        let c = compare_reports(&report, &report).unwrap();
        assert_eq!(c.errors, vec![0.0, 0.0]);
        assert_eq!(c.max_average_difference, 0.0);
        let mut other = report.clone();
        other.geometry.fine = [40, 40];
        assert!(compare_reports(&report, &other).is_err());
    }

    #[test]
    fn stage_is_named_in_errors() {
        let mut cfg = small(Preset::Test1a);
        cfg.scheme = Scheme::Ms;
        cfg.geometry = cfg.geometry.with_coarse(3, 3);
        let err = run_experiment(&cfg).unwrap_err();
        assert!(matches!(err, Error::Stage { stage: "offline", .. }), "{err}");
    }
}
