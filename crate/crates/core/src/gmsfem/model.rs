use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::projection::{assemble_coarse, build_projection, project_initial, reconstruct_fine, CoarseSystem, ProjectionMatrix};
use super::spectral::{compute_local_spectra, LocalSpectralResult};
use crate::error::{Error, Result};
use crate::fvm::{CoefficientField, SpeciesState};
use crate::grid::{CoarseGrid, FineGrid, PartitionOfUnity, SubdomainMap};
use crate::linalg::{CsrMatrix, LinearSolveSpec, PreparedSolver};
use crate::timestepping::{FineProblem, StepReport, Stepper, TimeSteppingConfig};

/// Coarse space of one species.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeciesSpace {
    pub projection: ProjectionMatrix,
    pub system: CoarseSystem,
    /// Retained local eigenvalues, `[node][l]`.
    pub eigenvalues: Vec<Vec<f64>>,
}

/// Offline multiscale data: a projection and Galerkin coarse operators per species.
/// Depends only on the grid, the inclusion layout and the diffusion coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiscaleModel {
    /// Fingerprint of the inputs the basis was built from; see [`basis_fingerprint`].
    pub grid_hash: String,
    pub basis_count: usize,
    pub species: Vec<SpeciesSpace>,
}

impl MultiscaleModel {
    /// Solves all local eigenproblems and assembles the coarse operators.
    pub fn build(problem: &FineProblem, coarse: &CoarseGrid, pou: &PartitionOfUnity, basis_count: usize, grid_hash: String) -> Result<Self> {
        let spectra = problem
            .diffusion
            .iter()
            .enumerate()
            .map(|(k, a)| compute_local_spectra(a, coarse, basis_count).map_err(|e| e.in_species(k)))
            .collect::<Result<Vec<_>>>()?;
        Self::from_spectra(problem, coarse, pou, &spectra, basis_count, grid_hash)
    }

    /// Coarse operators from precomputed spectra (`spectra[k][node]`), keeping
    /// `basis_count` pairs per node.
    pub fn from_spectra(
        problem: &FineProblem,
        coarse: &CoarseGrid,
        pou: &PartitionOfUnity,
        spectra: &[Vec<LocalSpectralResult>],
        basis_count: usize,
        grid_hash: String,
    ) -> Result<Self> {
        if basis_count == 0 {
            return Err(Error::invalid("basis count must be at least 1"));
        }
        if spectra.len() != problem.n_species() {
            return Err(Error::DimensionMismatch { expected: problem.n_species(), found: spectra.len() });
        }
        let mass = CsrMatrix::from_diagonal(&problem.volumes);
        let species = spectra
            .iter()
            .zip(&problem.diffusion)
            .enumerate()
            .map(|(k, (local, a))| {
                if local.iter().any(|s| s.len() < basis_count.min(coarse.local_cells(s.domain).len())) {
                    return Err(Error::invalid(format!("species {k}: spectra hold fewer than {basis_count} pairs")));
                }
                let projection = build_projection(local, coarse, pou, problem.n_cells(), basis_count)?;
                let system = assemble_coarse(&projection, a, &mass)?;
                let eigenvalues = local.iter().map(|s| s.values.iter().take(basis_count).copied().collect()).collect();
                Ok(SpeciesSpace { projection, system, eigenvalues })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MultiscaleModel { grid_hash, basis_count, species })
    }

    pub fn n_species(&self) -> usize {
        self.species.len()
    }

    /// Coarse degrees of freedom per species.
    pub fn dof(&self) -> usize {
        self.species.first().map_or(0, |s| s.projection.dof())
    }

    pub fn n_fine(&self) -> usize {
        self.species.first().map_or(0, |s| s.projection.n_fine())
    }

    /// The model with only the first `count` basis functions per node.
    pub fn truncate(&self, count: usize) -> Result<Self> {
        if count == 0 || count > self.basis_count {
            return Err(Error::invalid(format!("cannot truncate a {}-function basis to {count}", self.basis_count)));
        }
        let species = self
            .species
            .iter()
            .map(|s| {
                let keep: Vec<usize> = (0..s.projection.dof()).filter(|&r| s.projection.rows[r].1 < count).collect();
                Ok(SpeciesSpace {
                    projection: s.projection.truncate(count)?,
                    system: s.system.truncate(&keep)?,
                    eigenvalues: s.eigenvalues.iter().map(|v| v.iter().take(count).copied().collect()).collect(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MultiscaleModel { grid_hash: self.grid_hash.clone(), basis_count: count, species })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let header = ArtifactHeader { magic: ARTIFACT_MAGIC.to_string(), version: ARTIFACT_VERSION };
        bincode::serialize_into(&mut w, &header)
            .and_then(|_| bincode::serialize_into(&mut w, self))
            .map_err(|e| Error::Artifact(format!("cannot write {}: {e}", path.display())))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads an artifact without checking what it was built from.
    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let header: ArtifactHeader = bincode::deserialize_from(&mut r)
            .map_err(|e| Error::Artifact(format!("{} is not a basis artifact: {e}", path.display())))?;
        if header.magic != ARTIFACT_MAGIC {
            return Err(Error::Artifact(format!("{} is not a basis artifact", path.display())));
        }
        if header.version != ARTIFACT_VERSION {
            return Err(Error::Artifact(format!(
                "{} has format version {}, expected {ARTIFACT_VERSION}",
                path.display(),
                header.version
            )));
        }
        bincode::deserialize_from(&mut r).map_err(|e| Error::Artifact(format!("corrupt artifact {}: {e}", path.display())))
    }

    /// Reads an artifact and refuses it unless it was built for `expected_hash`.
    pub fn load(path: &Path, expected_hash: &str) -> Result<Self> {
        let model = Self::read(path)?;
        if model.grid_hash != expected_hash {
            return Err(Error::Artifact(format!(
                "{} was built for {} but the configuration hashes to {expected_hash}",
                path.display(),
                model.grid_hash
            )));
        }
        Ok(model)
    }
}

const ARTIFACT_MAGIC: &str = "rdms-basis";
pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ArtifactHeader {
    magic: String,
    version: u32,
}

/// SHA-256 over the fine grid, the inclusion labels, the coarse grid and the diffusion
/// coefficients, as lowercase hex.
pub fn basis_fingerprint(grid: &FineGrid, subdomains: &SubdomainMap, coarse: &CoarseGrid, coeff: &CoefficientField) -> String {
    let mut h = Sha256::new();
    let mut put = |x: f64| h.update(x.to_bits().to_le_bytes());
    for &v in grid.cell_volumes() {
        put(v);
    }
    for c in grid.cell_centers() {
        put(c[0]);
        put(c[1]);
    }
    for f in grid.faces() {
        put(f.a as f64);
        put(f.b as f64);
        put(f.length);
        put(f.distance);
    }
    let [kx, ky] = coarse.dims();
    put(kx as f64);
    put(ky as f64);
    for eps in &coeff.diffusion {
        put(eps.background);
        put(eps.inclusion);
    }
    let labels: Vec<u8> = subdomains.labels().iter().map(|&l| l as u8).collect();
    h.update(&labels);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Online stage: coarse backward-Euler diffusion with the reaction evaluated on the
/// reconstructed fine field and projected back.
///
/// [`Stepper::advance`] must be given the previous reconstruction (as returned by
/// [`MsStepper::initial_fine`] or the previous `advance`); the coarse state lives here.
pub struct MsStepper<'m> {
    model: &'m MultiscaleModel,
    problem: &'m FineProblem,
    solvers: Vec<PreparedSolver>,
    coarse_state: Vec<Vec<f64>>,
    tau: f64,
}

impl<'m> MsStepper<'m> {
    pub fn new(
        model: &'m MultiscaleModel,
        problem: &'m FineProblem,
        cfg: &TimeSteppingConfig,
        coarse_solver: LinearSolveSpec,
        initial: &SpeciesState,
    ) -> Result<Self> {
        cfg.validate()?;
        if model.n_species() != problem.n_species() || initial.n_species() != problem.n_species() {
            return Err(Error::DimensionMismatch { expected: problem.n_species(), found: model.n_species() });
        }
        if model.n_fine() != problem.n_cells() {
            return Err(Error::DimensionMismatch { expected: problem.n_cells(), found: model.n_fine() });
        }
        let mut solvers = Vec::with_capacity(model.n_species());
        let mut coarse_state = Vec::with_capacity(model.n_species());
        for (k, space) in model.species.iter().enumerate() {
            let wrap = |e: Error| e.in_species(k);
            let mass_solver = PreparedSolver::new(space.system.mass.clone(), coarse_solver).map_err(wrap)?;
            coarse_state.push(project_initial(&space.projection, &problem.volumes, &mass_solver, &initial.u[k]).map_err(wrap)?);
            let lhs = space.system.stiffness.add_scaled(1.0, &space.system.mass, 1.0 / cfg.tau)?;
            solvers.push(PreparedSolver::new(lhs, coarse_solver).map_err(wrap)?);
        }
        Ok(MsStepper { model, problem, solvers, coarse_state, tau: cfg.tau })
    }

    pub fn coarse_state(&self) -> &[Vec<f64>] {
        &self.coarse_state
    }

    /// Reconstruction of the current coarse state.
    pub fn initial_fine(&self) -> Result<SpeciesState> {
        let u = self
            .model
            .species
            .iter()
            .zip(&self.coarse_state)
            .map(|(s, u_h)| reconstruct_fine(&s.projection, u_h))
            .collect::<Result<Vec<_>>>()?;
        Ok(SpeciesState { u })
    }
}

impl Stepper for MsStepper<'_> {
    fn advance(&mut self, current: &SpeciesState) -> Result<(SpeciesState, StepReport)> {
        let start = Instant::now();
        let (l, n) = (self.problem.n_species(), self.problem.n_cells());
        if current.n_species() != l || current.n_cells() != n {
            return Err(Error::DimensionMismatch { expected: n, found: current.n_cells() });
        }
        let mut rates = vec![vec![0.0; n]; l];
        self.problem.reaction.volume_weighted_rates(current, &self.problem.volumes, &mut rates);
        let mut report = StepReport::default();
        let mut next = Vec::with_capacity(l);
        for (k, space) in self.model.species.iter().enumerate() {
            let wrap = |e: Error| e.in_species(k);
            let mut rhs = space.projection.matrix.spmv(&rates[k]).map_err(wrap)?;
            let history = space.system.mass.spmv(&self.coarse_state[k]).map_err(wrap)?;
            rhs.iter_mut().zip(&history).for_each(|(r, h)| *r += h / self.tau);
            let sol = self.solvers[k].solve(&rhs, Some(&self.coarse_state[k])).map_err(wrap)?;
            report.linear_iterations += sol.iterations;
            self.coarse_state[k] = sol.x;
            next.push(reconstruct_fine(&space.projection, &self.coarse_state[k])?);
        }
        let next = SpeciesState { u: next };
        next.check_finite()?;
        report.wall_time = start.elapsed().as_secs_f64();
        Ok((next, report))
    }
}
