use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fvm::{CoefficientField, Piecewise};
use crate::grid::GeometryConfig;
use crate::linalg::LinearSolveSpec;
use crate::timestepping::{Scheme, TimeSteppingConfig};

/// The four competition/diffusion test cases.
///
/// Variant `a` uses small diffusion, `b` regular diffusion. Test 2 strengthens the
/// competition and runs three times longer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Test1a,
    Test1b,
    Test2a,
    Test2b,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Test1a, Preset::Test1b, Preset::Test2a, Preset::Test2b];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Test1a => "test1a",
            Preset::Test1b => "test1b",
            Preset::Test2a => "test2a",
            Preset::Test2b => "test2b",
        }
    }

    pub fn small_diffusion(self) -> bool {
        matches!(self, Preset::Test1a | Preset::Test2a)
    }

    pub fn t_max(self) -> f64 {
        match self {
            Preset::Test1a | Preset::Test1b => 50.0,
            Preset::Test2a | Preset::Test2b => 150.0,
        }
    }

    pub fn coefficients(self) -> CoefficientField {
        let (e_lo, e_hi) = if self.small_diffusion() { (1e-4, 1e-2) } else { (1e-3, 1e-1) };
        let (a12, a21) = match self {
            Preset::Test1a | Preset::Test1b => (Piecewise::new(0.055, 0.05), Piecewise::new(0.05, 0.055)),
            Preset::Test2a | Preset::Test2b => (Piecewise::new(0.15, 0.01), Piecewise::new(0.01, 0.075)),
        };
        let zero = Piecewise::uniform(0.0);
        CoefficientField {
            diffusion: vec![Piecewise::new(e_lo, e_hi), Piecewise::new(e_hi, e_lo)],
            growth: vec![Piecewise::new(0.15, 0.1), Piecewise::new(0.1, 0.15)],
            competition: vec![vec![zero, a12], vec![a21, zero]],
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown preset {s:?}")))
    }
}

/// Solver settings shared by all schemes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub newton_tol: f64,
    pub newton_max_iters: usize,
    pub symmetric: LinearSolveSpec,
    pub coupled: LinearSolveSpec,
    pub coarse: LinearSolveSpec,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            newton_tol: 1e-8,
            newton_max_iters: 20,
            symmetric: LinearSolveSpec::symmetric(),
            coupled: LinearSolveSpec::nonsymmetric(),
            coarse: LinearSolveSpec::direct(),
        }
    }
}

/// Fine-grid run whose final state serves as the error reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    pub scheme: Scheme,
    /// Reference time step relative to the nominal `t_max / n_steps`.
    #[serde(default = "one")]
    pub step_multiplier: f64,
}

fn one() -> f64 {
    1.0
}

fn default_steps() -> usize {
    100
}

fn default_scheme() -> Scheme {
    Scheme::Si
}

/// One experiment as read from JSON.
///
/// ```json
/// {"geometry": {"fine": [160, 160], "coarse": [10, 10]},
///  "preset": "test1b", "scheme": "ms", "basis_count": 6,
///  "reference": {"scheme": "si"}, "output_dir": "out/test1b"}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub geometry: GeometryConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    /// Replaces the preset coefficients entirely when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<CoefficientField>,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    /// Basis functions per coarse node (multiscale only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis_count: Option<usize>,
    /// Defaults to the preset's final time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    /// Nominal step count; the time step is `step_multiplier · t_max / n_steps`.
    #[serde(default = "default_steps")]
    pub n_steps: usize,
    #[serde(default = "one")]
    pub step_multiplier: f64,
    /// Spatially constant initial value per species; 0.5 for every species by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Steps at which VTK snapshots are written.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub snapshot_steps: Vec<usize>,
    /// Prebuilt basis for multiscale runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub artifact: Option<PathBuf>,
}

pub const DEFAULT_BASIS_COUNT: usize = 6;
pub const DEFAULT_INITIAL_VALUE: f64 = 0.5;

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        ExperimentConfig {
            geometry: GeometryConfig::default(),
            preset: Some(preset),
            coefficients: None,
            scheme: Scheme::Si,
            basis_count: None,
            t_max: None,
            n_steps: default_steps(),
            step_multiplier: 1.0,
            initial: None,
            solver: SolverConfig::default(),
            reference: None,
            output_dir: None,
            snapshot_steps: Vec::new(),
            artifact: None,
        }
    }

    /// Parses a config file; relative paths inside it are taken relative to the file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        for p in [&mut cfg.output_dir, &mut cfg.artifact].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn label(&self) -> String {
        match (self.preset, &self.coefficients) {
            (Some(p), None) => p.name().to_string(),
            _ => "custom".to_string(),
        }
    }

    pub fn resolved_coefficients(&self) -> Result<CoefficientField> {
        let coeff = match (&self.coefficients, self.preset) {
            (Some(c), _) => c.clone(),
            (None, Some(p)) => p.coefficients(),
            (None, None) => return Err(Error::Config("either a preset or explicit coefficients is required".into())),
        };
        coeff.validate()?;
        Ok(coeff)
    }

    pub fn resolved_t_max(&self) -> Result<f64> {
        self.t_max
            .or(self.preset.map(Preset::t_max))
            .ok_or_else(|| Error::Config("t_max is required without a preset".into()))
    }

    pub fn resolved_initial(&self, n_species: usize) -> Result<Vec<f64>> {
        match &self.initial {
            Some(v) if v.len() != n_species => Err(Error::Config(format!(
                "initial lists {} values for {n_species} species",
                v.len()
            ))),
            Some(v) => Ok(v.clone()),
            None => Ok(vec![DEFAULT_INITIAL_VALUE; n_species]),
        }
    }

    pub fn resolved_basis_count(&self) -> usize {
        self.basis_count.unwrap_or(DEFAULT_BASIS_COUNT)
    }

    /// Time stepping at `multiplier · t_max / n_steps`, covering `[0, t_max]`.
    pub fn stepping_with(&self, multiplier: f64) -> Result<TimeSteppingConfig> {
        let t_max = self.resolved_t_max()?;
        if !(multiplier > 0.0) || self.n_steps == 0 {
            return Err(Error::Config("n_steps and step_multiplier must be positive".into()));
        }
        let steps = self.n_steps as f64 / multiplier;
        let n = steps.round();
        if n < 1.0 || (steps - n).abs() > 1e-9 * steps {
            return Err(Error::Config(format!(
                "step multiplier {multiplier} does not divide {} steps evenly",
                self.n_steps
            )));
        }
        let mut cfg = TimeSteppingConfig::new(t_max, n as usize)?;
        cfg.newton_tol = self.solver.newton_tol;
        cfg.newton_max_iters = self.solver.newton_max_iters;
        cfg.symmetric_solver = self.solver.symmetric;
        cfg.coupled_solver = self.solver.coupled;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn stepping(&self) -> Result<TimeSteppingConfig> {
        self.stepping_with(self.step_multiplier)
    }

    pub fn validate(&self) -> Result<()> {
        let coeff = self.resolved_coefficients()?;
        self.resolved_initial(coeff.n_species())?;
        self.stepping()?;
        if let Some(r) = &self.reference {
            if r.scheme == Scheme::Ms {
                return Err(Error::Config("the reference run must use a fine-grid scheme".into()));
            }
            self.stepping_with(r.step_multiplier)?;
        }
        if self.basis_count == Some(0) {
            return Err(Error::Config("basis_count must be at least 1".into()));
        }
        let last = self.stepping()?.n_steps;
        if let Some(&s) = self.snapshot_steps.iter().find(|&&s| s > last) {
            return Err(Error::Config(format!("snapshot step {s} is past the last step")));
        }
        self.solver.coarse.validate()
    }
}
