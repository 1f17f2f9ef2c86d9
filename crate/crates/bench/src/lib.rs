//! Shared fixtures for the kernel benchmarks.

use rdms_core::experiment::{build_model, ExperimentConfig, Preset, Setup};
use rdms_core::gmsfem::MultiscaleModel;
use rdms_core::timestepping::TimeSteppingConfig;
use rdms_core::CsrMatrix;

pub struct Fixture {
    pub setup: Setup,
    pub stepping: TimeSteppingConfig,
    pub model: MultiscaleModel,
    /// Cells of the first interior coarse neighborhood.
    pub patch: Vec<usize>,
}

impl Fixture {
    /// `preset` on an `n × n` fine grid with `n / 16` coarse cells per direction.
    pub fn new(preset: Preset, n: usize, basis_count: usize) -> Fixture {
        let mut cfg = ExperimentConfig::preset(preset);
        let k = (n / 16).max(2);
        cfg.geometry = cfg.geometry.with_fine(n, n).with_coarse(k, k);
        cfg.basis_count = Some(basis_count);
        let setup = Setup::new(&cfg).expect("fixture setup");
        let stepping = cfg.stepping().expect("fixture stepping");
        let (model, _) = build_model(&setup, basis_count).expect("fixture basis");
        let (coarse, _, _) = setup.coarse().expect("fixture coarse grid");
        let interior = coarse.dims()[0] + 2;
        let patch = coarse.local_cells(interior).to_vec();
        Fixture { setup, stepping, model, patch }
    }

    pub fn diffusion(&self, species: usize) -> &CsrMatrix {
        &self.setup.problem.diffusion[species]
    }
}
