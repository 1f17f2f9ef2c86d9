//! Experiment pipeline: presets, config, fine and multiscale runs, basis sweeps, and
//! CSV/VTK/JSON reports.

mod config;
mod metrics;
mod output;
mod run;

pub use config::{ExperimentConfig, Preset, ReferenceConfig, SolverConfig, DEFAULT_BASIS_COUNT, DEFAULT_INITIAL_VALUE};
pub use metrics::{compute_averages, compute_relative_l2};
pub use output::{
    averages_csv, errors_csv, read_vtk_cell_scalars, snapshot_file, vtk_snapshot, write_outputs, OutputSet,
    AVERAGES_FILE, ERRORS_FILE, REPORT_FILE,
};
pub use run::{
    build_model, compare_reports, compute_spectra, run_experiment, run_fine, run_multiscale, run_sweep, AverageRow,
    Comparison, ErrorRow, ExperimentReport, RunOutcome, Setup, SweepReport,
};
