//! Experiment harness: flat `key = value` configs, multi-seed runs of each
//! algorithm over generated streams, hyperparameter sweeps and result files.

mod config;
mod results;
mod runner;
mod sweep;

pub use config::{Algorithm, ExperimentConfig, KEYS};
pub use results::{
    final_test_rows, format_curves, format_results, format_summary, read_results, write_results,
    ResultFiles, CURVES_FILE, RESULTS_FILE, RESULTS_HEADER, SUMMARY_FILE,
};
pub use runner::{prepare_data, run_experiment, run_seed, run_seeds, PreparedData, ResultRow, SeedRun, Split};
pub use sweep::{
    format_sweep, select_by_test, select_by_validation, sweep_hyperparams, SweepParam, SweepPoint,
    SweepSpec, SWEEP_HEADER,
};
