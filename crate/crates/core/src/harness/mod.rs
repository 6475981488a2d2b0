//! Ensemble runs, sweeps, fits and file output.

pub mod config;
pub mod ensemble;
pub mod fit;
pub mod output;

pub use config::{RunConfig, SweepConfig};
pub use ensemble::{
    run_ensemble, run_ensemble_with, run_sweep, run_trajectories, run_trajectory, AbortRecord,
    EnsembleResult, Estimate, Execution, Provenance, TrajectoryOutcome, TrajectoryPlan,
    TrajectorySummary,
};
pub use fit::{
    fit_corrected_power_law, fit_exponential_decay, fit_power_law, FitModel, FitParameter,
    FitResult,
};
pub use output::{emit_outputs, read_ensemble_json, OutputFiles};
