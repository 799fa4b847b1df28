//! Configuration-driven experiments and their on-disk outputs.

mod commands;
mod config;
mod output;

pub use commands::{
    cmd_phantom, cmd_rates, cmd_run, cmd_sweep, execute_phantom, execute_rates, execute_run, execute_sweep, median,
    sweep_cell, thread_pool, RatesReport, RunReport, SweepRow, SWEEP_HEADER, THREADS_ENV,
};
pub use config::{
    EstimateSection, ModelSection, OutputSection, Overrides, RatesSection, RunConfig, SolverSection, StudyKind,
    SweepAxis, SweepSection, DIAGNOSTICS_KEY,
};
pub use output::{format_float, write_history_csv, write_manifest, HISTORY_HEADER};
