//! Experiment orchestration: configuration, convergence and sweep runs,
//! optimum reports and CSV export.

pub mod config;
pub mod export;
pub mod run;

pub use config::{grid_for, ExperimentConfig, SweepConfig, SystemConfig};
pub use export::{parse_trace_csv, revalidate_trace, trace_csv, TraceRow};
pub use run::{
    dump_optimal_config, final_mean, run_cell, run_convergence, run_element_sweep, run_power_sweep, Cell,
    OptimalReport, RunRecord, SurfaceReport,
};
