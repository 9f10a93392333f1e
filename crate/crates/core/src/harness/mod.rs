//! Config-driven experiment runner: repeated seeds and folds, ablations,
//! sensitivity sweeps, and report output.
//!
//! Each (seed, fold) pair trains one model; every calibration row of that
//! run reuses it.

mod config;
mod report;
mod run;
pub mod svg;

pub use config::{DatasetSource, ExperimentConfig, NoiseSweep, Protocol};
pub use report::{
    aggregate, charts, emit_report, load_report, records_csv, summary_csv, write_timings,
    AggregateRow, Format, MeanStd, Report, ReportKind, METRICS,
};
pub use run::{
    run_ablations, run_experiment, run_sensitivity, BiasSummary, ResultRecord, RunOutput,
    SweepPoint, Timing, TrainSummary,
};

/// Overrides the configured output directory when set.
pub const OUTPUT_ROOT_ENV: &str = "NEUBM_OUTPUT_ROOT";
