//! Metrics, ablation variants, task runners and result tables.

mod metrics;
mod report;
mod runner;
mod variant;

pub use metrics::{mae, mse};
pub use report::{emit_reports, ranks, read_reports, render_csv, render_json, MetricReport, SUMMARY_COLUMNS};
pub use runner::{run_task, score, task_architecture, RunSettings, Score, TaskRun, TaskWindows};
pub use variant::{build_variant, Variant};
