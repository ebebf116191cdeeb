//! Batch evaluation: per-sample records, metrics, report rendering and the
//! component ablation grid.

mod ablation;
mod harness;
mod metrics;
mod report;

pub use ablation::{AblationRow, ablation_grid};
pub use harness::{
    ABORT_FAILURE_RATIO, EvalError, EvalHarness, EvalOutcome, RECORDS_FILE, REPORT_JSON, REPORT_TEXT, RunConfig,
    TRANSCRIPT_DIR, load_records,
};
pub use metrics::{MetricsReport, NoRecords, PredictionRecord, Ratio, compute_metrics};
pub use report::{
    CHECK, CROSS, ComponentRow, MODEL_COLUMNS, Scores, UNDEFINED, component_table, model_matches, pct, render_report,
    setup_label, setup_table,
};
