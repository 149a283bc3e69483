//! Grading-time evaluation.
//!
//! Submissions are split into a control half (`S_HNA`, no highlighting) and a
//! treatment half (`S_HA`), the latter divided into sheets where at least one
//! keyword was highlighted (`S_H`) and sheets where none was (`S_NH`). Mean
//! first-pass grading times of `S_HNA` and `S_H` are compared per question and
//! per sheet after dropping the top 5% of each list.

mod events;
mod report;
mod split;
mod stats;
mod trim;

pub use events::{first_pass, read_events_csv, write_events_csv, EventRecord, SplitLabel, EVENT_CSV_HEADER};
pub use report::{analyze, emit_report, EvaluationReport, ExamEvents};
pub use split::{split_submissions, EvaluationSplit};
pub use stats::{
    per_question_stats, per_sheet_stats, summary_reductions, ExamSheetSummary, QuestionRow, SheetRow, SheetTrim,
    Summary,
};
pub use trim::{trim_count, trim_outliers, trim_values, Timed};

/// `100 * (control - treated) / control`, undefined when either side is
/// missing or the control mean is not positive.
pub fn reduction_pct(control: Option<f64>, treated: Option<f64>) -> Option<f64> {
    match (control, treated) {
        (Some(c), Some(t)) if c > 0.0 => Some(100.0 * (c - t) / c),
        _ => None,
    }
}
