use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::events::EventRecord;
use super::stats::{
    per_question_stats, per_sheet_stats, summary_reductions, ExamSheetSummary, QuestionRow, SheetRow, SheetTrim,
    Summary,
};
use crate::error::Result;

/// The event log of one exam.
#[derive(Debug, Clone)]
pub struct ExamEvents {
    pub exam_id: String,
    pub events: Vec<EventRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub sheet_trim: SheetTrim,
    pub questions: Vec<QuestionRow>,
    pub sheets: Vec<SheetRow>,
    pub exams: Vec<ExamSheetSummary>,
    pub summary: Summary,
}

/// Runs the full evaluation over one or more exams.
pub fn analyze(exams: &[ExamEvents], sheet_trim: SheetTrim) -> Result<EvaluationReport> {
    let mut questions = Vec::new();
    let mut sheets = Vec::new();
    let mut summaries = Vec::new();
    for exam in exams {
        questions.extend(per_question_stats(&exam.exam_id, &exam.events)?);
        let (rows, summary) = per_sheet_stats(&exam.exam_id, &exam.events, sheet_trim)?;
        sheets.extend(rows);
        summaries.push(summary);
    }
    let summary = summary_reductions(&questions, &summaries)?;
    Ok(EvaluationReport { sheet_trim, questions, sheets, exams: summaries, summary })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "null".to_owned(), |v| v.to_string())
}

impl EvaluationReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Per-question rows; missing values are written as `null`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "exam_id,question_id,type,mean_hna_ms,mean_h_ms,n_hna,n_h,mean_nh_ms,n_nh,reduction_pct\n",
        );
        for q in &self.questions {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                q.exam_id,
                q.question_id,
                q.question_type.as_str(),
                opt(q.mean_hna_ms),
                opt(q.mean_h_ms),
                q.n_hna,
                q.n_h,
                opt(q.mean_nh_ms),
                q.n_nh,
                opt(q.reduction_pct)
            );
        }
        out
    }
}

/// Writes `report.json` and `report.csv` into `dir`.
pub fn emit_report(report: &EvaluationReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.json"), report.to_json()?)?;
    std::fs::write(dir.join("report.csv"), report.to_csv())?;
    Ok(())
}
