use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::events::{first_pass, EventRecord, SplitLabel};
use super::reduction_pct;
use super::trim::{trim_outliers, Timed};
use crate::error::{Error, Result};
use crate::layout::QuestionType;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRow {
    pub exam_id: String,
    pub question_id: String,
    #[serde(rename = "type")]
    pub question_type: QuestionType,
    pub mean_hna_ms: Option<f64>,
    pub mean_h_ms: Option<f64>,
    pub n_hna: usize,
    pub n_h: usize,
    /// Treatment sheets with nothing highlighted; reported, never compared.
    pub mean_nh_ms: Option<f64>,
    pub n_nh: usize,
    pub reduction_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SheetRow {
    pub exam_id: String,
    pub split: SplitLabel,
    pub mean_sheet_ms: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExamSheetSummary {
    pub exam_id: String,
    pub reduction_pct: Option<f64>,
    /// Sheets left out because some question had no grade.
    pub partial: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub avg_reduction_per_response_pct: f64,
    pub avg_reduction_per_sheet_pct: Option<f64>,
    pub per_type_reduction_pct: BTreeMap<QuestionType, Option<f64>>,
}

/// How sheet-level outliers are removed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SheetTrim {
    /// Trim the list of sheet totals.
    #[default]
    SheetLevel,
    /// Trim each question's responses, then add the per-question means.
    ResponseLevel,
}

/// Orders ids like `q2` before `q10`.
pub(crate) fn natural_key(s: &str) -> Vec<(u8, u64, String)> {
    let mut key = Vec::new();
    let mut chars = s.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_ascii_digit() {
            let mut digits = String::new();
            while let Some(&d) = chars.peek().filter(|d| d.is_ascii_digit()) {
                digits.push(d);
                chars.next();
            }
            key.push((0, digits.parse().unwrap_or(u64::MAX), digits));
        } else {
            let mut text = String::new();
            while let Some(&t) = chars.peek().filter(|t| !t.is_ascii_digit()) {
                text.push(t);
                chars.next();
            }
            key.push((1, 0, text));
        }
    }
    key
}

fn mean(values: &[Timed]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    Some(values.iter().map(|t| t.duration_ms as f64).sum::<f64>() / values.len() as f64)
}

fn timed(e: &EventRecord) -> Timed {
    Timed { duration_ms: e.duration_ms, submitted_at_ms: e.submitted_at_ms }
}

fn question_types(events: &[&EventRecord]) -> Result<BTreeMap<String, QuestionType>> {
    let mut types: BTreeMap<String, QuestionType> = BTreeMap::new();
    for e in events {
        if let Some(prev) = types.insert(e.question_id.clone(), e.question_type) {
            if prev != e.question_type {
                return Err(Error::EventLog(format!("question `{}` has more than one type", e.question_id)));
            }
        }
    }
    Ok(types)
}

/// Per-question trimmed means of first-pass durations for `S_HNA`, `S_H`
/// and (as a diagnostic) `S_NH`. Each list is trimmed on its own.
pub fn per_question_stats(exam_id: &str, events: &[EventRecord]) -> Result<Vec<QuestionRow>> {
    let first = first_pass(events);
    let types = question_types(&first)?;
    let mut lists: HashMap<(&str, SplitLabel), Vec<Timed>> = HashMap::new();
    for e in &first {
        lists.entry((e.question_id.as_str(), e.split)).or_default().push(timed(e));
    }
    let mut ids: Vec<&String> = types.keys().collect();
    ids.sort_by_key(|id| natural_key(id));
    Ok(ids
        .into_iter()
        .map(|qid| {
            let side = |label| {
                let kept = trim_outliers(lists.get(&(qid.as_str(), label)).map_or(&[][..], Vec::as_slice));
                (mean(&kept), kept.len())
            };
            let (mean_hna_ms, n_hna) = side(SplitLabel::Hna);
            let (mean_h_ms, n_h) = side(SplitLabel::H);
            let (mean_nh_ms, n_nh) = side(SplitLabel::Nh);
            QuestionRow {
                exam_id: exam_id.to_owned(),
                question_id: qid.clone(),
                question_type: types[qid],
                mean_hna_ms,
                mean_h_ms,
                n_hna,
                n_h,
                mean_nh_ms,
                n_nh,
                reduction_pct: reduction_pct(mean_hna_ms, mean_h_ms),
            }
        })
        .collect())
}

/// Per-split mean time to grade a whole sheet, and the exam's sheet-level
/// reduction. A sheet counts only when every question of the exam has a
/// first-pass grade on it.
pub fn per_sheet_stats(
    exam_id: &str,
    events: &[EventRecord],
    mode: SheetTrim,
) -> Result<(Vec<SheetRow>, ExamSheetSummary)> {
    let first = first_pass(events);
    let questions: BTreeSet<&str> = first.iter().map(|e| e.question_id.as_str()).collect();
    let mut sheets: BTreeMap<&str, Vec<&EventRecord>> = BTreeMap::new();
    for e in &first {
        sheets.entry(e.bundle_id.as_str()).or_default().push(e);
    }

    let mut partial = 0;
    let mut complete: HashMap<SplitLabel, Vec<&[&EventRecord]>> = HashMap::new();
    for (bundle, sheet) in &sheets {
        if sheet.len() != questions.len() {
            partial += 1;
            continue;
        }
        let label = sheet[0].split;
        if sheet.iter().any(|e| e.split != label) {
            return Err(Error::EventLog(format!("sheet `{bundle}` carries more than one split label")));
        }
        complete.entry(label).or_default().push(sheet.as_slice());
    }

    let sheet_mean = |label: SplitLabel| -> (Option<f64>, usize) {
        let group = complete.get(&label).map_or(&[][..], Vec::as_slice);
        match mode {
            SheetTrim::SheetLevel => {
                let totals: Vec<Timed> = group
                    .iter()
                    .map(|sheet| Timed {
                        duration_ms: sheet.iter().map(|e| e.duration_ms).sum(),
                        submitted_at_ms: sheet.iter().map(|e| e.submitted_at_ms).max().unwrap_or(0),
                    })
                    .collect();
                let kept = trim_outliers(&totals);
                (mean(&kept), kept.len())
            }
            SheetTrim::ResponseLevel => {
                if group.is_empty() {
                    return (None, 0);
                }
                let mut per_question: BTreeMap<&str, Vec<Timed>> = BTreeMap::new();
                for sheet in group {
                    for e in sheet.iter() {
                        per_question.entry(e.question_id.as_str()).or_default().push(timed(e));
                    }
                }
                let total = per_question.values().map(|list| mean(&trim_outliers(list)).unwrap_or(0.0)).sum();
                (Some(total), group.len())
            }
        }
    };

    let rows: Vec<SheetRow> = [SplitLabel::Hna, SplitLabel::H, SplitLabel::Nh]
        .into_iter()
        .map(|split| {
            let (mean_sheet_ms, n) = sheet_mean(split);
            SheetRow { exam_id: exam_id.to_owned(), split, mean_sheet_ms, n }
        })
        .collect();
    let summary = ExamSheetSummary {
        exam_id: exam_id.to_owned(),
        reduction_pct: reduction_pct(rows[0].mean_sheet_ms, rows[1].mean_sheet_ms),
        partial,
    };
    Ok((rows, summary))
}

fn unweighted_mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Averages reductions with every question (and every exam) weighted equally.
pub fn summary_reductions(questions: &[QuestionRow], exams: &[ExamSheetSummary]) -> Result<Summary> {
    let avg_reduction_per_response_pct =
        unweighted_mean(questions.iter().filter_map(|q| q.reduction_pct)).ok_or(Error::NoDefinedReductions)?;
    let per_type_reduction_pct = [QuestionType::Long, QuestionType::Numerical, QuestionType::Short]
        .into_iter()
        .map(|t| {
            let avg = unweighted_mean(questions.iter().filter(|q| q.question_type == t).filter_map(|q| q.reduction_pct));
            (t, avg)
        })
        .collect();
    Ok(Summary {
        avg_reduction_per_response_pct,
        avg_reduction_per_sheet_pct: unweighted_mean(exams.iter().filter_map(|e| e.reduction_pct)),
        per_type_reduction_pct,
    })
}
