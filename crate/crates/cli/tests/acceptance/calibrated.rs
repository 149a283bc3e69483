//! Hand-built event logs whose summary must equal the published reductions:
//! 31% per response, 33% per answer sheet, 23/34/34% for long, numerical and
//! short questions.
//!
//! Nine long questions at 23% and twenty-four numerical or short ones at 34%
//! average to 31% per response. Exams A and B mix long and short questions so
//! their sheet totals drop by 31.5%; exams C, D and E drop by 34%, and the
//! five exams average 33%.

use std::fmt::Write as _;
use std::path::Path;
use std::process::Command;

use gradepipe_core::analytics::EVENT_CSV_HEADER;
use serde_json::Value;

use crate::{ensure, Check};

const TOLERANCE: f64 = 0.01;

#[derive(Clone, Copy)]
enum Kind {
    Long,
    Numerical,
    Short,
}

impl Kind {
    fn as_str(self) -> &'static str {
        match self {
            Kind::Long => "long",
            Kind::Numerical => "numerical",
            Kind::Short => "short",
        }
    }
}

struct Exam {
    id: &'static str,
    submissions: usize,
    questions: Vec<Kind>,
    /// `(control, highlighted)` durations in ms for long questions.
    long: (u64, u64),
    /// The same for every other question.
    other: (u64, u64),
}

fn alternating(n: usize) -> impl Iterator<Item = Kind> {
    (0..n).map(|i| if i % 2 == 0 { Kind::Numerical } else { Kind::Short })
}

fn exams() -> Vec<Exam> {
    let mixed = |long: usize, other: usize| -> Vec<Kind> {
        std::iter::repeat_n(Kind::Long, long).chain(alternating(other)).collect()
    };
    vec![
        Exam { id: "course-a", submissions: 124, questions: mixed(5, 7), long: (70_000, 53_900), other: (170_000, 112_200) },
        Exam { id: "course-b", submissions: 49, questions: mixed(4, 6), long: (60_000, 46_200), other: (136_000, 89_760) },
        Exam { id: "course-c", submissions: 50, questions: vec![Kind::Short], long: (0, 0), other: (100_000, 66_000) },
        Exam { id: "course-d", submissions: 198, questions: mixed(0, 5), long: (0, 0), other: (90_000, 59_400) },
        Exam { id: "course-e", submissions: 47, questions: mixed(0, 5), long: (0, 0), other: (120_000, 79_200) },
    ]
}

/// Writes one exam's event log. Every list is constant apart from one slow
/// outlier per group, which the 5% trim removes, and the few sheets in S_NH,
/// whose durations are all different and take no part in any reduction.
fn write_log(exam: &Exam, dir: &Path) -> std::io::Result<()> {
    let n = exam.submissions;
    let control = n.div_ceil(2);
    let not_highlighted = 3.min((n - control) / 4).max(1);
    let mut csv = format!("{EVENT_CSV_HEADER}\n");
    let mut clock = 1_000_000_000u64;
    let mut event_id = 0u64;
    for sheet in 0..n {
        let bundle = format!("{}-sheet-{sheet:03}", exam.id);
        let split = if sheet < control {
            "S_HNA"
        } else if sheet < n - not_highlighted {
            "S_H"
        } else {
            "S_NH"
        };
        for (q, kind) in exam.questions.iter().enumerate() {
            let (a, b) = match kind {
                Kind::Long => exam.long,
                _ => exam.other,
            };
            let mut duration = match split {
                "S_HNA" => a,
                "S_H" => b,
                _ => b / 2 + 1_000 * sheet as u64 + 37 * q as u64,
            };
            if q == 0 && (sheet == 1 || sheet == control + 1) {
                duration *= 6;
            }
            clock += duration + 5_000;
            event_id += 1;
            let served = clock - duration;
            let kind = kind.as_str();
            let question = format!("q{}", q + 1);
            // One regrade: the original time must still be the one counted.
            let regraded = exam.id == "course-a" && sheet == control && q == 2;
            let _ = writeln!(
                csv,
                "{event_id},grader-{},{bundle},{question},{kind},{split},4,10,{served},{clock},{duration},{regraded}",
                q % 3
            );
            if regraded {
                event_id += 1;
                clock += 1_000;
                let _ = writeln!(csv, "{event_id},instructor,{bundle},{question},{kind},{split},6,10,{clock},{clock},0,false");
            }
        }
    }
    std::fs::write(dir.join(format!("{}.csv", exam.id)), csv)
}

fn close(label: &str, got: Option<f64>, want: f64) -> Result<(), String> {
    let got = got.ok_or_else(|| format!("{label} missing"))?;
    ensure((got - want).abs() <= TOLERANCE, || format!("{label} = {got:.4}, expected {want:.2} ± {TOLERANCE}"))
}

pub fn run() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let exams = exams();
    for exam in &exams {
        write_log(exam, dir.path()).map_err(|e| e.to_string())?;
    }
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_gradepipe"));
    cmd.arg("analyze").arg("--events");
    for exam in &exams {
        cmd.arg(dir.path().join(format!("{}.csv", exam.id)));
    }
    let out = cmd.env("RUST_LOG", "warn").output().map_err(|e| e.to_string())?;
    ensure(out.status.success(), || format!("analyze failed: {}", String::from_utf8_lossy(&out.stderr)))?;
    let report: Value = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    let summary = &report["summary"];

    close("per response", summary["avg_reduction_per_response_pct"].as_f64(), 31.0)?;
    close("per sheet", summary["avg_reduction_per_sheet_pct"].as_f64(), 33.0)?;
    let per_type = &summary["per_type_reduction_pct"];
    close("long", per_type["long"].as_f64(), 23.0)?;
    close("numerical", per_type["numerical"].as_f64(), 34.0)?;
    close("short", per_type["short"].as_f64(), 34.0)?;
    let questions = report["questions"].as_array().map_or(0, Vec::len);
    ensure(questions == 33, || format!("{questions} question rows, expected 33"))?;

    Ok(format!(
        "per response {:.2}%, per sheet {:.2}%, long/numerical/short {:.2}/{:.2}/{:.2}%",
        summary["avg_reduction_per_response_pct"].as_f64().unwrap_or(f64::NAN),
        summary["avg_reduction_per_sheet_pct"].as_f64().unwrap_or(f64::NAN),
        per_type["long"].as_f64().unwrap_or(f64::NAN),
        per_type["numerical"].as_f64().unwrap_or(f64::NAN),
        per_type["short"].as_f64().unwrap_or(f64::NAN),
    ))
}
