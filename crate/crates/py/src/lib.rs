//! Python bindings for gradepipe.
//!
//! Plain functions cover the pure steps of the pipeline (edit distance,
//! roster mapping, keyword matching, trimming, the evaluation split and
//! offline analysis of event logs). [`PyPlatform`] wraps the grading service
//! for scripting a whole exam without the HTTP layer.
//!
//! Structured results come back as ordinary Python dicts and lists.
//!
//! ```python
//! import gradepipe
//!
//! gradepipe.edit_distance("21CS1001", "2lCS1001")  # 1
//! report = gradepipe.analyze_events(["course-a.csv"], "sheet_level")
//! print(report["summary"]["avg_reduction_per_response_pct"])
//! ```

use std::path::PathBuf;
use std::sync::Arc;

use gradepipe_core::analytics::{self, ExamEvents, SheetTrim};
use gradepipe_core::highlight::{self, KeywordSpec};
use gradepipe_core::identity::{self, IdentityCandidate, Roster, RosterEntry, DEFAULT_THRESHOLD};
use gradepipe_core::ingest;
use gradepipe_core::layout::{self, LayoutConfig, QuestionType, RegionEdit};
use gradepipe_core::ocr::SidecarRecognizer;
use gradepipe_core::regions::DeductionConfig;
use gradepipe_core::{PixelRect, WordBox};
use gradepipe_server::platform::SaveQuestions;
use gradepipe_server::{Clock, ManualClock, MonotonicClock, Platform, QuestionSettings, Role, Store};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;
use serde::Serialize;

create_exception!(gradepipe, GradepipeError, PyException, "Raised when a pipeline step fails.");

fn fail(e: impl std::fmt::Display) -> PyErr {
    GradepipeError::new_err(e.to_string())
}

/// Converts any serializable value to the matching Python object.
fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(fail)?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn sheet_trim(s: &str) -> PyResult<SheetTrim> {
    match s {
        "sheet_level" => Ok(SheetTrim::SheetLevel),
        "response_level" => Ok(SheetTrim::ResponseLevel),
        _ => Err(PyValueError::new_err(format!("sheet_trim must be sheet_level or response_level, not `{s}`"))),
    }
}

fn roster(entries: Vec<(String, String)>) -> PyResult<Roster> {
    Roster::new(entries.into_iter().map(|(roll, name)| RosterEntry { roll, name }).collect()).map_err(fail)
}

fn rect(r: (u32, u32, u32, u32)) -> PixelRect {
    PixelRect::new(r.0, r.1, r.2, r.3)
}

/// Levenshtein distance between two strings, counted in characters.
#[pyfunction]
fn edit_distance(a: &str, b: &str) -> usize {
    identity::edit_distance(a, b)
}

/// Lowercases a token and strips surrounding punctuation.
#[pyfunction]
fn normalize(token: &str) -> String {
    highlight::normalize(token)
}

/// Proposes a roster roll for each `(bundle_id, name, roll)` candidate.
#[pyfunction]
#[pyo3(signature = (candidates, roster_entries, threshold = DEFAULT_THRESHOLD))]
fn map_to_roster(
    py: Python<'_>,
    candidates: Vec<(String, String, String)>,
    roster_entries: Vec<(String, String)>,
    threshold: usize,
) -> PyResult<Py<PyAny>> {
    let candidates: Vec<IdentityCandidate> = candidates
        .into_iter()
        .map(|(bundle_id, name, roll)| IdentityCandidate { bundle_id, name, roll })
        .collect();
    let mappings = identity::map_to_roster(&candidates, &roster(roster_entries)?, threshold);
    to_py(py, &mappings)
}

/// Finds keywords among `(text, x0, y0, x1, y1)` words in reading order.
#[pyfunction]
#[pyo3(signature = (words, keywords, question_id = "q", bundle_id = "sheet"))]
fn match_keywords(
    py: Python<'_>,
    words: Vec<(String, f64, f64, f64, f64)>,
    keywords: Vec<String>,
    question_id: &str,
    bundle_id: &str,
) -> PyResult<Py<PyAny>> {
    let words: Vec<WordBox> = words.into_iter().map(|(t, x0, y0, x1, y1)| WordBox::new(t, x0, y0, x1, y1)).collect();
    let set = highlight::match_keywords(bundle_id, &words, &KeywordSpec::new(question_id, &keywords));
    to_py(py, &set)
}

/// Number of values [`trim_values`] removes from a list of `n`.
#[pyfunction]
fn trim_count(n: usize) -> usize {
    analytics::trim_count(n)
}

/// Drops the largest 5% of durations, keeping the order of the rest.
#[pyfunction]
fn trim_values(values: Vec<u64>) -> Vec<u64> {
    analytics::trim_values(&values)
}

/// Splits sheet ids into `(with_highlights, without)` for a seed.
#[pyfunction]
fn split_submissions(bundle_ids: Vec<String>, seed: u64) -> PyResult<(Vec<String>, Vec<String>)> {
    analytics::split_submissions(&bundle_ids, seed).map_err(fail)
}

/// Percentage reduction from a control mean to a treated mean.
#[pyfunction]
#[pyo3(signature = (control, treated))]
fn reduction_pct(control: Option<f64>, treated: Option<f64>) -> Option<f64> {
    analytics::reduction_pct(control, treated)
}

/// Question regions found on the pages of a manifest, read through the
/// sidecar word files next to each page image.
#[pyfunction]
#[pyo3(signature = (manifest, pattern = None))]
fn detect_questions(py: Python<'_>, manifest: PathBuf, pattern: Option<&str>) -> PyResult<Py<PyAny>> {
    let config = match pattern {
        Some(p) => LayoutConfig::with_pattern(p).map_err(fail)?,
        None => LayoutConfig::default(),
    };
    let regions = py
        .detach(|| {
            let bundle = ingest::load_bundle(&manifest)?;
            let mut words = Vec::new();
            for page in bundle.pages() {
                words.extend(layout::recognize_page(page, bundle.page_file(page.page_index()), &SidecarRecognizer)?);
            }
            layout::detect_question_regions(&words, &config, &bundle.page_dims())
        })
        .map_err(fail)?;
    to_py(py, &regions)
}

/// Full evaluation over event log CSVs. Each file is one exam, named after
/// its file stem.
#[pyfunction]
#[pyo3(signature = (paths, sheet_trim = "sheet_level"))]
fn analyze_events(py: Python<'_>, paths: Vec<PathBuf>, sheet_trim: &str) -> PyResult<Py<PyAny>> {
    let trim = self::sheet_trim(sheet_trim)?;
    let mut exams = Vec::new();
    for path in &paths {
        let file = std::fs::File::open(path).map_err(|e| fail(format!("{}: {e}", path.display())))?;
        let events = analytics::read_events_csv(file).map_err(fail)?;
        let exam_id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        exams.push(ExamEvents { exam_id, events });
    }
    let report = analytics::analyze(&exams, trim).map_err(fail)?;
    to_py(py, &report)
}

/// The grading service backed by a SQLite file, or by memory when `db` is
/// omitted. With `clock_ms` the service runs on a hand-driven clock that
/// starts there and moves only through [`PyPlatform::advance`].
#[pyclass(name = "Platform", module = "gradepipe")]
struct PyPlatform {
    inner: Platform,
    manual: Option<ManualClock>,
}

#[pymethods]
impl PyPlatform {
    #[new]
    #[pyo3(signature = (db = None, clock_ms = None))]
    fn new(db: Option<PathBuf>, clock_ms: Option<u64>) -> PyResult<Self> {
        let store = match db {
            Some(path) => Store::open(&path),
            None => Store::in_memory(),
        }
        .map_err(fail)?;
        let manual = clock_ms.map(ManualClock::new);
        let clock: Arc<dyn Clock> = match &manual {
            Some(c) => Arc::new(c.clone()),
            None => Arc::new(MonotonicClock::new()),
        };
        Ok(Self { inner: Platform::new(store, clock, Arc::new(SidecarRecognizer)), manual })
    }

    /// Moves the hand-driven clock forward.
    fn advance(&self, ms: u64) -> PyResult<()> {
        let clock = self.manual.as_ref().ok_or_else(|| fail("this platform runs on the system clock"))?;
        clock.advance(ms);
        Ok(())
    }

    /// Registers a user and returns their API token.
    fn add_user(&self, user_id: &str, role: &str) -> PyResult<String> {
        let role = Role::parse(role).ok_or_else(|| PyValueError::new_err(format!("unknown role `{role}`")))?;
        self.inner.add_user(user_id, role).map_err(fail)
    }

    #[pyo3(signature = (exam_id, name, roster_entries = Vec::new()))]
    fn create_exam(
        &self,
        py: Python<'_>,
        exam_id: &str,
        name: &str,
        roster_entries: Vec<(String, String)>,
    ) -> PyResult<Py<PyAny>> {
        let exam = self.inner.create_exam(exam_id, name, roster(roster_entries)?).map_err(fail)?;
        to_py(py, &exam)
    }

    fn ingest(&self, py: Python<'_>, exam_id: &str, manifest: PathBuf) -> PyResult<Py<PyAny>> {
        let info = py.detach(|| self.inner.ingest(exam_id, &manifest)).map_err(fail)?;
        to_py(py, &info)
    }

    #[pyo3(signature = (exam_id, pattern = None))]
    fn detect_questions(&self, py: Python<'_>, exam_id: &str, pattern: Option<&str>) -> PyResult<Py<PyAny>> {
        let config = match pattern {
            Some(p) => LayoutConfig::with_pattern(p).map_err(fail)?,
            None => LayoutConfig::default(),
        };
        let set = py.detach(|| self.inner.detect_questions(exam_id, &config)).map_err(fail)?;
        to_py(py, &set)
    }

    fn questions(&self, py: Python<'_>, exam_id: &str) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.questions(exam_id).map_err(fail)?)
    }

    /// Confirms question types, given as `{question_id: "long" | "short" | "numerical"}`.
    fn set_types(&self, py: Python<'_>, exam_id: &str, types: Vec<(String, String)>) -> PyResult<Py<PyAny>> {
        let mut edits = Vec::new();
        for (question_id, ty) in types {
            let ty = QuestionType::parse(&ty)
                .ok_or_else(|| PyValueError::new_err(format!("unknown question type `{ty}`")))?;
            edits.push(RegionEdit::Update {
                question_id,
                rect: None,
                page_index: None,
                order: None,
                text: None,
                question_type: Some(ty),
            });
        }
        let revision = self.inner.questions(exam_id).map_err(fail)?.revision;
        let saved = self.inner.save_questions(exam_id, &SaveQuestions { revision, regions: None, edits }).map_err(fail)?;
        to_py(py, &saved)
    }

    /// Maps every sheet to the roster. Boxes are `(x0, y0, x1, y1)` on page 0.
    #[pyo3(signature = (exam_id, name_box, roll_box, threshold = DEFAULT_THRESHOLD))]
    fn map_identities(
        &self,
        py: Python<'_>,
        exam_id: &str,
        name_box: (u32, u32, u32, u32),
        roll_box: (u32, u32, u32, u32),
        threshold: usize,
    ) -> PyResult<Py<PyAny>> {
        let mappings =
            py.detach(|| self.inner.map_identities(exam_id, rect(name_box), rect(roll_box), threshold)).map_err(fail)?;
        to_py(py, &mappings)
    }

    fn correct_mapping(&self, py: Python<'_>, exam_id: &str, bundle_id: &str, roll: Option<&str>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.correct_mapping(exam_id, bundle_id, roll).map_err(fail)?)
    }

    #[pyo3(signature = (exam_id, side_margin = 16, bottom_margin = 16, vertical_offset = 0))]
    fn set_deduction(&self, exam_id: &str, side_margin: u32, bottom_margin: u32, vertical_offset: i32) -> PyResult<()> {
        let config = DeductionConfig { side_margin, bottom_margin, vertical_offset };
        self.inner.set_deduction(exam_id, &config).map_err(fail)
    }

    /// Writes every answer crop as PNG under `out`, one folder per roll.
    fn export_crops(&self, py: Python<'_>, exam_id: &str, out: PathBuf) -> PyResult<Py<PyAny>> {
        let export = py.detach(|| self.inner.export_crops(exam_id, &out)).map_err(fail)?;
        to_py(py, &export)
    }

    #[pyo3(signature = (exam_id, question_id, keywords, max_score = 10.0, rubric = String::new()))]
    fn set_keywords(
        &self,
        py: Python<'_>,
        exam_id: &str,
        question_id: &str,
        keywords: Vec<String>,
        max_score: f64,
        rubric: String,
    ) -> PyResult<Py<PyAny>> {
        let settings = QuestionSettings { question_id: question_id.to_owned(), keywords, max_score, rubric };
        to_py(py, &self.inner.set_settings(exam_id, &settings).map_err(fail)?)
    }

    fn run_highlights(&self, py: Python<'_>, exam_id: &str) -> PyResult<Py<PyAny>> {
        let summary = py.detach(|| self.inner.run_highlights(exam_id)).map_err(fail)?;
        to_py(py, &summary)
    }

    fn assign(&self, exam_id: &str, grader_id: &str, question_id: &str) -> PyResult<()> {
        self.inner.assign(exam_id, grader_id, question_id).map_err(fail)
    }

    /// Freezes the exam and draws the evaluation split. Returns the four
    /// sheet groups.
    fn open_grading(&self, py: Python<'_>, exam_id: &str, seed: u64) -> PyResult<Py<PyAny>> {
        let split = py.detach(|| self.inner.open_grading(exam_id, seed)).map_err(fail)?;
        to_py(py, &split)
    }

    /// The next response for a grader, or `{"status": "end_of_queue"}`.
    fn serve_next(&self, py: Python<'_>, exam_id: &str, grader_id: &str, question_id: &str) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.serve_next(exam_id, grader_id, question_id).map_err(fail)?)
    }

    /// The crop a grader sees for a response, as PNG bytes.
    fn response_png<'py>(&self, py: Python<'py>, bundle_id: &str, question_id: &str) -> PyResult<Bound<'py, PyBytes>> {
        let png = py
            .detach(|| self.inner.response_image(bundle_id, question_id).and_then(|img| Ok(img.encode_png()?)))
            .map_err(fail)?;
        Ok(PyBytes::new(py, &png))
    }

    fn record_grade(
        &self,
        py: Python<'_>,
        exam_id: &str,
        grader_id: &str,
        bundle_id: &str,
        question_id: &str,
        score: f64,
    ) -> PyResult<Py<PyAny>> {
        let event = self.inner.record_grade(exam_id, grader_id, bundle_id, question_id, score).map_err(fail)?;
        to_py(py, &event)
    }

    /// The event log in CSV form.
    fn export_events<'py>(&self, py: Python<'py>, exam_id: &str) -> PyResult<Bound<'py, PyBytes>> {
        let csv = self.inner.export_events(exam_id).map_err(fail)?;
        Ok(PyBytes::new(py, &csv))
    }

    #[pyo3(signature = (exam_id, seed = None, sheet_trim = "sheet_level"))]
    fn analyze(&self, py: Python<'_>, exam_id: &str, seed: Option<u64>, sheet_trim: &str) -> PyResult<Py<PyAny>> {
        let trim = self::sheet_trim(sheet_trim)?;
        to_py(py, &self.inner.analyze(exam_id, seed, trim).map_err(fail)?)
    }
}

#[pymodule]
fn gradepipe(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("GradepipeError", m.py().get_type::<GradepipeError>())?;
    m.add_function(wrap_pyfunction!(edit_distance, m)?)?;
    m.add_function(wrap_pyfunction!(normalize, m)?)?;
    m.add_function(wrap_pyfunction!(map_to_roster, m)?)?;
    m.add_function(wrap_pyfunction!(match_keywords, m)?)?;
    m.add_function(wrap_pyfunction!(trim_count, m)?)?;
    m.add_function(wrap_pyfunction!(trim_values, m)?)?;
    m.add_function(wrap_pyfunction!(split_submissions, m)?)?;
    m.add_function(wrap_pyfunction!(reduction_pct, m)?)?;
    m.add_function(wrap_pyfunction!(detect_questions, m)?)?;
    m.add_function(wrap_pyfunction!(analyze_events, m)?)?;
    m.add_class::<PyPlatform>()?;
    Ok(())
}
