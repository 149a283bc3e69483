//! The grading workflow on top of the store.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use gradepipe_core::analytics::{
    self, write_events_csv, EvaluationReport, EvaluationSplit, EventRecord, ExamEvents, SheetTrim, SplitLabel,
};
use gradepipe_core::highlight::{
    classify_sheet, match_keywords, render_highlights, HighlightSet, KeywordSpec, OverlayStyle, SheetClass,
};
use gradepipe_core::identity::{self, IdentityCandidate, IdentityMapping, MappingStatus, Roster};
use gradepipe_core::ingest::{load_bundle, BundleKind, PageBundle};
use gradepipe_core::layout::{
    detect_question_regions, recognize_crop, recognize_page, save_regions, LayoutConfig, QuestionRegion, RegionEdit,
};
use gradepipe_core::ocr::Recognizer;
use gradepipe_core::regions::{self, deduce_answer_regions, AnswerRegion, DeductionConfig};
use gradepipe_core::{PageImage, PixelRect};
use rusqlite::Connection;
use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::error::{Result, ServiceError};
use crate::store::{self, BundleRow, Claim, ExamRow, QuestionSettings, Role, Store, User};

/// How long a served response stays reserved for its grader.
pub const DEFAULT_CLAIM_TTL_MS: u64 = 30 * 60 * 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExamSummary {
    pub exam_id: String,
    pub name: String,
    pub questions: usize,
    pub submissions: usize,
    pub grading_open: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionSet {
    /// Incremented on every save; a save must quote the revision it edited.
    pub revision: u64,
    pub regions: Vec<QuestionRegion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaveQuestions {
    pub revision: u64,
    /// Replacement region set; the stored set is edited when absent.
    #[serde(default)]
    pub regions: Option<Vec<QuestionRegion>>,
    #[serde(default)]
    pub edits: Vec<RegionEdit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleInfo {
    pub bundle_id: String,
    pub kind: BundleKind,
    pub pages: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HighlightSummary {
    pub crops: usize,
    pub attempted: usize,
    pub with_matches: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CropExport {
    pub written: Vec<PathBuf>,
    /// `(bundle_id, question_id)` pairs with no room for an answer.
    pub degenerate: Vec<(String, String)>,
    pub unmapped: Vec<String>,
}

/// One response as shown to a grader.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseView {
    pub exam_id: String,
    pub bundle_id: String,
    pub question_id: String,
    pub question_text: String,
    pub rubric: String,
    pub max_score: f64,
    pub page_index: u32,
    /// Absent when the answer region is degenerate.
    pub crop_url: Option<String>,
    pub page_url: String,
    pub highlighted: bool,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum NextResponse {
    Response(ResponseView),
    EndOfQueue,
}

/// Acknowledgement of a grade, as returned to graders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradeReceipt {
    pub event_id: u64,
    pub bundle_id: String,
    pub question_id: String,
    pub score: f64,
    pub max_score: f64,
}

impl From<&EventRecord> for GradeReceipt {
    fn from(e: &EventRecord) -> Self {
        Self {
            event_id: e.event_id,
            bundle_id: e.bundle_id.clone(),
            question_id: e.question_id.clone(),
            score: e.score,
            max_score: e.max_score,
        }
    }
}

pub struct Platform {
    store: Store,
    clock: Arc<dyn Clock>,
    recognizer: Arc<dyn Recognizer>,
    claim_ttl_ms: u64,
    overlay: OverlayStyle,
    bundles: Mutex<HashMap<String, Arc<PageBundle>>>,
}

fn not_open(exam: &ExamRow) -> Result<()> {
    if exam.grading_open {
        return Err(ServiceError::State(format!("grading of `{}` is already open", exam.exam_id)));
    }
    Ok(())
}

fn question<'a>(exam: &'a ExamRow, question_id: &str) -> Result<&'a QuestionRegion> {
    exam.regions
        .iter()
        .find(|q| q.question_id == question_id)
        .ok_or_else(|| ServiceError::NotFound(format!("question `{question_id}` in exam `{}`", exam.exam_id)))
}

fn check_score(score: f64, max_score: f64) -> Result<()> {
    if !score.is_finite() || score < 0.0 || score > max_score {
        return Err(ServiceError::Validation(format!("score {score} is outside [0, {max_score}]")));
    }
    Ok(())
}

fn question_paper(conn: &Connection, exam_id: &str) -> Result<BundleRow> {
    store::bundles(conn, exam_id)?
        .into_iter()
        .find(|b| b.kind == BundleKind::QuestionPaper)
        .ok_or_else(|| ServiceError::State(format!("exam `{exam_id}` has no question paper")))
}

fn answer_sheets(conn: &Connection, exam_id: &str) -> Result<Vec<BundleRow>> {
    Ok(store::bundles(conn, exam_id)?.into_iter().filter(|b| b.kind == BundleKind::AnswerSheet).collect())
}

fn settings_map(conn: &Connection, exam: &ExamRow) -> Result<HashMap<String, QuestionSettings>> {
    let mut map: HashMap<String, QuestionSettings> =
        store::settings(conn, &exam.exam_id)?.into_iter().map(|s| (s.question_id.clone(), s)).collect();
    for q in &exam.regions {
        map.entry(q.question_id.clone()).or_insert_with(|| QuestionSettings::new(&q.question_id));
    }
    Ok(map)
}

/// Sheets in roster order of their mapped rolls, split into control and
/// treatment lists and interleaved one by one.
fn serving_order(conn: &Connection, exam: &ExamRow, split: &EvaluationSplit) -> Result<Vec<String>> {
    let mut sheets: Vec<(usize, String)> = store::mappings(conn, &exam.exam_id)?
        .into_iter()
        .filter_map(|m| {
            let pos = m.matched_roll.as_deref().and_then(|r| exam.roster.position(r))?;
            Some((pos, m.bundle_id))
        })
        .collect();
    sheets.sort();
    let (hna, ha): (Vec<_>, Vec<_>) = sheets.into_iter().map(|(_, b)| b).partition(|b| split.s_hna.contains(b));
    let mut order = Vec::with_capacity(hna.len() + ha.len());
    let mut hna = hna.into_iter();
    let mut ha = ha.into_iter();
    loop {
        match (hna.next(), ha.next()) {
            (None, None) => break,
            (a, b) => order.extend(a.into_iter().chain(b)),
        }
    }
    Ok(order)
}

impl Platform {
    pub fn new(store: Store, clock: Arc<dyn Clock>, recognizer: Arc<dyn Recognizer>) -> Self {
        Self {
            store,
            clock,
            recognizer,
            claim_ttl_ms: DEFAULT_CLAIM_TTL_MS,
            overlay: OverlayStyle::default(),
            bundles: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_claim_ttl(mut self, ms: u64) -> Self {
        self.claim_ttl_ms = ms;
        self
    }

    pub fn with_overlay(mut self, style: OverlayStyle) -> Self {
        self.overlay = style;
        self
    }

    /// The same store and clock read through another recognizer.
    pub fn set_recognizer(&mut self, recognizer: Arc<dyn Recognizer>) {
        self.recognizer = recognizer;
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    // Users

    /// Creates a user and returns its bearer token.
    pub fn add_user(&self, user_id: &str, role: Role) -> Result<String> {
        let token = uuid::Uuid::new_v4().simple().to_string();
        self.store.write(|tx| store::insert_user(tx, &User { user_id: user_id.to_owned(), role }, &token))?;
        Ok(token)
    }

    pub fn authenticate(&self, token: &str) -> Result<User> {
        self.store.read(|c| store::user_by_token(c, token))?.ok_or(ServiceError::Unauthenticated)
    }

    // Exams

    pub fn create_exam(&self, exam_id: &str, name: &str, roster: Roster) -> Result<ExamSummary> {
        if exam_id.is_empty() || exam_id.contains('/') {
            return Err(ServiceError::Validation(format!("invalid exam id `{exam_id}`")));
        }
        self.store.write(|tx| store::insert_exam(tx, exam_id, name, &roster))?;
        self.exam(exam_id)
    }

    pub fn exam(&self, exam_id: &str) -> Result<ExamSummary> {
        self.store.read(|c| {
            let exam = store::exam(c, exam_id)?;
            Ok(ExamSummary {
                questions: exam.regions.len(),
                submissions: answer_sheets(c, exam_id)?.len(),
                exam_id: exam.exam_id,
                name: exam.name,
                grading_open: exam.grading_open,
            })
        })
    }

    pub fn exams(&self) -> Result<Vec<ExamSummary>> {
        let ids = self.store.read(store::exam_ids)?;
        ids.iter().map(|id| self.exam(id)).collect()
    }

    pub fn roster(&self, exam_id: &str) -> Result<Roster> {
        Ok(self.store.read(|c| store::exam(c, exam_id))?.roster)
    }

    /// Replaces the roster; existing identity mappings are discarded.
    pub fn set_roster(&self, exam_id: &str, roster: &Roster) -> Result<()> {
        self.store.write(|tx| {
            not_open(&store::exam(tx, exam_id)?)?;
            store::set_roster(tx, exam_id, roster)?;
            tx.execute("DELETE FROM mappings WHERE exam_id = ?1", [exam_id])?;
            Ok(())
        })
    }

    pub fn set_deduction(&self, exam_id: &str, config: &DeductionConfig) -> Result<()> {
        self.store.write(|tx| {
            not_open(&store::exam(tx, exam_id)?)?;
            store::set_deduction(tx, exam_id, config)?;
            store::clear_highlights(tx, exam_id, None)
        })
    }

    // Ingest

    /// Registers the bundle described by a manifest with an exam.
    pub fn ingest(&self, exam_id: &str, manifest: &Path) -> Result<BundleInfo> {
        let bundle = load_bundle(manifest)?;
        let manifest = std::fs::canonicalize(manifest).map_err(|e| ServiceError::Core(e.into()))?;
        self.store.write(|tx| {
            let exam = store::exam(tx, exam_id)?;
            not_open(&exam)?;
            if bundle.kind == BundleKind::QuestionPaper && question_paper(tx, exam_id).is_ok() {
                return Err(ServiceError::Conflict(format!("exam `{exam_id}` already has a question paper")));
            }
            let row = BundleRow {
                bundle_id: bundle.bundle_id.clone(),
                exam_id: exam_id.to_owned(),
                kind: bundle.kind,
                manifest: manifest.clone(),
                page_dims: bundle.page_dims(),
                position: store::next_position(tx, exam_id)?,
            };
            store::insert_bundle(tx, &row)
        })?;
        let info = BundleInfo { bundle_id: bundle.bundle_id.clone(), kind: bundle.kind, pages: bundle.len() };
        self.cache().insert(bundle.bundle_id.clone(), Arc::new(bundle));
        Ok(info)
    }

    fn cache(&self) -> std::sync::MutexGuard<'_, HashMap<String, Arc<PageBundle>>> {
        self.bundles.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// The pages of a registered bundle.
    pub fn bundle(&self, bundle_id: &str) -> Result<Arc<PageBundle>> {
        if let Some(b) = self.cache().get(bundle_id) {
            return Ok(Arc::clone(b));
        }
        let row = self.store.read(|c| store::bundle(c, bundle_id))?;
        let loaded = Arc::new(load_bundle(&row.manifest)?);
        self.cache().insert(bundle_id.to_owned(), Arc::clone(&loaded));
        Ok(loaded)
    }

    pub fn bundles(&self, exam_id: &str) -> Result<Vec<BundleRow>> {
        self.store.read(|c| {
            store::exam(c, exam_id)?;
            store::bundles(c, exam_id)
        })
    }

    // Question regions

    pub fn detect_questions(&self, exam_id: &str, config: &LayoutConfig) -> Result<QuestionSet> {
        let paper = self.store.read(|c| {
            not_open(&store::exam(c, exam_id)?)?;
            question_paper(c, exam_id)
        })?;
        let bundle = self.bundle(&paper.bundle_id)?;
        let mut words = Vec::new();
        for page in bundle.pages() {
            words.extend(recognize_page(page, bundle.page_file(page.page_index()), self.recognizer.as_ref())?);
        }
        let regions = detect_question_regions(&words, config, &bundle.page_dims())?;
        self.store.write(|tx| {
            let exam = store::exam(tx, exam_id)?;
            not_open(&exam)?;
            let revision = exam.revision + 1;
            store::set_regions(tx, exam_id, &regions, revision)?;
            store::clear_highlights(tx, exam_id, None)?;
            Ok(QuestionSet { revision, regions })
        })
    }

    pub fn questions(&self, exam_id: &str) -> Result<QuestionSet> {
        let exam = self.store.read(|c| store::exam(c, exam_id))?;
        Ok(QuestionSet { revision: exam.revision, regions: exam.regions })
    }

    /// Validates and confirms an edited region set. A save quoting a stale
    /// revision is rejected, so concurrent editors cannot overwrite each other.
    pub fn save_questions(&self, exam_id: &str, request: &SaveQuestions) -> Result<QuestionSet> {
        self.store.write(|tx| {
            let exam = store::exam(tx, exam_id)?;
            not_open(&exam)?;
            if request.revision != exam.revision {
                return Err(ServiceError::Conflict(format!(
                    "questions of `{exam_id}` are at revision {}, the save was based on {}",
                    exam.revision, request.revision
                )));
            }
            let paper = question_paper(tx, exam_id)?;
            let base = request.regions.as_deref().unwrap_or(&exam.regions);
            let regions = save_regions(base, &request.edits, &paper.page_dims)?;
            let revision = exam.revision + 1;
            store::set_regions(tx, exam_id, &regions, revision)?;
            let ids: Vec<&str> = regions.iter().map(|r| r.question_id.as_str()).collect();
            for s in store::settings(tx, exam_id)? {
                if !ids.contains(&s.question_id.as_str()) {
                    store::delete_settings(tx, exam_id, &s.question_id)?;
                }
            }
            store::clear_highlights(tx, exam_id, None)?;
            Ok(QuestionSet { revision, regions })
        })
    }

    // Identities

    pub fn map_identities(
        &self,
        exam_id: &str,
        name_box: PixelRect,
        roll_box: PixelRect,
        threshold: usize,
    ) -> Result<Vec<IdentityMapping>> {
        let (exam, sheets) = self.store.read(|c| {
            let exam = store::exam(c, exam_id)?;
            not_open(&exam)?;
            Ok((exam, answer_sheets(c, exam_id)?))
        })?;
        let mut candidates = Vec::with_capacity(sheets.len());
        for sheet in &sheets {
            let bundle = self.bundle(&sheet.bundle_id)?;
            let (name, roll) = identity::extract_identity(&bundle, name_box, roll_box, self.recognizer.as_ref())?;
            candidates.push(IdentityCandidate { bundle_id: sheet.bundle_id.clone(), name, roll });
        }
        let mappings = identity::map_to_roster(&candidates, &exam.roster, threshold);
        self.store.write(|tx| {
            not_open(&store::exam(tx, exam_id)?)?;
            for m in &mappings {
                store::put_mapping(tx, exam_id, m)?;
            }
            Ok(())
        })?;
        Ok(mappings)
    }

    pub fn mappings(&self, exam_id: &str) -> Result<Vec<IdentityMapping>> {
        self.store.read(|c| {
            store::exam(c, exam_id)?;
            store::mappings(c, exam_id)
        })
    }

    /// Sets (or with `None` clears) the roll of one sheet by hand.
    pub fn correct_mapping(&self, exam_id: &str, bundle_id: &str, roll: Option<&str>) -> Result<IdentityMapping> {
        self.store.write(|tx| {
            let exam = store::exam(tx, exam_id)?;
            not_open(&exam)?;
            let mut mappings = store::mappings(tx, exam_id)?;
            if !mappings.iter().any(|m| m.bundle_id == bundle_id) {
                let sheet = store::bundle(tx, bundle_id)?;
                if sheet.exam_id != exam_id || sheet.kind != BundleKind::AnswerSheet {
                    return Err(ServiceError::NotFound(format!("answer sheet `{bundle_id}` in exam `{exam_id}`")));
                }
                mappings.push(IdentityMapping {
                    bundle_id: bundle_id.to_owned(),
                    roll_candidate: String::new(),
                    name_candidate: String::new(),
                    matched_roll: None,
                    edit_distance: 0,
                    status: MappingStatus::Unmapped,
                });
            }
            let updated = identity::correct_mapping(&mut mappings, &exam.roster, bundle_id, roll)?;
            store::put_mapping(tx, exam_id, &updated)?;
            Ok(updated)
        })
    }

    // Answer regions

    fn regions_for(&self, conn: &Connection, bundle_id: &str) -> Result<(ExamRow, BundleRow, Vec<AnswerRegion>)> {
        let sheet = store::bundle(conn, bundle_id)?;
        if sheet.kind != BundleKind::AnswerSheet {
            return Err(ServiceError::Validation(format!("`{bundle_id}` is not an answer sheet")));
        }
        let exam = store::exam(conn, &sheet.exam_id)?;
        let regions = deduce_answer_regions(bundle_id, &exam.regions, &sheet.page_dims, &exam.deduction)?;
        Ok((exam, sheet, regions))
    }

    pub fn answer_regions(&self, bundle_id: &str) -> Result<Vec<AnswerRegion>> {
        Ok(self.store.read(|c| self.regions_for(c, bundle_id))?.2)
    }

    /// The raw answer crop of one response.
    pub fn crop(&self, bundle_id: &str, question_id: &str) -> Result<PageImage> {
        let region = self
            .answer_regions(bundle_id)?
            .into_iter()
            .find(|r| r.question_id == question_id)
            .ok_or_else(|| ServiceError::NotFound(format!("question `{question_id}`")))?;
        let bundle = self.bundle(bundle_id)?;
        Ok(regions::crop(bundle.whole_page(region.page_index)?, &region)?)
    }

    pub fn page(&self, bundle_id: &str, page_index: u32) -> Result<PageImage> {
        let bundle = self.bundle(bundle_id)?;
        Ok(regions::whole_page(&bundle, page_index)?.clone())
    }

    /// Writes `<out>/<roll>/<question_id>.png` for every mapped sheet.
    pub fn export_crops(&self, exam_id: &str, out: &Path) -> Result<CropExport> {
        let (sheets, mappings) = self.store.read(|c| Ok((answer_sheets(c, exam_id)?, store::mappings(c, exam_id)?)))?;
        let rolls: HashMap<&str, &str> =
            mappings.iter().filter_map(|m| Some((m.bundle_id.as_str(), m.matched_roll.as_deref()?))).collect();
        let mut report = CropExport::default();
        for sheet in &sheets {
            let Some(roll) = rolls.get(sheet.bundle_id.as_str()) else {
                report.unmapped.push(sheet.bundle_id.clone());
                continue;
            };
            let bundle = self.bundle(&sheet.bundle_id)?;
            let dir = out.join(roll);
            std::fs::create_dir_all(&dir).map_err(|e| ServiceError::Core(e.into()))?;
            for region in self.answer_regions(&sheet.bundle_id)? {
                if region.degenerate {
                    report.degenerate.push((sheet.bundle_id.clone(), region.question_id.clone()));
                    continue;
                }
                let path = dir.join(format!("{}.png", region.question_id));
                regions::crop(bundle.whole_page(region.page_index)?, &region)?.save_png(&path)?;
                report.written.push(path);
            }
        }
        Ok(report)
    }

    // Keywords and highlighting

    pub fn settings(&self, exam_id: &str) -> Result<Vec<QuestionSettings>> {
        self.store.read(|c| {
            let exam = store::exam(c, exam_id)?;
            let map = settings_map(c, &exam)?;
            Ok(exam.regions.iter().filter_map(|q| map.get(&q.question_id).cloned()).collect())
        })
    }

    /// Stores keywords (normalized), max score and rubric for one question.
    pub fn set_settings(&self, exam_id: &str, settings: &QuestionSettings) -> Result<QuestionSettings> {
        if !settings.max_score.is_finite() || settings.max_score <= 0.0 {
            return Err(ServiceError::Validation(format!("max_score must be positive, got {}", settings.max_score)));
        }
        let spec = KeywordSpec::new(settings.question_id.clone(), &settings.keywords);
        let stored = QuestionSettings { keywords: spec.keywords().to_vec(), ..settings.clone() };
        self.store.write(|tx| {
            let exam = store::exam(tx, exam_id)?;
            not_open(&exam)?;
            question(&exam, &settings.question_id)?;
            store::put_settings(tx, exam_id, &stored)?;
            store::clear_highlights(tx, exam_id, Some(&settings.question_id))
        })?;
        Ok(stored)
    }

    /// Recognizes every answer crop and matches it against its question's
    /// keywords. Crops without keywords or without room for an answer are
    /// recorded as not attempted.
    pub fn run_highlights(&self, exam_id: &str) -> Result<HighlightSummary> {
        let (exam, sheets, settings) = self.store.read(|c| {
            let exam = store::exam(c, exam_id)?;
            not_open(&exam)?;
            let settings = settings_map(c, &exam)?;
            Ok((exam, answer_sheets(c, exam_id)?, settings))
        })?;
        let mut sets = Vec::new();
        for sheet in &sheets {
            let bundle = self.bundle(&sheet.bundle_id)?;
            let regions = deduce_answer_regions(&sheet.bundle_id, &exam.regions, &sheet.page_dims, &exam.deduction)?;
            for region in regions {
                let spec = KeywordSpec::new(region.question_id.clone(), &settings[&region.question_id].keywords);
                if spec.is_empty() || region.degenerate {
                    sets.push(HighlightSet::not_attempted(&region.question_id, &sheet.bundle_id));
                    continue;
                }
                let crop = regions::crop(bundle.whole_page(region.page_index)?, &region)?;
                let words = recognize_crop(
                    &crop,
                    bundle.page_file(region.page_index),
                    region.rect(),
                    self.recognizer.as_ref(),
                )?;
                sets.push(match_keywords(&sheet.bundle_id, &words, &spec));
            }
        }
        self.store.write(|tx| {
            not_open(&store::exam(tx, exam_id)?)?;
            store::clear_highlights(tx, exam_id, None)?;
            for set in &sets {
                store::put_highlight(tx, exam_id, set)?;
            }
            Ok(())
        })?;
        Ok(HighlightSummary {
            crops: sets.len(),
            attempted: sets.iter().filter(|s| s.attempted).count(),
            with_matches: sets.iter().filter(|s| s.has_matches()).count(),
        })
    }

    pub fn highlights(&self, exam_id: &str) -> Result<Vec<HighlightSet>> {
        self.store.read(|c| {
            store::exam(c, exam_id)?;
            store::highlights(c, exam_id)
        })
    }

    /// The image a grader sees: the crop, with highlights drawn when the
    /// sheet is in the treatment half and its crop had matches.
    pub fn response_image(&self, bundle_id: &str, question_id: &str) -> Result<PageImage> {
        let crop = self.crop(bundle_id, question_id)?;
        let overlay = self.store.read(|c| {
            let sheet = store::bundle(c, bundle_id)?;
            let exam = store::exam(c, &sheet.exam_id)?;
            let treated = exam.split.as_ref().is_some_and(|s| s.s_ha.contains(bundle_id));
            Ok(if treated { store::highlight(c, bundle_id, question_id)? } else { None })
        })?;
        match overlay {
            Some(set) if set.attempted && set.has_matches() => Ok(render_highlights(&crop, &set, &self.overlay)?),
            _ => Ok(crop),
        }
    }

    // Grading

    pub fn assign(&self, exam_id: &str, grader_id: &str, question_id: &str) -> Result<()> {
        self.store.write(|tx| {
            let exam = store::exam(tx, exam_id)?;
            question(&exam, question_id)?;
            if store::user(tx, grader_id)?.is_none() {
                return Err(ServiceError::NotFound(format!("user `{grader_id}`")));
            }
            store::assign(tx, exam_id, grader_id, question_id)
        })
    }

    pub fn assignments(&self, exam_id: &str) -> Result<Vec<(String, String)>> {
        self.store.read(|c| store::assignments(c, exam_id))
    }

    /// Checks the grading preconditions, splits the submissions with `seed`
    /// and opens grading. After this the exam's setup is frozen.
    pub fn open_grading(&self, exam_id: &str, seed: u64) -> Result<EvaluationSplit> {
        self.store.write(|tx| {
            let exam = store::exam(tx, exam_id)?;
            not_open(&exam)?;
            if exam.regions.is_empty() {
                return Err(ServiceError::State(format!("exam `{exam_id}` has no questions")));
            }
            let pending: Vec<&str> = exam
                .regions
                .iter()
                .filter(|q| !q.confirmed || q.question_type.is_none())
                .map(|q| q.question_id.as_str())
                .collect();
            if !pending.is_empty() {
                return Err(ServiceError::State(format!(
                    "questions need confirming and a type: {}",
                    pending.join(", ")
                )));
            }
            let sheets = answer_sheets(tx, exam_id)?;
            let mappings = store::mappings(tx, exam_id)?;
            let mapped: HashMap<&str, usize> = mappings
                .iter()
                .filter_map(|m| Some((m.bundle_id.as_str(), exam.roster.position(m.matched_roll.as_deref()?)?)))
                .collect();
            let unmapped: Vec<&str> =
                sheets.iter().map(|s| s.bundle_id.as_str()).filter(|b| !mapped.contains_key(b)).collect();
            if !unmapped.is_empty() {
                return Err(ServiceError::State(format!("sheets without a roster mapping: {}", unmapped.join(", "))));
            }
            if sheets.is_empty() {
                return Err(ServiceError::State(format!("exam `{exam_id}` has no answer sheets")));
            }

            let mut by_sheet: BTreeMap<String, Vec<HighlightSet>> = BTreeMap::new();
            for set in store::highlights(tx, exam_id)? {
                by_sheet.entry(set.bundle_id.clone()).or_default().push(set);
            }
            let expected = exam.regions.len();
            let missing: Vec<&str> = sheets
                .iter()
                .map(|s| s.bundle_id.as_str())
                .filter(|b| by_sheet.get(*b).map_or(0, Vec::len) != expected)
                .collect();
            if !missing.is_empty() {
                return Err(ServiceError::State(format!("highlighting has not run for: {}", missing.join(", "))));
            }

            let mut ordered: Vec<&str> = sheets.iter().map(|s| s.bundle_id.as_str()).collect();
            ordered.sort_by_key(|b| mapped[b]);
            let ids: Vec<String> = ordered.iter().map(|s| (*s).to_owned()).collect();
            let split = EvaluationSplit::build(exam_id, &ids, seed, |bundle| {
                let attempted: Vec<HighlightSet> =
                    by_sheet.get(bundle).into_iter().flatten().filter(|s| s.attempted).cloned().collect();
                classify_sheet(&attempted).unwrap_or(SheetClass::NotHighlighted)
            })?;
            split.check(&ids).map_err(ServiceError::State)?;
            store::open_grading(tx, exam_id, &split)?;
            Ok(split)
        })
    }

    pub fn split(&self, exam_id: &str) -> Result<Option<EvaluationSplit>> {
        Ok(self.store.read(|c| store::exam(c, exam_id))?.split)
    }

    fn open_exam(conn: &Connection, exam_id: &str) -> Result<(ExamRow, EvaluationSplit)> {
        let exam = store::exam(conn, exam_id)?;
        match exam.split.clone() {
            Some(split) if exam.grading_open => Ok((exam, split)),
            _ => Err(ServiceError::State(format!("grading of `{exam_id}` is not open"))),
        }
    }

    fn require_assigned(conn: &Connection, exam_id: &str, grader_id: &str, question_id: &str) -> Result<()> {
        if !store::is_assigned(conn, exam_id, grader_id, question_id)? {
            return Err(ServiceError::Forbidden(format!("`{grader_id}` is not assigned to question `{question_id}`")));
        }
        Ok(())
    }

    /// Reserves the next ungraded response of `question_id` for the grader
    /// and starts its timer. Asking again before grading re-serves the same
    /// response and restarts the timer.
    pub fn serve_next(&self, exam_id: &str, grader_id: &str, question_id: &str) -> Result<NextResponse> {
        let picked = self.store.write(|tx| {
            let (exam, split) = Self::open_exam(tx, exam_id)?;
            let q = question(&exam, question_id)?;
            Self::require_assigned(tx, exam_id, grader_id, question_id)?;
            let now = self.clock.now_ms();
            let claim = Claim { grader_id, served_at_ms: now };

            let held = store::claims_of(tx, exam_id, grader_id, question_id)?;
            let mut chosen = held.first().map(|(b, _)| b.clone());
            if chosen.is_none() {
                let graded = store::graded(tx, exam_id, question_id)?;
                for bundle in serving_order(tx, &exam, &split)? {
                    if graded.contains(&bundle) {
                        continue;
                    }
                    let free = match store::claim(tx, &bundle, question_id)? {
                        None => true,
                        Some((holder, at)) => holder == grader_id || now.saturating_sub(at) >= self.claim_ttl_ms,
                    };
                    if free {
                        chosen = Some(bundle);
                        break;
                    }
                }
            }
            let Some(bundle_id) = chosen else { return Ok(None) };
            store::put_claim(tx, exam_id, &bundle_id, question_id, claim)?;

            let sheet = store::bundle(tx, &bundle_id)?;
            let region = deduce_answer_regions(&bundle_id, &exam.regions, &sheet.page_dims, &exam.deduction)?
                .into_iter()
                .find(|r| r.question_id == question_id)
                .ok_or_else(|| ServiceError::NotFound(format!("question `{question_id}`")))?;
            let settings = settings_map(tx, &exam)?.remove(question_id).unwrap_or_else(|| QuestionSettings::new(question_id));
            let highlighted = split.s_ha.contains(&bundle_id)
                && store::highlight(tx, &bundle_id, question_id)?.is_some_and(|s| s.attempted && s.has_matches());
            Ok(Some(ResponseView {
                exam_id: exam_id.to_owned(),
                question_text: q.text.clone(),
                rubric: settings.rubric,
                max_score: settings.max_score,
                page_index: region.page_index,
                crop_url: (!region.degenerate).then(|| format!("/crops/{bundle_id}/{question_id}.png")),
                page_url: format!("/pages/{bundle_id}/{}.png", region.page_index),
                highlighted: highlighted && !region.degenerate,
                degenerate: region.degenerate,
                question_id: question_id.to_owned(),
                bundle_id,
            }))
        })?;
        Ok(picked.map_or(NextResponse::EndOfQueue, NextResponse::Response))
    }

    /// Stores the first grade of a served response. The duration is the
    /// time since the response was served to this grader.
    pub fn record_grade(
        &self,
        exam_id: &str,
        grader_id: &str,
        bundle_id: &str,
        question_id: &str,
        score: f64,
    ) -> Result<EventRecord> {
        self.store.write(|tx| {
            let (exam, split) = Self::open_exam(tx, exam_id)?;
            let q = question(&exam, question_id)?;
            Self::require_assigned(tx, exam_id, grader_id, question_id)?;
            let settings = settings_map(tx, &exam)?.remove(question_id).unwrap_or_else(|| QuestionSettings::new(question_id));
            check_score(score, settings.max_score)?;
            let now = self.clock.now_ms();

            let served_at = match store::claim(tx, bundle_id, question_id)? {
                Some((holder, at)) if holder == grader_id => at,
                Some(_) => {
                    return Err(ServiceError::State(format!(
                        "`{bundle_id}` / `{question_id}` is being graded by someone else"
                    )))
                }
                None => {
                    return match store::current_event(tx, bundle_id, question_id)? {
                        // A retried submission of a grade that already landed.
                        Some(e) if e.grader_id == grader_id && e.score == score => Ok(e),
                        Some(_) => Err(ServiceError::State(format!(
                            "`{bundle_id}` / `{question_id}` is already graded; use regrade"
                        ))),
                        None => Err(ServiceError::State(format!(
                            "`{bundle_id}` / `{question_id}` was not served to `{grader_id}`"
                        ))),
                    };
                }
            };
            if store::current_event(tx, bundle_id, question_id)?.is_some() {
                store::delete_claim(tx, bundle_id, question_id)?;
                return Err(ServiceError::State(format!("`{bundle_id}` / `{question_id}` is already graded")));
            }
            let split_label = split
                .label(bundle_id)
                .ok_or_else(|| ServiceError::State(format!("`{bundle_id}` is not part of the split")))?;
            let served_at_ms = served_at.min(now);
            let mut event = EventRecord {
                event_id: 0,
                grader_id: grader_id.to_owned(),
                bundle_id: bundle_id.to_owned(),
                question_id: question_id.to_owned(),
                question_type: q
                    .question_type
                    .ok_or_else(|| ServiceError::State(format!("question `{question_id}` has no type")))?,
                split: split_label,
                score,
                max_score: settings.max_score,
                served_at_ms,
                submitted_at_ms: now,
                duration_ms: now - served_at_ms,
                superseded: false,
            };
            event.event_id = store::insert_event(tx, exam_id, &event)?;
            store::delete_claim(tx, bundle_id, question_id)?;
            Ok(event)
        })
    }

    /// Replaces the current grade of a response. The old event stays in the
    /// log, marked superseded; the new one carries no grading time.
    pub fn regrade(
        &self,
        exam_id: &str,
        user: &User,
        bundle_id: &str,
        question_id: &str,
        score: f64,
    ) -> Result<EventRecord> {
        self.store.write(|tx| {
            let (exam, _) = Self::open_exam(tx, exam_id)?;
            question(&exam, question_id)?;
            if user.role != Role::Instructor {
                Self::require_assigned(tx, exam_id, &user.user_id, question_id)?;
            }
            let prior = store::current_event(tx, bundle_id, question_id)?.ok_or_else(|| {
                ServiceError::State(format!("`{bundle_id}` / `{question_id}` has no grade to revise"))
            })?;
            check_score(score, prior.max_score)?;
            let now = self.clock.now_ms();
            store::supersede(tx, prior.event_id)?;
            let mut event = EventRecord {
                event_id: 0,
                grader_id: user.user_id.clone(),
                score,
                served_at_ms: now,
                submitted_at_ms: now,
                duration_ms: 0,
                superseded: false,
                ..prior
            };
            event.event_id = store::insert_event(tx, exam_id, &event)?;
            Ok(event)
        })
    }

    /// The full event log, superseded events included.
    pub fn events(&self, exam_id: &str) -> Result<Vec<EventRecord>> {
        self.store.read(|c| {
            store::exam(c, exam_id)?;
            store::events(c, exam_id)
        })
    }

    pub fn export_events(&self, exam_id: &str) -> Result<Vec<u8>> {
        let events = self.events(exam_id)?;
        let mut out = Vec::new();
        write_events_csv(&events, &mut out)?;
        Ok(out)
    }

    /// Evaluates the exam's event log. `seed`, when given, must be the seed
    /// the exam was split with.
    pub fn analyze(&self, exam_id: &str, seed: Option<u64>, trim: SheetTrim) -> Result<EvaluationReport> {
        let (split, events) = self.store.read(|c| {
            let (_, split) = Self::open_exam(c, exam_id)?;
            Ok((split, store::events(c, exam_id)?))
        })?;
        if let Some(seed) = seed {
            if seed != split.seed {
                return Err(ServiceError::Validation(format!(
                    "exam `{exam_id}` was split with seed {}, not {seed}",
                    split.seed
                )));
            }
        }
        Ok(analytics::analyze(&[ExamEvents { exam_id: exam_id.to_owned(), events }], trim)?)
    }

    /// Split label of a sheet once grading is open.
    pub fn label(&self, bundle_id: &str) -> Result<Option<SplitLabel>> {
        self.store.read(|c| {
            let sheet = store::bundle(c, bundle_id)?;
            Ok(store::exam(c, &sheet.exam_id)?.split.and_then(|s| s.label(bundle_id)))
        })
    }
}
