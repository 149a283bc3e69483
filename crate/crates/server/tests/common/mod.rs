#![allow(dead_code)]

use std::sync::Arc;

use gradepipe_core::identity::DEFAULT_THRESHOLD;
use gradepipe_core::layout::{LayoutConfig, RegionEdit};
use gradepipe_core::ocr::SidecarRecognizer;
use gradepipe_server::platform::SaveQuestions;
use gradepipe_server::{ManualClock, Platform, QuestionSettings, Role, Store};
use gradepipe_testkit::{write_exam, ExamFixture, FixtureSpec};

pub const EXAM: &str = "cs201-mid";
pub const SEED: u64 = 11;

pub struct Setup {
    pub platform: Arc<Platform>,
    pub clock: ManualClock,
    pub fixture: ExamFixture,
    pub instructor: String,
    pub graders: Vec<(String, String)>,
    _dir: tempfile::TempDir,
}

pub fn platform(clock: &ManualClock) -> Platform {
    Platform::new(Store::in_memory().unwrap(), Arc::new(clock.clone()), Arc::new(SidecarRecognizer))
}

/// Exam ingested, questions detected and confirmed with types, identities
/// mapped, keywords set and highlighting run. Grading is not yet open.
pub fn prepared(spec: &FixtureSpec) -> Setup {
    let dir = tempfile::tempdir().unwrap();
    let fixture = write_exam(dir.path(), spec);
    let clock = ManualClock::new(1_000_000);
    let p = platform(&clock);
    p.create_exam(EXAM, "Computer Organisation midterm", fixture.roster.clone()).unwrap();
    p.ingest(EXAM, &fixture.paper_manifest).unwrap();
    for m in &fixture.sheet_manifests {
        p.ingest(EXAM, m).unwrap();
    }
    let detected = p.detect_questions(EXAM, &LayoutConfig::default()).unwrap();
    let edits: Vec<RegionEdit> = fixture
        .questions
        .iter()
        .map(|q| RegionEdit::Update {
            question_id: q.question_id.clone(),
            rect: None,
            page_index: None,
            order: None,
            text: None,
            question_type: Some(q.question_type),
        })
        .collect();
    p.save_questions(EXAM, &SaveQuestions { revision: detected.revision, regions: None, edits }).unwrap();
    p.map_identities(EXAM, fixture.name_box, fixture.roll_box, DEFAULT_THRESHOLD).unwrap();
    for q in &fixture.questions {
        p.set_settings(
            EXAM,
            &QuestionSettings {
                question_id: q.question_id.clone(),
                keywords: q.keywords.clone(),
                max_score: 5.0,
                rubric: format!("Full marks for mentioning {}", q.keywords.join(" or ")),
            },
        )
        .unwrap();
    }
    p.run_highlights(EXAM).unwrap();
    let instructor = p.add_user("prof", Role::Instructor).unwrap();
    let graders = ["ta1", "ta2"]
        .iter()
        .map(|g| {
            let token = p.add_user(g, Role::Grader).unwrap();
            for q in &fixture.questions {
                p.assign(EXAM, g, &q.question_id).unwrap();
            }
            ((*g).to_owned(), token)
        })
        .collect();
    Setup { platform: Arc::new(p), clock, fixture, instructor, graders, _dir: dir }
}

pub fn opened(spec: &FixtureSpec) -> Setup {
    let s = prepared(spec);
    s.platform.open_grading(EXAM, SEED).unwrap();
    s
}
