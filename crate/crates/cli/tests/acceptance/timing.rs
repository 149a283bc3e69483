//! Grading time under a hand-driven clock, and an audit of every payload a
//! grader can receive for anything that would reveal it.

use std::path::Path;
use std::sync::Arc;

use gradepipe_core::identity::DEFAULT_THRESHOLD;
use gradepipe_core::layout::{LayoutConfig, RegionEdit};
use gradepipe_core::ocr::SidecarRecognizer;
use gradepipe_server::platform::SaveQuestions;
use gradepipe_server::{ManualClock, Platform, QuestionSettings, Role, Store};
use gradepipe_testkit::{write_exam, FixtureSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::client::{timing_keys, Server};
use crate::{ensure, Check};

const EXAM: &str = "timing";

pub struct Opened {
    pub platform: Arc<Platform>,
    pub clock: ManualClock,
    pub instructor: String,
    pub graders: Vec<String>,
    pub questions: Vec<String>,
}

/// An exam on the synthetic fixture, set up in-process and open for grading.
pub fn opened(dir: &Path) -> Result<Opened, String> {
    let err = |e: gradepipe_server::ServiceError| e.to_string();
    let fixture = write_exam(dir, &FixtureSpec::default());
    let clock = ManualClock::new(5_000_000);
    let p = Platform::new(Store::in_memory().map_err(err)?, Arc::new(clock.clone()), Arc::new(SidecarRecognizer));
    p.create_exam(EXAM, "Timing", fixture.roster.clone()).map_err(err)?;
    p.ingest(EXAM, &fixture.paper_manifest).map_err(err)?;
    for m in &fixture.sheet_manifests {
        p.ingest(EXAM, m).map_err(err)?;
    }
    let detected = p.detect_questions(EXAM, &LayoutConfig::default()).map_err(err)?;
    let edits = fixture
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
    p.save_questions(EXAM, &SaveQuestions { revision: detected.revision, regions: None, edits }).map_err(err)?;
    p.map_identities(EXAM, fixture.name_box, fixture.roll_box, DEFAULT_THRESHOLD).map_err(err)?;
    for q in &fixture.questions {
        let settings = QuestionSettings { keywords: q.keywords.clone(), ..QuestionSettings::new(&q.question_id) };
        p.set_settings(EXAM, &settings).map_err(err)?;
    }
    p.run_highlights(EXAM).map_err(err)?;
    let instructor = p.add_user("prof", Role::Instructor).map_err(err)?;
    let mut graders = Vec::new();
    for g in ["ta1", "ta2"] {
        graders.push(p.add_user(g, Role::Grader).map_err(err)?);
        for q in &fixture.questions {
            p.assign(EXAM, g, &q.question_id).map_err(err)?;
        }
    }
    p.open_grading(EXAM, 3).map_err(err)?;
    let questions = fixture.questions.iter().map(|q| q.question_id.clone()).collect();
    Ok(Opened { platform: Arc::new(p), clock, instructor, graders, questions })
}

pub fn run() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let o = opened(dir.path())?;
    let server = Server::start(Arc::clone(&o.platform))?;
    let graders: Vec<_> = o.graders.iter().map(|t| server.client(t)).collect();
    let mut payloads: Vec<(String, Value)> = Vec::new();
    let mut record = |label: &str, value: Value| payloads.push((label.to_owned(), value));

    let g = &graders[0];
    record("GET /exams", g.get("/exams")?.json()?);
    record("GET /exams/{id}", g.get(&format!("/exams/{EXAM}"))?.json()?);
    record("GET /exams/{id}/questions", g.get(&format!("/exams/{EXAM}/questions"))?.json()?);

    let mut rng = ChaCha8Rng::seed_from_u64(0x71e);
    let mut injected = Vec::new();
    for (qi, q) in o.questions.iter().enumerate() {
        loop {
            let who = rng.gen_range(0..graders.len());
            let client = &graders[who];
            let next = client.get(&format!("/exams/{EXAM}/next?question={q}"))?;
            ensure(next.status == 200, || format!("next returned {}", next.status))?;
            let view = next.json()?;
            if view["status"] == "end_of_queue" {
                record("GET next (end of queue)", view);
                break;
            }
            let bundle = view["bundle_id"].as_str().ok_or("next without bundle")?.to_owned();
            record("GET next", view);
            // Sometimes the page is reloaded: timing starts again.
            if rng.gen_bool(0.2) {
                o.clock.advance(rng.gen_range(1..90_000));
                let again = client.get(&format!("/exams/{EXAM}/next?question={q}"))?.json()?;
                ensure(again["bundle_id"] == bundle.as_str(), || "re-request served another response".into())?;
            }
            let gap: u64 = if rng.gen_bool(0.05) { 0 } else { rng.gen_range(1..600_000) };
            o.clock.advance(gap);
            let body = json!({"bundle_id": bundle, "question_id": q, "score": (qi % 5) as f64});
            let posted = client.post(&format!("/exams/{EXAM}/grades"), &body)?;
            ensure(posted.status == 200, || format!("grade rejected: {}", String::from_utf8_lossy(&posted.body)))?;
            record("POST grades", posted.json()?);
            // A network retry of the same submission.
            if rng.gen_bool(0.1) {
                let retry = client.post(&format!("/exams/{EXAM}/grades"), &body)?;
                ensure(retry.status == 200, || "retry rejected".into())?;
                record("POST grades (retry)", retry.json()?);
            }
            injected.push((bundle, q.clone(), gap));
            o.clock.advance(rng.gen_range(0..3_000));
        }
    }

    let (bundle, q, _) = &injected[0];
    let regrade = g.put(&format!("/exams/{EXAM}/grades"), &json!({"bundle_id": bundle, "question_id": q, "score": 1.0}))?;
    record("PUT grades", regrade.json()?);
    let too_high = json!({"bundle_id": bundle, "question_id": q, "score": 1000.0});
    record("422 body", g.put(&format!("/exams/{EXAM}/grades"), &too_high)?.json()?);
    let unserved = json!({"bundle_id": bundle, "question_id": "q999", "score": 1.0});
    record("error body", g.post(&format!("/exams/{EXAM}/grades"), &unserved)?.json()?);
    record("403 body", g.get(&format!("/exams/{EXAM}/report"))?.json()?);
    record("404 body", g.get("/exams/missing")?.json()?);
    record("401 body", server.client("nobody").get("/exams")?.json()?);

    // Durations recorded server-side must equal the injected gaps.
    let events = o.platform.events(EXAM).map_err(|e| e.to_string())?;
    for (bundle, q, gap) in &injected {
        let first = events
            .iter()
            .filter(|e| &e.bundle_id == bundle && &e.question_id == q)
            .min_by_key(|e| e.event_id)
            .ok_or_else(|| format!("no event for {bundle}/{q}"))?;
        ensure(first.duration_ms == *gap, || format!("{bundle}/{q}: recorded {} ms, injected {gap} ms", first.duration_ms))?;
    }
    ensure(events.len() == injected.len() + 1, || format!("{} events for {} grades and one regrade", events.len(), injected.len()))?;

    for (label, value) in &payloads {
        let leaked = timing_keys(value);
        ensure(leaked.is_empty(), || format!("{label} exposes {leaked:?}"))?;
    }
    // The audit does catch timing fields where they are allowed.
    let report = server.client(&o.instructor).get(&format!("/exams/{EXAM}/report"))?.json()?;
    ensure(!timing_keys(&report).is_empty(), || "audit found nothing in the instructor report".into())?;
    server.stop();
    Ok(format!(
        "{} durations equal their injected gaps; {} grader payloads carry no timing fields",
        injected.len(),
        payloads.len()
    ))
}
