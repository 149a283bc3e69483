//! The whole pipeline on a synthetic 10-question, 12-sheet exam, twice. Set-up
//! and analysis go through the `gradepipe` binary; grading goes through the
//! HTTP API with a scripted client whose think time is fixed per response.

use std::path::Path;
use std::process::Command;
use std::sync::Arc;

use gradepipe_core::ocr::SidecarRecognizer;
use gradepipe_server::{ManualClock, Platform, Store};
use gradepipe_testkit::{write_exam, FixtureSpec};
use serde_json::{json, Value};

use crate::client::Server;
use crate::{ensure, Check};

const EXAM: &str = "cs201-e2e";
const SEED: &str = "17";

struct Cli<'a> {
    data: &'a Path,
}

impl Cli<'_> {
    fn run(&self, args: &[&str]) -> Result<String, String> {
        let out = Command::new(env!("CARGO_BIN_EXE_gradepipe"))
            .arg("--data-dir")
            .arg(self.data)
            .args(args)
            .env_remove("GRADEPIPE_DB")
            .env_remove("GRADEPIPE_OCR_URL")
            .env("RUST_LOG", "warn")
            .output()
            .map_err(|e| e.to_string())?;
        ensure(out.status.success(), || format!("gradepipe {args:?}: {}", String::from_utf8_lossy(&out.stderr)))?;
        String::from_utf8(out.stdout).map_err(|e| e.to_string())
    }

    fn json(&self, args: &[&str]) -> Result<Value, String> {
        serde_json::from_str(&self.run(args)?).map_err(|e| e.to_string())
    }
}

/// Fixed think time for a response: longer questions take longer, and a
/// highlighted crop is read faster.
fn think_ms(question: &str, bundle: &str, highlighted: bool) -> u64 {
    let q: u64 = question.trim_start_matches('q').parse().unwrap_or(0);
    let sheet: u64 = bundle.rsplit('-').next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let base = 20_000 + 4_000 * q + 250 * sheet;
    if highlighted {
        base * 3 / 4
    } else {
        base
    }
}

struct Outputs {
    report_json: Vec<u8>,
    report_csv: Vec<u8>,
    events_csv: Vec<u8>,
    detail: String,
}

fn pipeline(root: &Path) -> Result<Outputs, String> {
    let fixture = write_exam(&root.join("scans"), &FixtureSpec::default());
    let roster = root.join("roster.csv");
    std::fs::write(&roster, fixture.roster_csv()).map_err(|e| e.to_string())?;
    let data = root.join("data");
    let cli = Cli { data: &data };
    let rect = |r: gradepipe_core::PixelRect| format!("{},{},{},{}", r.x0, r.y0, r.x1, r.y1);

    cli.run(&["exam", "create", "--exam", EXAM, "--name", "Computer Organisation"])?;
    cli.run(&["ingest", "--exam", EXAM, "--manifest", &fixture.paper_manifest.to_string_lossy()])?;
    for m in &fixture.sheet_manifests {
        cli.run(&["ingest", "--exam", EXAM, "--manifest", &m.to_string_lossy()])?;
    }
    let detected = cli.json(&["detect-questions", "--exam", EXAM])?;
    let found = detected["regions"].as_array().map_or(0, Vec::len);
    ensure(found == 10, || format!("detected {found} questions"))?;
    let types: Vec<String> =
        fixture.questions.iter().map(|q| format!("{}={}", q.question_id, q.question_type.as_str())).collect();
    cli.run(&["exam", "types", "--exam", EXAM, "--types", &types.join(",")])?;

    let mappings = cli.json(&[
        "map-identities",
        "--exam",
        EXAM,
        "--roster",
        &roster.to_string_lossy(),
        "--name-box",
        &rect(fixture.name_box),
        "--roll-box",
        &rect(fixture.roll_box),
    ])?;
    let auto = mappings.as_array().map_or(0, |m| m.iter().filter(|m| m["status"] == "auto").count());
    ensure(auto == 12, || format!("{auto} of 12 sheets mapped automatically"))?;

    let crops = cli.json(&["crop", "--exam", EXAM, "--out", &root.join("crops").to_string_lossy()])?;
    ensure(crops["written"] == 120, || format!("crop wrote {}", crops["written"]))?;

    let settings: Vec<Value> = fixture
        .questions
        .iter()
        .map(|q| json!({"question_id": q.question_id, "keywords": q.keywords, "max_score": 5, "rubric": "see key"}))
        .collect();
    let settings_file = root.join("keywords.json");
    std::fs::write(&settings_file, Value::Array(settings).to_string()).map_err(|e| e.to_string())?;
    cli.run(&["exam", "keywords", "--exam", EXAM, "--file", &settings_file.to_string_lossy()])?;
    let highlighted = cli.json(&["highlight", "--exam", EXAM])?;
    ensure(highlighted["crops"] == 120, || format!("highlighted {}", highlighted["crops"]))?;

    let instructor = cli.run(&["user", "add", "--id", "prof", "--role", "instructor"])?.trim().to_owned();
    let grader = cli.run(&["user", "add", "--id", "ta1", "--role", "grader"])?.trim().to_owned();
    let all: Vec<&str> = fixture.questions.iter().map(|q| q.question_id.as_str()).collect();
    cli.run(&["exam", "assign", "--exam", EXAM, "--grader", "ta1", "--questions", &all.join(",")])?;
    cli.run(&["exam", "open", "--exam", EXAM, "--seed", SEED])?;

    // Grading: the same database served with a hand-driven clock.
    let clock = ManualClock::new(1_700_000_000_000);
    let store = Store::open(&data.join("gradepipe.db")).map_err(|e| e.to_string())?;
    let platform = Arc::new(Platform::new(store, Arc::new(clock.clone()), Arc::new(SidecarRecognizer)));
    let server = Server::start(Arc::clone(&platform))?;
    let client = server.client(&grader);
    let mut graded = 0;
    for q in &all {
        loop {
            let view = client.get(&format!("/exams/{EXAM}/next?question={q}"))?.json()?;
            if view["status"] == "end_of_queue" {
                break;
            }
            let bundle = view["bundle_id"].as_str().ok_or("no bundle in view")?.to_owned();
            let crop = client.get(view["crop_url"].as_str().ok_or("no crop url")?)?;
            ensure(crop.status == 200 && crop.body.starts_with(b"\x89PNG"), || "crop image not served".into())?;
            clock.advance(think_ms(q, &bundle, view["highlighted"] == true));
            let grade = json!({"bundle_id": bundle, "question_id": q, "score": 3});
            let r = client.post(&format!("/exams/{EXAM}/grades"), &grade)?;
            ensure(r.status == 200, || format!("grade rejected: {}", String::from_utf8_lossy(&r.body)))?;
            graded += 1;
            clock.advance(1_500);
        }
    }
    let events_csv = server.client(&instructor).get(&format!("/exams/{EXAM}/events.csv"))?.body;
    server.stop();
    drop(platform);
    ensure(graded == 120, || format!("{graded} responses graded"))?;

    let out = root.join("report");
    let summary = cli.json(&["analyze", "--exam", EXAM, "--seed", SEED, "--out", &out.to_string_lossy()])?;
    let read = |name: &str| std::fs::read(out.join(name)).map_err(|e| e.to_string());
    Ok(Outputs {
        report_json: read("report.json")?,
        report_csv: read("report.csv")?,
        events_csv,
        detail: format!(
            "per response {:.2}%, per sheet {:.2}%",
            summary["avg_reduction_per_response_pct"].as_f64().unwrap_or(f64::NAN),
            summary["avg_reduction_per_sheet_pct"].as_f64().unwrap_or(f64::NAN)
        ),
    })
}

pub fn run() -> Check {
    let first = tempfile::tempdir().map_err(|e| e.to_string())?;
    let second = tempfile::tempdir().map_err(|e| e.to_string())?;
    let a = pipeline(first.path())?;
    let b = pipeline(second.path())?;
    ensure(a.report_json == b.report_json, || "report.json differs between runs".into())?;
    ensure(a.report_csv == b.report_csv, || "report.csv differs between runs".into())?;
    ensure(a.events_csv == b.events_csv, || "event log differs between runs".into())?;
    Ok(format!("120 responses graded over HTTP; two runs give byte-identical reports ({})", a.detail))
}
