//! Single-file SQLite persistence.

use std::path::{Path, PathBuf};
use std::sync::{Mutex, MutexGuard};

use gradepipe_core::analytics::{EvaluationSplit, EventRecord, SplitLabel};
use gradepipe_core::highlight::HighlightSet;
use gradepipe_core::identity::{IdentityMapping, Roster};
use gradepipe_core::ingest::BundleKind;
use gradepipe_core::layout::{QuestionRegion, QuestionType};
use gradepipe_core::regions::DeductionConfig;
use gradepipe_core::PageDims;
use rusqlite::{params, Connection, OptionalExtension, Transaction};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Result, ServiceError};

pub const SCHEMA_VERSION: i64 = 1;

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS meta (key TEXT PRIMARY KEY, value TEXT NOT NULL);
CREATE TABLE IF NOT EXISTS users (
    user_id TEXT PRIMARY KEY,
    role TEXT NOT NULL,
    token TEXT NOT NULL UNIQUE
);
CREATE TABLE IF NOT EXISTS exams (
    exam_id TEXT PRIMARY KEY,
    name TEXT NOT NULL,
    roster TEXT NOT NULL,
    regions TEXT NOT NULL DEFAULT '[]',
    regions_revision INTEGER NOT NULL DEFAULT 0,
    deduction TEXT NOT NULL,
    split TEXT,
    grading_open INTEGER NOT NULL DEFAULT 0
);
CREATE TABLE IF NOT EXISTS bundles (
    bundle_id TEXT PRIMARY KEY,
    exam_id TEXT NOT NULL REFERENCES exams(exam_id),
    kind TEXT NOT NULL,
    manifest TEXT NOT NULL,
    page_dims TEXT NOT NULL,
    position INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS mappings (
    bundle_id TEXT PRIMARY KEY REFERENCES bundles(bundle_id),
    exam_id TEXT NOT NULL,
    mapping TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS keywords (
    exam_id TEXT NOT NULL,
    question_id TEXT NOT NULL,
    settings TEXT NOT NULL,
    PRIMARY KEY (exam_id, question_id)
);
CREATE TABLE IF NOT EXISTS highlights (
    bundle_id TEXT NOT NULL,
    question_id TEXT NOT NULL,
    exam_id TEXT NOT NULL,
    highlight TEXT NOT NULL,
    PRIMARY KEY (bundle_id, question_id)
);
CREATE TABLE IF NOT EXISTS assignments (
    exam_id TEXT NOT NULL,
    grader_id TEXT NOT NULL,
    question_id TEXT NOT NULL,
    PRIMARY KEY (exam_id, grader_id, question_id)
);
CREATE TABLE IF NOT EXISTS claims (
    bundle_id TEXT NOT NULL,
    exam_id TEXT NOT NULL,
    question_id TEXT NOT NULL,
    grader_id TEXT NOT NULL,
    served_at_ms INTEGER NOT NULL,
    PRIMARY KEY (bundle_id, question_id)
);
CREATE TABLE IF NOT EXISTS events (
    event_id INTEGER PRIMARY KEY AUTOINCREMENT,
    exam_id TEXT NOT NULL,
    grader_id TEXT NOT NULL,
    bundle_id TEXT NOT NULL,
    question_id TEXT NOT NULL,
    question_type TEXT NOT NULL,
    split TEXT NOT NULL,
    score REAL NOT NULL,
    max_score REAL NOT NULL,
    served_at_ms INTEGER NOT NULL,
    submitted_at_ms INTEGER NOT NULL,
    duration_ms INTEGER NOT NULL,
    superseded INTEGER NOT NULL DEFAULT 0
);
CREATE UNIQUE INDEX IF NOT EXISTS events_current ON events (bundle_id, question_id) WHERE superseded = 0;
CREATE INDEX IF NOT EXISTS events_exam ON events (exam_id);
";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Instructor,
    Grader,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Instructor => "instructor",
            Role::Grader => "grader",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "instructor" => Some(Role::Instructor),
            "grader" => Some(Role::Grader),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct User {
    pub user_id: String,
    pub role: Role,
}

#[derive(Debug, Clone)]
pub struct ExamRow {
    pub exam_id: String,
    pub name: String,
    pub roster: Roster,
    pub regions: Vec<QuestionRegion>,
    pub revision: u64,
    pub deduction: DeductionConfig,
    pub split: Option<EvaluationSplit>,
    pub grading_open: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleRow {
    pub bundle_id: String,
    pub exam_id: String,
    pub kind: BundleKind,
    pub manifest: PathBuf,
    pub page_dims: Vec<PageDims>,
    pub position: u32,
}

/// Per-question grading settings chosen by the instructor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionSettings {
    pub question_id: String,
    #[serde(default)]
    pub keywords: Vec<String>,
    #[serde(default = "default_max_score")]
    pub max_score: f64,
    #[serde(default)]
    pub rubric: String,
}

fn default_max_score() -> f64 {
    10.0
}

impl QuestionSettings {
    pub fn new(question_id: impl Into<String>) -> Self {
        Self { question_id: question_id.into(), keywords: Vec::new(), max_score: default_max_score(), rubric: String::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Claim<'a> {
    pub grader_id: &'a str,
    pub served_at_ms: u64,
}

pub struct Store {
    conn: Mutex<Connection>,
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string(value).map_err(|e| ServiceError::Core(e.into()))
}

fn from_json<T: DeserializeOwned>(raw: &str) -> Result<T> {
    serde_json::from_str(raw).map_err(|e| ServiceError::Core(e.into()))
}

fn label_from_str(s: &str) -> Result<SplitLabel> {
    from_json(&format!("\"{s}\""))
}

impl Store {
    pub fn open(path: &Path) -> Result<Self> {
        Self::init(Connection::open(path)?)
    }

    pub fn in_memory() -> Result<Self> {
        Self::init(Connection::open_in_memory()?)
    }

    fn init(conn: Connection) -> Result<Self> {
        conn.pragma_update(None, "journal_mode", "WAL")?;
        conn.pragma_update(None, "foreign_keys", "ON")?;
        conn.execute_batch(SCHEMA)?;
        let version: Option<String> =
            conn.query_row("SELECT value FROM meta WHERE key = 'schema_version'", [], |r| r.get(0)).optional()?;
        match version {
            None => {
                conn.execute("INSERT INTO meta (key, value) VALUES ('schema_version', ?1)", [SCHEMA_VERSION.to_string()])?;
            }
            Some(v) if v == SCHEMA_VERSION.to_string() => {}
            Some(v) => {
                return Err(ServiceError::State(format!(
                    "store has schema version {v}, this build expects {SCHEMA_VERSION}"
                )))
            }
        }
        Ok(Self { conn: Mutex::new(conn) })
    }

    fn lock(&self) -> MutexGuard<'_, Connection> {
        self.conn.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Runs `f` in one transaction; it commits only when `f` succeeds.
    pub fn write<T>(&self, f: impl FnOnce(&Transaction<'_>) -> Result<T>) -> Result<T> {
        let mut conn = self.lock();
        let tx = conn.transaction()?;
        let out = f(&tx)?;
        tx.commit()?;
        Ok(out)
    }

    /// Runs `f` against a consistent snapshot.
    pub fn read<T>(&self, f: impl FnOnce(&Connection) -> Result<T>) -> Result<T> {
        let mut conn = self.lock();
        let tx = conn.transaction()?;
        f(&tx)
    }
}

// Users

pub fn insert_user(conn: &Connection, user: &User, token: &str) -> Result<()> {
    conn.execute(
        "INSERT INTO users (user_id, role, token) VALUES (?1, ?2, ?3)",
        params![user.user_id, user.role.as_str(), token],
    )
    .map_err(|e| match e {
        rusqlite::Error::SqliteFailure(f, _) if f.code == rusqlite::ErrorCode::ConstraintViolation => {
            ServiceError::Conflict(format!("user `{}` already exists", user.user_id))
        }
        other => other.into(),
    })?;
    Ok(())
}

pub fn user_by_token(conn: &Connection, token: &str) -> Result<Option<User>> {
    let row: Option<(String, String)> = conn
        .query_row("SELECT user_id, role FROM users WHERE token = ?1", [token], |r| Ok((r.get(0)?, r.get(1)?)))
        .optional()?;
    Ok(row.and_then(|(user_id, role)| Role::parse(&role).map(|role| User { user_id, role })))
}

pub fn user(conn: &Connection, user_id: &str) -> Result<Option<User>> {
    let row: Option<String> =
        conn.query_row("SELECT role FROM users WHERE user_id = ?1", [user_id], |r| r.get(0)).optional()?;
    Ok(row.and_then(|role| Role::parse(&role).map(|role| User { user_id: user_id.to_owned(), role })))
}

// Exams

pub fn insert_exam(conn: &Connection, exam_id: &str, name: &str, roster: &Roster) -> Result<()> {
    let exists: bool = conn.query_row("SELECT COUNT(*) FROM exams WHERE exam_id = ?1", [exam_id], |r| r.get::<_, i64>(0))? > 0;
    if exists {
        return Err(ServiceError::Conflict(format!("exam `{exam_id}` already exists")));
    }
    conn.execute(
        "INSERT INTO exams (exam_id, name, roster, deduction) VALUES (?1, ?2, ?3, ?4)",
        params![exam_id, name, to_json(roster)?, to_json(&DeductionConfig::default())?],
    )?;
    Ok(())
}

pub fn exam_ids(conn: &Connection) -> Result<Vec<String>> {
    let mut stmt = conn.prepare("SELECT exam_id FROM exams ORDER BY exam_id")?;
    let ids = stmt.query_map([], |r| r.get(0))?.collect::<rusqlite::Result<Vec<String>>>()?;
    Ok(ids)
}

pub fn exam(conn: &Connection, exam_id: &str) -> Result<ExamRow> {
    let row = conn
        .query_row(
            "SELECT name, roster, regions, regions_revision, deduction, split, grading_open FROM exams WHERE exam_id = ?1",
            [exam_id],
            |r| {
                Ok((
                    r.get::<_, String>(0)?,
                    r.get::<_, String>(1)?,
                    r.get::<_, String>(2)?,
                    r.get::<_, i64>(3)?,
                    r.get::<_, String>(4)?,
                    r.get::<_, Option<String>>(5)?,
                    r.get::<_, bool>(6)?,
                ))
            },
        )
        .optional()?
        .ok_or_else(|| ServiceError::NotFound(format!("exam `{exam_id}`")))?;
    Ok(ExamRow {
        exam_id: exam_id.to_owned(),
        name: row.0,
        roster: from_json(&row.1)?,
        regions: from_json(&row.2)?,
        revision: row.3 as u64,
        deduction: from_json(&row.4)?,
        split: row.5.as_deref().map(from_json).transpose()?,
        grading_open: row.6,
    })
}

pub fn set_regions(conn: &Connection, exam_id: &str, regions: &[QuestionRegion], revision: u64) -> Result<()> {
    conn.execute(
        "UPDATE exams SET regions = ?2, regions_revision = ?3 WHERE exam_id = ?1",
        params![exam_id, to_json(&regions)?, revision as i64],
    )?;
    Ok(())
}

pub fn set_roster(conn: &Connection, exam_id: &str, roster: &Roster) -> Result<()> {
    conn.execute("UPDATE exams SET roster = ?2 WHERE exam_id = ?1", params![exam_id, to_json(roster)?])?;
    Ok(())
}

pub fn set_deduction(conn: &Connection, exam_id: &str, config: &DeductionConfig) -> Result<()> {
    conn.execute("UPDATE exams SET deduction = ?2 WHERE exam_id = ?1", params![exam_id, to_json(config)?])?;
    Ok(())
}

pub fn open_grading(conn: &Connection, exam_id: &str, split: &EvaluationSplit) -> Result<()> {
    conn.execute(
        "UPDATE exams SET split = ?2, grading_open = 1 WHERE exam_id = ?1",
        params![exam_id, to_json(split)?],
    )?;
    Ok(())
}

// Bundles

pub fn insert_bundle(conn: &Connection, row: &BundleRow) -> Result<()> {
    let exists: i64 = conn.query_row("SELECT COUNT(*) FROM bundles WHERE bundle_id = ?1", [&row.bundle_id], |r| r.get(0))?;
    if exists > 0 {
        return Err(ServiceError::Conflict(format!("bundle `{}` already exists", row.bundle_id)));
    }
    conn.execute(
        "INSERT INTO bundles (bundle_id, exam_id, kind, manifest, page_dims, position) VALUES (?1, ?2, ?3, ?4, ?5, ?6)",
        params![
            row.bundle_id,
            row.exam_id,
            to_json(&row.kind)?,
            row.manifest.to_string_lossy(),
            to_json(&row.page_dims)?,
            row.position
        ],
    )?;
    Ok(())
}

fn bundle_from_row(r: &rusqlite::Row<'_>) -> rusqlite::Result<(String, String, String, String, String, u32)> {
    Ok((r.get(0)?, r.get(1)?, r.get(2)?, r.get(3)?, r.get(4)?, r.get(5)?))
}

fn decode_bundle(raw: (String, String, String, String, String, u32)) -> Result<BundleRow> {
    Ok(BundleRow {
        bundle_id: raw.0,
        exam_id: raw.1,
        kind: from_json(&raw.2)?,
        manifest: PathBuf::from(raw.3),
        page_dims: from_json(&raw.4)?,
        position: raw.5,
    })
}

const BUNDLE_COLUMNS: &str = "bundle_id, exam_id, kind, manifest, page_dims, position";

pub fn bundle(conn: &Connection, bundle_id: &str) -> Result<BundleRow> {
    let raw = conn
        .query_row(&format!("SELECT {BUNDLE_COLUMNS} FROM bundles WHERE bundle_id = ?1"), [bundle_id], bundle_from_row)
        .optional()?
        .ok_or_else(|| ServiceError::NotFound(format!("bundle `{bundle_id}`")))?;
    decode_bundle(raw)
}

/// Bundles of an exam in ingestion order.
pub fn bundles(conn: &Connection, exam_id: &str) -> Result<Vec<BundleRow>> {
    let mut stmt =
        conn.prepare(&format!("SELECT {BUNDLE_COLUMNS} FROM bundles WHERE exam_id = ?1 ORDER BY position"))?;
    let raws = stmt.query_map([exam_id], bundle_from_row)?.collect::<rusqlite::Result<Vec<_>>>()?;
    raws.into_iter().map(decode_bundle).collect()
}

pub fn next_position(conn: &Connection, exam_id: &str) -> Result<u32> {
    Ok(conn.query_row("SELECT COALESCE(MAX(position) + 1, 0) FROM bundles WHERE exam_id = ?1", [exam_id], |r| r.get(0))?)
}

// Identity mappings

pub fn put_mapping(conn: &Connection, exam_id: &str, mapping: &IdentityMapping) -> Result<()> {
    conn.execute(
        "INSERT INTO mappings (bundle_id, exam_id, mapping) VALUES (?1, ?2, ?3)
         ON CONFLICT (bundle_id) DO UPDATE SET mapping = excluded.mapping",
        params![mapping.bundle_id, exam_id, to_json(mapping)?],
    )?;
    Ok(())
}

pub fn mappings(conn: &Connection, exam_id: &str) -> Result<Vec<IdentityMapping>> {
    let mut stmt = conn.prepare(
        "SELECT m.mapping FROM mappings m JOIN bundles b ON b.bundle_id = m.bundle_id
         WHERE m.exam_id = ?1 ORDER BY b.position",
    )?;
    let raws = stmt.query_map([exam_id], |r| r.get::<_, String>(0))?.collect::<rusqlite::Result<Vec<_>>>()?;
    raws.iter().map(|r| from_json(r)).collect()
}

// Question settings

pub fn put_settings(conn: &Connection, exam_id: &str, settings: &QuestionSettings) -> Result<()> {
    conn.execute(
        "INSERT INTO keywords (exam_id, question_id, settings) VALUES (?1, ?2, ?3)
         ON CONFLICT (exam_id, question_id) DO UPDATE SET settings = excluded.settings",
        params![exam_id, settings.question_id, to_json(settings)?],
    )?;
    Ok(())
}

pub fn settings(conn: &Connection, exam_id: &str) -> Result<Vec<QuestionSettings>> {
    let mut stmt = conn.prepare("SELECT settings FROM keywords WHERE exam_id = ?1")?;
    let raws = stmt.query_map([exam_id], |r| r.get::<_, String>(0))?.collect::<rusqlite::Result<Vec<_>>>()?;
    raws.iter().map(|r| from_json(r)).collect()
}

pub fn delete_settings(conn: &Connection, exam_id: &str, question_id: &str) -> Result<()> {
    conn.execute("DELETE FROM keywords WHERE exam_id = ?1 AND question_id = ?2", params![exam_id, question_id])?;
    Ok(())
}

// Highlights

pub fn put_highlight(conn: &Connection, exam_id: &str, set: &HighlightSet) -> Result<()> {
    conn.execute(
        "INSERT INTO highlights (bundle_id, question_id, exam_id, highlight) VALUES (?1, ?2, ?3, ?4)
         ON CONFLICT (bundle_id, question_id) DO UPDATE SET highlight = excluded.highlight",
        params![set.bundle_id, set.question_id, exam_id, to_json(set)?],
    )?;
    Ok(())
}

pub fn highlight(conn: &Connection, bundle_id: &str, question_id: &str) -> Result<Option<HighlightSet>> {
    let raw: Option<String> = conn
        .query_row(
            "SELECT highlight FROM highlights WHERE bundle_id = ?1 AND question_id = ?2",
            params![bundle_id, question_id],
            |r| r.get(0),
        )
        .optional()?;
    raw.as_deref().map(from_json).transpose()
}

pub fn highlights(conn: &Connection, exam_id: &str) -> Result<Vec<HighlightSet>> {
    let mut stmt = conn.prepare("SELECT highlight FROM highlights WHERE exam_id = ?1 ORDER BY bundle_id, question_id")?;
    let raws = stmt.query_map([exam_id], |r| r.get::<_, String>(0))?.collect::<rusqlite::Result<Vec<_>>>()?;
    raws.iter().map(|r| from_json(r)).collect()
}

/// Drops stored highlights, for one question or (with `None`) the whole exam.
pub fn clear_highlights(conn: &Connection, exam_id: &str, question_id: Option<&str>) -> Result<()> {
    match question_id {
        Some(q) => conn.execute("DELETE FROM highlights WHERE exam_id = ?1 AND question_id = ?2", params![exam_id, q])?,
        None => conn.execute("DELETE FROM highlights WHERE exam_id = ?1", [exam_id])?,
    };
    Ok(())
}

// Assignments

pub fn assign(conn: &Connection, exam_id: &str, grader_id: &str, question_id: &str) -> Result<()> {
    conn.execute(
        "INSERT OR IGNORE INTO assignments (exam_id, grader_id, question_id) VALUES (?1, ?2, ?3)",
        params![exam_id, grader_id, question_id],
    )?;
    Ok(())
}

pub fn is_assigned(conn: &Connection, exam_id: &str, grader_id: &str, question_id: &str) -> Result<bool> {
    let n: i64 = conn.query_row(
        "SELECT COUNT(*) FROM assignments WHERE exam_id = ?1 AND grader_id = ?2 AND question_id = ?3",
        params![exam_id, grader_id, question_id],
        |r| r.get(0),
    )?;
    Ok(n > 0)
}

pub fn assignments(conn: &Connection, exam_id: &str) -> Result<Vec<(String, String)>> {
    let mut stmt =
        conn.prepare("SELECT grader_id, question_id FROM assignments WHERE exam_id = ?1 ORDER BY grader_id, question_id")?;
    let rows = stmt.query_map([exam_id], |r| Ok((r.get(0)?, r.get(1)?)))?.collect::<rusqlite::Result<Vec<_>>>()?;
    Ok(rows)
}

// Claims

pub fn claim(conn: &Connection, bundle_id: &str, question_id: &str) -> Result<Option<(String, u64)>> {
    Ok(conn
        .query_row(
            "SELECT grader_id, served_at_ms FROM claims WHERE bundle_id = ?1 AND question_id = ?2",
            params![bundle_id, question_id],
            |r| Ok((r.get::<_, String>(0)?, r.get::<_, i64>(1)? as u64)),
        )
        .optional()?)
}

/// Claims of one grader for one question, as `(bundle_id, served_at_ms)`.
pub fn claims_of(conn: &Connection, exam_id: &str, grader_id: &str, question_id: &str) -> Result<Vec<(String, u64)>> {
    let mut stmt = conn.prepare(
        "SELECT bundle_id, served_at_ms FROM claims WHERE exam_id = ?1 AND grader_id = ?2 AND question_id = ?3
         ORDER BY served_at_ms, bundle_id",
    )?;
    let rows = stmt
        .query_map(params![exam_id, grader_id, question_id], |r| Ok((r.get(0)?, r.get::<_, i64>(1)? as u64)))?
        .collect::<rusqlite::Result<Vec<_>>>()?;
    Ok(rows)
}

pub fn put_claim(conn: &Connection, exam_id: &str, bundle_id: &str, question_id: &str, claim: Claim<'_>) -> Result<()> {
    conn.execute(
        "INSERT INTO claims (bundle_id, exam_id, question_id, grader_id, served_at_ms) VALUES (?1, ?2, ?3, ?4, ?5)
         ON CONFLICT (bundle_id, question_id) DO UPDATE SET grader_id = excluded.grader_id, served_at_ms = excluded.served_at_ms",
        params![bundle_id, exam_id, question_id, claim.grader_id, claim.served_at_ms as i64],
    )?;
    Ok(())
}

pub fn delete_claim(conn: &Connection, bundle_id: &str, question_id: &str) -> Result<()> {
    conn.execute("DELETE FROM claims WHERE bundle_id = ?1 AND question_id = ?2", params![bundle_id, question_id])?;
    Ok(())
}

// Events

const EVENT_COLUMNS: &str = "event_id, grader_id, bundle_id, question_id, question_type, split, score, max_score, \
                             served_at_ms, submitted_at_ms, duration_ms, superseded";

fn event_from_row(r: &rusqlite::Row<'_>) -> rusqlite::Result<(EventRecord, String, String)> {
    let qtype: String = r.get(4)?;
    let split: String = r.get(5)?;
    Ok((
        EventRecord {
            event_id: r.get::<_, i64>(0)? as u64,
            grader_id: r.get(1)?,
            bundle_id: r.get(2)?,
            question_id: r.get(3)?,
            question_type: QuestionType::Numerical,
            split: SplitLabel::Hna,
            score: r.get(6)?,
            max_score: r.get(7)?,
            served_at_ms: r.get::<_, i64>(8)? as u64,
            submitted_at_ms: r.get::<_, i64>(9)? as u64,
            duration_ms: r.get::<_, i64>(10)? as u64,
            superseded: r.get(11)?,
        },
        qtype,
        split,
    ))
}

fn finish_event((mut e, qtype, split): (EventRecord, String, String)) -> Result<EventRecord> {
    e.question_type = QuestionType::parse(&qtype)
        .ok_or_else(|| ServiceError::State(format!("stored event has unknown question type `{qtype}`")))?;
    e.split = label_from_str(&split)?;
    Ok(e)
}

/// Stores `event` under a fresh id and returns the id.
pub fn insert_event(conn: &Connection, exam_id: &str, event: &EventRecord) -> Result<u64> {
    conn.execute(
        "INSERT INTO events (exam_id, grader_id, bundle_id, question_id, question_type, split, score, max_score,
                             served_at_ms, submitted_at_ms, duration_ms, superseded)
         VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11, ?12)",
        params![
            exam_id,
            event.grader_id,
            event.bundle_id,
            event.question_id,
            event.question_type.as_str(),
            event.split.as_str(),
            event.score,
            event.max_score,
            event.served_at_ms as i64,
            event.submitted_at_ms as i64,
            event.duration_ms as i64,
            event.superseded
        ],
    )?;
    Ok(conn.last_insert_rowid() as u64)
}

pub fn current_event(conn: &Connection, bundle_id: &str, question_id: &str) -> Result<Option<EventRecord>> {
    conn.query_row(
        &format!("SELECT {EVENT_COLUMNS} FROM events WHERE bundle_id = ?1 AND question_id = ?2 AND superseded = 0"),
        params![bundle_id, question_id],
        event_from_row,
    )
    .optional()?
    .map(finish_event)
    .transpose()
}

pub fn supersede(conn: &Connection, event_id: u64) -> Result<()> {
    conn.execute("UPDATE events SET superseded = 1 WHERE event_id = ?1", [event_id as i64])?;
    Ok(())
}

/// Every event of an exam, superseded ones included, by id.
pub fn events(conn: &Connection, exam_id: &str) -> Result<Vec<EventRecord>> {
    let mut stmt = conn.prepare(&format!("SELECT {EVENT_COLUMNS} FROM events WHERE exam_id = ?1 ORDER BY event_id"))?;
    let raws = stmt.query_map([exam_id], event_from_row)?.collect::<rusqlite::Result<Vec<_>>>()?;
    raws.into_iter().map(finish_event).collect()
}

/// Sheets that already have a grade for `question_id`.
pub fn graded(conn: &Connection, exam_id: &str, question_id: &str) -> Result<std::collections::HashSet<String>> {
    let mut stmt =
        conn.prepare("SELECT bundle_id FROM events WHERE exam_id = ?1 AND question_id = ?2 AND superseded = 0")?;
    let rows = stmt.query_map(params![exam_id, question_id], |r| r.get(0))?.collect::<rusqlite::Result<_>>()?;
    Ok(rows)
}
