use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::QuestionType;

pub const EVENT_CSV_HEADER: &str = "event_id,grader_id,bundle_id,question_id,question_type,split,score,max_score,served_at_ms,submitted_at_ms,duration_ms,superseded";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SplitLabel {
    #[serde(rename = "S_HNA")]
    Hna,
    #[serde(rename = "S_H")]
    H,
    #[serde(rename = "S_NH")]
    Nh,
}

impl SplitLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitLabel::Hna => "S_HNA",
            SplitLabel::H => "S_H",
            SplitLabel::Nh => "S_NH",
        }
    }
}

/// One row of the grading event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub event_id: u64,
    pub grader_id: String,
    pub bundle_id: String,
    pub question_id: String,
    pub question_type: QuestionType,
    pub split: SplitLabel,
    pub score: f64,
    pub max_score: f64,
    pub served_at_ms: u64,
    pub submitted_at_ms: u64,
    pub duration_ms: u64,
    pub superseded: bool,
}

/// Writes the log as CSV ordered by `(bundle_id, question_id, submitted_at_ms, event_id)`.
pub fn write_events_csv<W: Write>(events: &[EventRecord], out: W) -> Result<()> {
    let mut sorted: Vec<&EventRecord> = events.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.bundle_id, &a.question_id, a.submitted_at_ms, a.event_id).cmp(&(
            &b.bundle_id,
            &b.question_id,
            b.submitted_at_ms,
            b.event_id,
        ))
    });
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    wtr.write_record(EVENT_CSV_HEADER.split(',')).map_err(csv_err)?;
    for e in sorted {
        wtr.serialize(e).map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_events_csv<R: Read>(input: R) -> Result<Vec<EventRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers().map_err(csv_err)?.iter().collect::<Vec<_>>().join(",");
    if header != EVENT_CSV_HEADER {
        return Err(Error::EventLog(format!("unexpected header `{header}`")));
    }
    rdr.deserialize().collect::<std::result::Result<Vec<_>, _>>().map_err(csv_err)
}

fn csv_err(e: csv::Error) -> Error {
    Error::EventLog(e.to_string())
}

/// The earliest event for each `(bundle_id, question_id)`: the first-pass
/// grade whose duration all timing statistics use, even after regrades.
pub fn first_pass(events: &[EventRecord]) -> Vec<&EventRecord> {
    let mut first: BTreeMap<(&str, &str), &EventRecord> = BTreeMap::new();
    for e in events {
        first
            .entry((e.bundle_id.as_str(), e.question_id.as_str()))
            .and_modify(|cur| {
                if (e.submitted_at_ms, e.event_id) < (cur.submitted_at_ms, cur.event_id) {
                    *cur = e;
                }
            })
            .or_insert(e);
    }
    first.into_values().collect()
}
