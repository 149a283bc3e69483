//! Mapping scanned answer sheets to roster students.
//!
//! The roll number is read from a fixed box on page 0 of every sheet and
//! matched to the roster by character edit distance. Anything doubtful is
//! left unmapped for the instructor to resolve by hand.

use std::collections::{HashMap, HashSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PixelRect;
use crate::ingest::PageBundle;
use crate::layout::recognize_page;
use crate::ocr::{Recognizer, WordBox};

pub const DEFAULT_THRESHOLD: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RosterEntry {
    pub roll: String,
    pub name: String,
}

/// Ordered list of students with unique roll numbers.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<RosterEntry>", into = "Vec<RosterEntry>")]
pub struct Roster {
    entries: Vec<RosterEntry>,
}

impl TryFrom<Vec<RosterEntry>> for Roster {
    type Error = Error;

    fn try_from(entries: Vec<RosterEntry>) -> Result<Self> {
        Roster::new(entries)
    }
}

impl From<Roster> for Vec<RosterEntry> {
    fn from(r: Roster) -> Self {
        r.entries
    }
}

impl Roster {
    pub fn new(entries: Vec<RosterEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (i, e) in entries.iter().enumerate() {
            if e.roll.trim().is_empty() || e.name.trim().is_empty() {
                return Err(Error::Roster(format!("entry {} has an empty roll or name", i + 1)));
            }
            if !seen.insert(e.roll.as_str()) {
                return Err(Error::Roster(format!("roll `{}` appears twice", e.roll)));
            }
        }
        Ok(Self { entries })
    }

    /// Reads CSV with header `roll,name`.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::Roster(e.to_string()))?.clone();
        if headers.iter().collect::<Vec<_>>() != ["roll", "name"] {
            return Err(Error::Roster(format!("expected header `roll,name`, found `{}`", headers.iter().collect::<Vec<_>>().join(","))));
        }
        let entries = rdr
            .deserialize()
            .collect::<std::result::Result<Vec<RosterEntry>, _>>()
            .map_err(|e| Error::Roster(e.to_string()))?;
        Self::new(entries)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|_| Error::MissingFile(path.to_path_buf()))?;
        Self::from_csv(file)
    }

    pub fn entries(&self) -> &[RosterEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn position(&self, roll: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.roll == roll)
    }

    pub fn get(&self, roll: &str) -> Option<&RosterEntry> {
        self.entries.iter().find(|e| e.roll == roll)
    }
}

/// Levenshtein distance over Unicode scalar values.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (pattern, text) = if a.len() <= b.len() { (&a, &b) } else { (&b, &a) };
    if pattern.len() <= 64 {
        bit_parallel(pattern, text)
    } else {
        two_row(pattern, text)
    }
}

// Myers' bit-vector algorithm in Hyyrö's formulation; one machine word holds
// a whole column, so the pattern is limited to 64 characters.
fn bit_parallel(pattern: &[char], text: &[char]) -> usize {
    let m = pattern.len();
    if m == 0 {
        return text.len();
    }
    let mut peq: HashMap<char, u64> = HashMap::new();
    for (i, &c) in pattern.iter().enumerate() {
        *peq.entry(c).or_default() |= 1 << i;
    }
    let last = 1u64 << (m - 1);
    let mut pv = u64::MAX;
    let mut mv = 0u64;
    let mut score = m;
    for c in text {
        let eq = peq.get(c).copied().unwrap_or(0);
        let xv = eq | mv;
        let xh = ((eq & pv).wrapping_add(pv) ^ pv) | eq;
        let mut ph = mv | !(xh | pv);
        let mut mh = pv & xh;
        if ph & last != 0 {
            score += 1;
        } else if mh & last != 0 {
            score -= 1;
        }
        ph = (ph << 1) | 1;
        mh <<= 1;
        pv = mh | !(xv | ph);
        mv = ph & xv;
    }
    score
}

fn two_row(a: &[char], b: &[char]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MappingStatus {
    Auto,
    Manual,
    Unmapped,
}

impl MappingStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            MappingStatus::Auto => "auto",
            MappingStatus::Manual => "manual",
            MappingStatus::Unmapped => "unmapped",
        }
    }
}

/// Text recognized in the identity boxes of one sheet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityCandidate {
    pub bundle_id: String,
    pub name: String,
    pub roll: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityMapping {
    pub bundle_id: String,
    pub roll_candidate: String,
    pub name_candidate: String,
    pub matched_roll: Option<String>,
    /// Distance from the candidate to the closest roster roll.
    pub edit_distance: u32,
    pub status: MappingStatus,
}

fn words_in(words: &[WordBox], rect: PixelRect) -> String {
    words
        .iter()
        .filter(|w| {
            let (cx, cy) = w.center();
            rect.contains_point(cx, cy)
        })
        .map(|w| w.text.as_str())
        .collect::<Vec<_>>()
        .join(" ")
        .trim()
        .to_owned()
}

/// Reads the name and roll boxes on page 0. A word belongs to a box when the
/// box contains the word's centre. Returns `(name, roll)`.
pub fn extract_identity(
    sheet: &PageBundle,
    name_box: PixelRect,
    roll_box: PixelRect,
    backend: &dyn Recognizer,
) -> Result<(String, String)> {
    let page = sheet.whole_page(0)?;
    for rect in [name_box, roll_box] {
        if !rect.fits_within(page.dims()) {
            return Err(Error::OutsidePage { rect: rect.to_string(), width: page.width(), height: page.height() });
        }
    }
    let words = recognize_page(page, sheet.page_file(0), backend)?;
    Ok((words_in(&words, name_box), words_in(&words, roll_box)))
}

/// Matches each candidate roll to the roster.
///
/// A sheet is proposed for the roster roll at minimum distance when that
/// minimum is unique and within `threshold`. Proposals are then granted in
/// increasing distance order (ties by roster position, then sheet order) so
/// that no roll is given to two sheets.
pub fn map_to_roster(candidates: &[IdentityCandidate], roster: &Roster, threshold: usize) -> Vec<IdentityMapping> {
    let mut mappings = Vec::with_capacity(candidates.len());
    // (distance, roster position, candidate position)
    let mut proposals = Vec::new();
    for (ci, cand) in candidates.iter().enumerate() {
        let roll = cand.roll.trim();
        let distances: Vec<usize> = roster.entries().iter().map(|e| edit_distance(roll, &e.roll)).collect();
        let best = distances.iter().copied().min().unwrap_or(0);
        let at_best: Vec<usize> = (0..distances.len()).filter(|&i| distances[i] == best).collect();
        if !roll.is_empty() && best <= threshold && at_best.len() == 1 {
            proposals.push((best, at_best[0], ci));
        }
        mappings.push(IdentityMapping {
            bundle_id: cand.bundle_id.clone(),
            roll_candidate: cand.roll.clone(),
            name_candidate: cand.name.clone(),
            matched_roll: None,
            edit_distance: best as u32,
            status: MappingStatus::Unmapped,
        });
    }
    proposals.sort_unstable();
    let mut taken = HashSet::new();
    for (_, ri, ci) in proposals {
        if taken.insert(ri) {
            mappings[ci].matched_roll = Some(roster.entries()[ri].roll.clone());
            mappings[ci].status = MappingStatus::Auto;
        }
    }
    mappings
}

/// Instructor override for one sheet. `None` clears the mapping.
pub fn correct_mapping(
    mappings: &mut [IdentityMapping],
    roster: &Roster,
    bundle_id: &str,
    roll: Option<&str>,
) -> Result<IdentityMapping> {
    if let Some(roll) = roll {
        if roster.get(roll).is_none() {
            return Err(Error::UnknownRoll(roll.to_owned()));
        }
        if let Some(holder) =
            mappings.iter().find(|m| m.bundle_id != bundle_id && m.matched_roll.as_deref() == Some(roll))
        {
            return Err(Error::RollConflict { roll: roll.to_owned(), holder: holder.bundle_id.clone() });
        }
    }
    let mapping = mappings
        .iter_mut()
        .find(|m| m.bundle_id == bundle_id)
        .ok_or_else(|| Error::UnknownSheet(bundle_id.to_owned()))?;
    match roll {
        Some(roll) => {
            mapping.edit_distance = edit_distance(mapping.roll_candidate.trim(), roll) as u32;
            mapping.matched_roll = Some(roll.to_owned());
            mapping.status = MappingStatus::Manual;
        }
        None => {
            mapping.matched_roll = None;
            mapping.status = MappingStatus::Unmapped;
        }
    }
    Ok(mapping.clone())
}

/// Whether mapped sheets and roster rolls are in one-to-one correspondence.
pub fn is_bijective(mappings: &[IdentityMapping]) -> bool {
    let mut rolls = HashSet::new();
    let mut sheets = HashSet::new();
    mappings
        .iter()
        .filter_map(|m| m.matched_roll.as_deref().map(|r| (r, m.bundle_id.as_str())))
        .all(|(r, s)| rolls.insert(r) && sheets.insert(s))
}
