//! Question-region detection on blank question papers.
//!
//! Detection is anchor driven: a printed question number (`Q3`, `3.`, `3)`)
//! in the left margin band starts a region, which runs through the last text
//! line before the next anchor on the same page.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PageDims, PixelRect};
use crate::ocr::{RecognitionInput, Recognizer, WordBox};
use crate::page::PageImage;

pub const DEFAULT_ANCHOR_PATTERN: &str = r"^(?:[Qq](\d+)|(\d+)[.)])$";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuestionType {
    Numerical,
    Short,
    Long,
}

impl QuestionType {
    pub fn as_str(self) -> &'static str {
        match self {
            QuestionType::Numerical => "numerical",
            QuestionType::Short => "short",
            QuestionType::Long => "long",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "numerical" => Some(QuestionType::Numerical),
            "short" => Some(QuestionType::Short),
            "long" => Some(QuestionType::Long),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionRegion {
    pub question_id: String,
    /// 1-based position in the exam.
    pub order: u32,
    pub page_index: u32,
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
    pub text: String,
    /// Unset after detection; the instructor assigns it before grading.
    pub question_type: Option<QuestionType>,
    pub confirmed: bool,
}

impl QuestionRegion {
    pub fn rect(&self) -> PixelRect {
        PixelRect::new(self.x0, self.y0, self.x1, self.y1)
    }

    pub fn set_rect(&mut self, rect: PixelRect) {
        (self.x0, self.y0, self.x1, self.y1) = (rect.x0, rect.y0, rect.x1, rect.y1);
    }
}

#[derive(Debug, Clone)]
pub struct LayoutConfig {
    pub anchor: Regex,
    /// Fraction of the page width, measured from the left edge, in which an
    /// anchor's left edge must fall.
    pub margin_band: f64,
    /// Two words share a line when their vertical centres differ by less than
    /// this multiple of the median word height.
    pub line_tolerance: f64,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self {
            anchor: Regex::new(DEFAULT_ANCHOR_PATTERN).expect("valid default pattern"),
            margin_band: 0.2,
            line_tolerance: 0.6,
        }
    }
}

impl LayoutConfig {
    pub fn with_pattern(pattern: &str) -> Result<Self> {
        Ok(Self { anchor: Regex::new(pattern)?, ..Self::default() })
    }

    /// Question number carried by an anchor token, or `None` if the token is
    /// not an anchor. The first non-empty capture group is the number; a
    /// pattern without groups uses the whole token.
    pub fn anchor_number(&self, text: &str) -> Option<String> {
        let caps = self.anchor.captures(text)?;
        let whole = caps.get(0)?;
        if whole.start() != 0 || whole.end() != text.len() {
            return None;
        }
        let number = caps.iter().skip(1).flatten().find(|m| !m.as_str().is_empty()).unwrap_or(whole);
        Some(number.as_str().to_owned())
    }
}

fn median(mut values: Vec<f64>) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    }
}

/// Groups the words of one page into text lines. Returns index lists, lines
/// top to bottom, words within a line left to right.
pub fn group_lines(words: &[WordBox], tolerance: f64) -> Vec<Vec<usize>> {
    if words.is_empty() {
        return Vec::new();
    }
    let threshold = tolerance * median(words.iter().map(WordBox::height).collect());
    let mut by_center: Vec<usize> = (0..words.len()).collect();
    by_center.sort_by(|&a, &b| words[a].center_y().total_cmp(&words[b].center_y()).then(a.cmp(&b)));

    let mut lines: Vec<Vec<usize>> = Vec::new();
    let mut last_center = f64::NEG_INFINITY;
    for i in by_center {
        let c = words[i].center_y();
        match lines.last_mut() {
            Some(line) if c - last_center < threshold => line.push(i),
            _ => lines.push(vec![i]),
        }
        last_center = c;
    }
    for line in &mut lines {
        line.sort_by(|&a, &b| words[a].x0.total_cmp(&words[b].x0).then(a.cmp(&b)));
    }
    lines
}

/// Sorts words page by page, top to bottom, then left to right within a line.
pub fn reading_order(words: Vec<WordBox>, tolerance: f64) -> Vec<WordBox> {
    let mut pages: BTreeMap<u32, Vec<WordBox>> = BTreeMap::new();
    for w in words {
        pages.entry(w.page_index).or_default().push(w);
    }
    let mut out = Vec::new();
    for (_, page_words) in pages {
        let order: Vec<usize> = group_lines(&page_words, tolerance).into_iter().flatten().collect();
        let mut slots: Vec<Option<WordBox>> = page_words.into_iter().map(Some).collect();
        out.extend(order.into_iter().map(|i| slots[i].take().expect("each index once")));
    }
    out
}

/// Runs the backend on a page, validates every box against the page and
/// returns the words in reading order.
pub fn recognize_page(page: &PageImage, source: Option<&Path>, backend: &dyn Recognizer) -> Result<Vec<WordBox>> {
    recognize(&RecognitionInput::page(page, source), backend)
}

/// Like [`recognize_page`] for a crop cut from `region` of the page stored at `source`.
pub fn recognize_crop(
    crop: &PageImage,
    source: Option<&Path>,
    region: PixelRect,
    backend: &dyn Recognizer,
) -> Result<Vec<WordBox>> {
    recognize(&RecognitionInput::crop(crop, source, region), backend)
}

fn recognize(input: &RecognitionInput<'_>, backend: &dyn Recognizer) -> Result<Vec<WordBox>> {
    let words = backend.recognize(input)?;
    let dims = input.image.dims();
    let words = words
        .into_iter()
        .map(|w| {
            w.validate(dims)?;
            Ok(w.on_page(input.image.page_index()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(reading_order(words, LayoutConfig::default().line_tolerance))
}

struct Line<'a> {
    words: Vec<&'a WordBox>,
}

impl Line<'_> {
    fn top(&self) -> f64 {
        self.words.iter().map(|w| w.y0).fold(f64::INFINITY, f64::min)
    }

    fn bottom(&self) -> f64 {
        self.words.iter().map(|w| w.y1).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Detects one region per anchor token.
///
/// `page_dims[i]` is the size of page `i`; words on pages without an entry are
/// ignored. Text above a page's first anchor (headers, instructions) belongs
/// to no region.
pub fn detect_question_regions(
    words: &[WordBox],
    config: &LayoutConfig,
    page_dims: &[PageDims],
) -> Result<Vec<QuestionRegion>> {
    let mut pages: BTreeMap<u32, Vec<WordBox>> = BTreeMap::new();
    for w in words {
        pages.entry(w.page_index).or_default().push(w.clone());
    }

    let mut regions = Vec::new();
    let mut numbers: Vec<String> = Vec::new();
    for (page_index, page_words) in &pages {
        let Some(dims) = page_dims.get(*page_index as usize) else { continue };
        let band = config.margin_band * f64::from(dims.width);
        let lines: Vec<Line<'_>> = group_lines(page_words, config.line_tolerance)
            .into_iter()
            .map(|idx| Line { words: idx.into_iter().map(|i| &page_words[i]).collect() })
            .collect();

        // (line index, question number)
        let mut anchors: Vec<(usize, String)> = Vec::new();
        for (li, line) in lines.iter().enumerate() {
            let mut found: Vec<(&WordBox, String)> = line
                .words
                .iter()
                .filter(|w| w.x0 < band)
                .filter_map(|w| config.anchor_number(&w.text).map(|n| (*w, n)))
                .collect();
            if found.len() > 1 {
                return Err(Error::AnchorsShareLine {
                    first: found[0].0.text.clone(),
                    second: found[1].0.text.clone(),
                });
            }
            if let Some((_, number)) = found.pop() {
                anchors.push((li, number));
            }
        }

        for (k, (start, number)) in anchors.iter().enumerate() {
            let end = anchors.get(k + 1).map_or(lines.len(), |(next, _)| *next);
            let members = &lines[*start..end];
            let member_words = members.iter().flat_map(|l| l.words.iter().copied());
            let x0 = member_words.clone().map(|w| w.x0).fold(f64::INFINITY, f64::min);
            let x1 = member_words.clone().map(|w| w.x1).fold(f64::NEG_INFINITY, f64::max);
            let y0 = members.iter().map(Line::top).fold(f64::INFINITY, f64::min);
            let y1 = members.iter().map(Line::bottom).fold(f64::NEG_INFINITY, f64::max);
            let text = member_words.map(|w| w.text.as_str()).collect::<Vec<_>>().join(" ");
            let order = regions.len() as u32 + 1;
            numbers.push(number.clone());
            regions.push(QuestionRegion {
                question_id: format!("q{order}"),
                order,
                page_index: *page_index,
                x0: (x0.floor().max(0.0) as u32).min(dims.width),
                y0: (y0.floor().max(0.0) as u32).min(dims.height),
                x1: (x1.ceil().max(0.0) as u32).min(dims.width),
                y1: (y1.ceil().max(0.0) as u32).min(dims.height),
                text,
                question_type: None,
                confirmed: false,
            });
        }
    }

    let mut seen = HashSet::new();
    let mut dups: Vec<String> = numbers.iter().filter(|n| !seen.insert(n.as_str())).cloned().collect();
    if !dups.is_empty() {
        dups.sort();
        dups.dedup();
        return Err(Error::DuplicateQuestions(dups));
    }
    Ok(regions)
}

/// One instructor edit to a detected region set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum RegionEdit {
    Update {
        question_id: String,
        #[serde(default)]
        rect: Option<PixelRect>,
        #[serde(default)]
        page_index: Option<u32>,
        #[serde(default)]
        order: Option<u32>,
        #[serde(default)]
        text: Option<String>,
        #[serde(default)]
        question_type: Option<QuestionType>,
    },
    Delete {
        question_id: String,
    },
    Add {
        region: QuestionRegion,
    },
    /// Reassigns `order` as 1..N by page, then top edge.
    Renumber,
}

/// Applies `edits` in sequence, validates the result and marks every region
/// confirmed. Nothing is returned unless the whole edited set is valid.
pub fn save_regions(
    regions: &[QuestionRegion],
    edits: &[RegionEdit],
    page_dims: &[PageDims],
) -> Result<Vec<QuestionRegion>> {
    let mut set: Vec<QuestionRegion> = regions.to_vec();
    for edit in edits {
        match edit {
            RegionEdit::Update { question_id, rect, page_index, order, text, question_type } => {
                let region = set
                    .iter_mut()
                    .find(|r| &r.question_id == question_id)
                    .ok_or_else(|| Error::UnknownQuestion(question_id.clone()))?;
                if let Some(rect) = rect {
                    region.set_rect(*rect);
                }
                if let Some(p) = page_index {
                    region.page_index = *p;
                }
                if let Some(o) = order {
                    region.order = *o;
                }
                if let Some(t) = text {
                    region.text.clone_from(t);
                }
                if let Some(qt) = question_type {
                    region.question_type = Some(*qt);
                }
            }
            RegionEdit::Delete { question_id } => {
                let before = set.len();
                set.retain(|r| &r.question_id != question_id);
                if set.len() == before {
                    return Err(Error::UnknownQuestion(question_id.clone()));
                }
            }
            RegionEdit::Add { region } => set.push(region.clone()),
            RegionEdit::Renumber => {
                set.sort_by_key(|r| (r.page_index, r.y0, r.x0));
                for (i, r) in set.iter_mut().enumerate() {
                    r.order = i as u32 + 1;
                }
            }
        }
    }
    set.sort_by_key(|r| r.order);
    validate_regions(&set, page_dims)?;
    for r in &mut set {
        r.confirmed = true;
    }
    Ok(set)
}

/// Checks the region-set invariants: unique ids, order exactly 1..N, boxes
/// inside their pages, order following page order, and no vertical overlap
/// between consecutive questions on one page.
pub fn validate_regions(regions: &[QuestionRegion], page_dims: &[PageDims]) -> Result<()> {
    let mut ids = HashSet::new();
    for r in regions {
        if !ids.insert(r.question_id.as_str()) {
            return Err(Error::DuplicateQuestionId(r.question_id.clone()));
        }
        let dims = page_dims.get(r.page_index as usize).ok_or_else(|| Error::RegionBounds(r.question_id.clone()))?;
        if !r.rect().fits_within(*dims) {
            return Err(Error::RegionBounds(r.question_id.clone()));
        }
    }
    let mut orders: Vec<u32> = regions.iter().map(|r| r.order).collect();
    orders.sort_unstable();
    if orders.iter().enumerate().any(|(i, &o)| o != i as u32 + 1) {
        return Err(Error::NonContiguousOrder { expected_max: regions.len(), found: orders });
    }
    let by_order: HashMap<u32, &QuestionRegion> = regions.iter().map(|r| (r.order, r)).collect();
    for order in 2..=regions.len() as u32 {
        let (prev, cur) = (by_order[&(order - 1)], by_order[&order]);
        if cur.page_index < prev.page_index {
            return Err(Error::OrderNotDocumentOrder { order, previous: order - 1, page_index: cur.page_index });
        }
        if cur.page_index == prev.page_index && cur.y0 < prev.y1 {
            return Err(Error::RegionOverlap { first: prev.order, second: cur.order, page_index: cur.page_index });
        }
    }
    Ok(())
}
