//! Keyword spotting on answer crops.
//!
//! Matching is exact after [`normalize`]: no stemming, no synonyms. Phrase
//! keywords match when their words appear consecutively in reading order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PixelRect;
use crate::ocr::WordBox;
use crate::page::{ColorMode, PageImage};

const OPENERS: [char; 3] = ['(', '[', '{'];
const CLOSERS: [char; 3] = [')', ']', '}'];

fn is_strippable(c: char) -> bool {
    matches!(
        c,
        '.' | ',' | ';' | ':' | '!' | '?' | '"' | '\'' | '`' | '-' | '_' | '\u{2018}' | '\u{2019}' | '\u{201C}'
            | '\u{201D}' | '\u{00AB}' | '\u{00BB}' | '\u{2026}' | '\u{2013}' | '\u{2014}'
    )
}

/// Index of the bracket closing the opener at `open`, if any.
fn matching_close(chars: &[char], open: usize) -> Option<usize> {
    let kind = OPENERS.iter().position(|&o| o == chars[open])?;
    let mut depth = 0usize;
    for (i, &c) in chars.iter().enumerate().skip(open) {
        if c == OPENERS[kind] {
            depth += 1;
        } else if c == CLOSERS[kind] {
            depth -= 1;
            if depth == 0 {
                return Some(i);
            }
        }
    }
    None
}

fn has_matching_open(chars: &[char], close: usize) -> bool {
    let Some(kind) = CLOSERS.iter().position(|&c| c == chars[close]) else { return false };
    let mut depth = 0usize;
    for &c in chars[..=close].iter().rev() {
        if c == CLOSERS[kind] {
            depth += 1;
        } else if c == OPENERS[kind] {
            depth -= 1;
            if depth == 0 {
                return true;
            }
        }
    }
    false
}

/// Case-folds a token and strips punctuation from both ends.
///
/// Brackets are kept when they pair with one inside the token (`O(n)` keeps
/// its parenthesis) and removed when unpaired or wrapping the whole token.
pub fn normalize(token: &str) -> String {
    let mut chars: Vec<char> = token.trim().chars().flat_map(char::to_lowercase).collect();
    while let Some(&first) = chars.first() {
        let last = *chars.last().expect("non-empty");
        if first.is_whitespace() || is_strippable(first) {
            chars.remove(0);
        } else if last.is_whitespace() || is_strippable(last) {
            chars.pop();
        } else if OPENERS.contains(&first) {
            match matching_close(&chars, 0) {
                Some(close) if close == chars.len() - 1 => {
                    chars.pop();
                    chars.remove(0);
                }
                Some(_) => break,
                None => {
                    chars.remove(0);
                }
            }
        } else if CLOSERS.contains(&last) && !has_matching_open(&chars, chars.len() - 1) {
            chars.pop();
        } else {
            break;
        }
    }
    chars.into_iter().collect()
}

/// Normalizes each word of a possibly multi-word keyword.
fn normalize_phrase(keyword: &str) -> Vec<String> {
    keyword.split_whitespace().map(normalize).filter(|w| !w.is_empty()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordSpec {
    pub question_id: String,
    keywords: Vec<String>,
}

impl KeywordSpec {
    /// Stores keywords normalized, dropping empties and duplicates.
    pub fn new<S: AsRef<str>>(question_id: impl Into<String>, keywords: &[S]) -> Self {
        let mut normalized: Vec<String> = Vec::new();
        for k in keywords {
            let phrase = normalize_phrase(k.as_ref()).join(" ");
            if !phrase.is_empty() && !normalized.contains(&phrase) {
                normalized.push(phrase);
            }
        }
        Self { question_id: question_id.into(), keywords: normalized }
    }

    pub fn keywords(&self) -> &[String] {
        &self.keywords
    }

    pub fn is_empty(&self) -> bool {
        self.keywords.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordMatch {
    pub word: WordBox,
    pub keyword: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighlightSet {
    pub question_id: String,
    pub bundle_id: String,
    pub matches: Vec<KeywordMatch>,
    pub attempted: bool,
}

impl HighlightSet {
    /// Placeholder for a crop on which no recognition was run.
    pub fn not_attempted(question_id: impl Into<String>, bundle_id: impl Into<String>) -> Self {
        Self { question_id: question_id.into(), bundle_id: bundle_id.into(), matches: Vec::new(), attempted: false }
    }

    pub fn has_matches(&self) -> bool {
        !self.matches.is_empty()
    }
}

/// Finds every word (or run of words, for phrases) equal to a keyword after
/// normalization. `words` must be in reading order.
pub fn match_keywords(bundle_id: &str, words: &[WordBox], spec: &KeywordSpec) -> HighlightSet {
    let normalized: Vec<String> = words.iter().map(|w| normalize(&w.text)).collect();
    let phrases: Vec<(&String, Vec<&str>)> =
        spec.keywords.iter().map(|k| (k, k.split(' ').collect())).collect();
    let mut matches = Vec::new();
    for start in 0..words.len() {
        for (keyword, parts) in &phrases {
            let end = start + parts.len();
            if end <= words.len() && normalized[start..end].iter().zip(parts).all(|(w, p)| w == p) {
                matches.extend(
                    words[start..end].iter().map(|w| KeywordMatch { word: w.clone(), keyword: (*keyword).clone() }),
                );
            }
        }
    }
    HighlightSet { question_id: spec.question_id.clone(), bundle_id: bundle_id.to_owned(), matches, attempted: true }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlayStyle {
    pub fill: [u8; 3],
    /// Fill opacity in [0, 1].
    pub opacity: f32,
    pub border: [u8; 3],
    pub border_width: u32,
}

impl Default for OverlayStyle {
    fn default() -> Self {
        Self { fill: [255, 230, 0], opacity: 0.35, border: [220, 0, 0], border_width: 2 }
    }
}

/// Paints the matches onto a copy of `crop`.
///
/// Every pixel inside at least one match box is blended with the fill colour
/// exactly once; a border is then drawn along the inside edge of each box.
/// Pixels outside all boxes are left untouched. A non-empty set promotes a
/// gray crop to RGB; an empty set returns the crop unchanged.
pub fn render_highlights(crop: &PageImage, set: &HighlightSet, style: &OverlayStyle) -> Result<PageImage> {
    let dims = crop.dims();
    let rects: Vec<PixelRect> = set
        .matches
        .iter()
        .map(|m| {
            let r = m.word.pixel_rect();
            if r.fits_within(dims) {
                Ok(r)
            } else {
                Err(Error::HighlightOutOfBounds(m.word.text.clone()))
            }
        })
        .collect::<Result<_>>()?;
    if rects.is_empty() {
        return Ok(crop.clone());
    }

    let (w, h) = (crop.width() as usize, crop.height() as usize);
    let mut mask = vec![0u8; w * h];
    const FILL: u8 = 1;
    const BORDER: u8 = 2;
    for r in &rects {
        for y in r.y0..r.y1 {
            for x in r.x0..r.x1 {
                mask[y as usize * w + x as usize] |= FILL;
            }
        }
    }
    let bw = style.border_width;
    for r in &rects {
        for y in r.y0..r.y1 {
            for x in r.x0..r.x1 {
                let on_edge = x < r.x0 + bw || x + bw >= r.x1 || y < r.y0 + bw || y + bw >= r.y1;
                if on_edge {
                    mask[y as usize * w + x as usize] |= BORDER;
                }
            }
        }
    }

    let alpha = style.opacity.clamp(0.0, 1.0);
    let mut out = crop.to_rgb();
    debug_assert_eq!(out.mode(), ColorMode::Rgb);
    let data = out.data_mut();
    for (i, &m) in mask.iter().enumerate() {
        if m == 0 {
            continue;
        }
        let px = &mut data[i * 3..i * 3 + 3];
        if m & BORDER != 0 {
            px.copy_from_slice(&style.border);
        } else {
            for (c, f) in px.iter_mut().zip(style.fill) {
                *c = (f32::from(*c) * (1.0 - alpha) + f32::from(f) * alpha).round() as u8;
            }
        }
    }
    debug_assert_eq!(out.height() as usize, h);
    Ok(out)
}

/// Which half of the treatment group a sheet lands in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SheetClass {
    /// At least one keyword highlighted somewhere on the sheet.
    #[serde(rename = "S_H")]
    Highlighted,
    /// Highlighting was attempted but nothing matched.
    #[serde(rename = "S_NH")]
    NotHighlighted,
}

pub fn classify_sheet(sets: &[HighlightSet]) -> Result<SheetClass> {
    if let Some(s) = sets.iter().find(|s| !s.attempted) {
        return Err(Error::NotAttempted(s.question_id.clone()));
    }
    Ok(if sets.iter().any(HighlightSet::has_matches) { SheetClass::Highlighted } else { SheetClass::NotHighlighted })
}
