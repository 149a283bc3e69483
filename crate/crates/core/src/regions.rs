//! Answer-region deduction and cropping.
//!
//! The answer to question `k` is the band between the bottom of its box and
//! the top of question `k + 1`'s box on the same page. The last question on a
//! page answers down to the page bottom minus a margin. Horizontally the band
//! spans the page minus a side margin.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PageDims, PixelRect};
use crate::ingest::PageBundle;
use crate::layout::QuestionRegion;
use crate::page::PageImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeductionConfig {
    pub side_margin: u32,
    pub bottom_margin: u32,
    /// Added to every template y coordinate to compensate a uniformly shifted scan.
    pub vertical_offset: i32,
}

impl Default for DeductionConfig {
    fn default() -> Self {
        Self { side_margin: 16, bottom_margin: 16, vertical_offset: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerRegion {
    pub question_id: String,
    pub bundle_id: String,
    pub page_index: u32,
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
    /// No room was left for an answer; the grader must use the whole page.
    pub degenerate: bool,
}

impl AnswerRegion {
    pub fn rect(&self) -> PixelRect {
        PixelRect::new(self.x0, self.y0, self.x1, self.y1)
    }

    /// A region covering an entire page.
    pub fn whole_page(bundle_id: &str, question_id: &str, page: &PageImage) -> Self {
        Self {
            question_id: question_id.to_owned(),
            bundle_id: bundle_id.to_owned(),
            page_index: page.page_index(),
            x0: 0,
            y0: 0,
            x1: page.width(),
            y1: page.height(),
            degenerate: false,
        }
    }
}

/// One answer region per confirmed question, in question order.
///
/// `page_dims` are the dimensions of the answer sheet's pages.
pub fn deduce_answer_regions(
    bundle_id: &str,
    questions: &[QuestionRegion],
    page_dims: &[PageDims],
    config: &DeductionConfig,
) -> Result<Vec<AnswerRegion>> {
    let unconfirmed: Vec<String> =
        questions.iter().filter(|q| !q.confirmed).map(|q| q.question_id.clone()).collect();
    if !unconfirmed.is_empty() {
        return Err(Error::Unconfirmed(unconfirmed));
    }
    let mut ordered: Vec<&QuestionRegion> = questions.iter().collect();
    ordered.sort_by_key(|q| q.order);

    let mut next_top: HashMap<usize, u32> = HashMap::new();
    for (i, pair) in ordered.windows(2).enumerate() {
        if pair[0].page_index == pair[1].page_index {
            next_top.insert(i, pair[1].y0);
        }
    }

    let shift = |y: u32, limit: u32| -> u32 {
        (i64::from(y) + i64::from(config.vertical_offset)).clamp(0, i64::from(limit)) as u32
    };

    ordered
        .iter()
        .enumerate()
        .map(|(i, q)| {
            let dims = page_dims.get(q.page_index as usize).ok_or_else(|| Error::PageNotFound {
                bundle_id: bundle_id.to_owned(),
                page_index: q.page_index,
            })?;
            let floor = dims.height.saturating_sub(config.bottom_margin);
            let y0 = shift(q.y1, floor);
            let y1 = next_top.get(&i).map_or(floor, |&top| shift(top, floor));
            let x0 = config.side_margin.min(dims.width);
            let x1 = dims.width.saturating_sub(config.side_margin);
            let degenerate = y1 <= y0 || x1 <= x0;
            Ok(AnswerRegion {
                question_id: q.question_id.clone(),
                bundle_id: bundle_id.to_owned(),
                page_index: q.page_index,
                x0,
                y0,
                x1: x1.max(x0),
                y1: y1.max(y0),
                degenerate,
            })
        })
        .collect()
}

/// Copies the region's pixels out of `page`.
pub fn crop(page: &PageImage, region: &AnswerRegion) -> Result<PageImage> {
    if region.degenerate || region.rect().is_empty() {
        return Err(Error::DegenerateRegion {
            question_id: region.question_id.clone(),
            bundle_id: region.bundle_id.clone(),
        });
    }
    page.crop(region.rect())
}

/// The uncropped page, for when a crop is missing or misleading.
pub fn whole_page(bundle: &PageBundle, page_index: u32) -> Result<&PageImage> {
    bundle.whole_page(page_index)
}
