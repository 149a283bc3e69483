//! Building blocks for assisted grading of scanned handwritten answer sheets.
//!
//! The pipeline runs in this order: page bundles are ingested ([`ingest`]),
//! question regions are detected on the blank paper ([`layout`]), answer
//! sheets are mapped to students ([`identity`]), answer regions are deduced
//! and cropped ([`regions`]), instructor keywords are spotted and overlaid
//! ([`highlight`]), and grading durations are summarised ([`analytics`]).
//! Text recognition itself sits behind the [`ocr::Recognizer`] trait.

pub mod analytics;
pub mod error;
pub mod geometry;
pub mod highlight;
pub mod identity;
pub mod ingest;
pub mod layout;
pub mod ocr;
pub mod page;
pub mod regions;

pub use error::{Error, Result};
pub use geometry::{PageDims, PixelRect};
pub use ocr::WordBox;
pub use page::{ColorMode, PageImage};
