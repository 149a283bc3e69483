//! In-memory raster pages.
//!
//! Pages are decoded to 8-bit grayscale for geometry and cropping. RGB pages
//! appear only as the output of highlight rendering.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PageDims, PixelRect};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorMode {
    Gray,
    Rgb,
}

impl ColorMode {
    pub fn channels(self) -> usize {
        match self {
            ColorMode::Gray => 1,
            ColorMode::Rgb => 3,
        }
    }
}

/// One raster page. Immutable once built.
#[derive(Clone, PartialEq, Eq)]
pub struct PageImage {
    width: u32,
    height: u32,
    mode: ColorMode,
    page_index: u32,
    data: Vec<u8>,
}

impl std::fmt::Debug for PageImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PageImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("mode", &self.mode)
            .field("page_index", &self.page_index)
            .finish_non_exhaustive()
    }
}

impl PageImage {
    pub fn new(width: u32, height: u32, mode: ColorMode, data: Vec<u8>, page_index: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidPage(format!("zero-sized page {width}x{height}")));
        }
        let expected = width as usize * height as usize * mode.channels();
        if data.len() != expected {
            return Err(Error::InvalidPage(format!(
                "buffer holds {} bytes, {width}x{height} {mode:?} needs {expected}",
                data.len()
            )));
        }
        Ok(Self { width, height, mode, page_index, data })
    }

    /// A page filled with one gray level.
    pub fn blank(width: u32, height: u32, level: u8, page_index: u32) -> Result<Self> {
        Self::new(width, height, ColorMode::Gray, vec![level; width as usize * height as usize], page_index)
    }

    pub fn from_dynamic(image: DynamicImage, page_index: u32) -> Result<Self> {
        let gray = image.into_luma8();
        let (w, h) = gray.dimensions();
        Self::new(w, h, ColorMode::Gray, gray.into_raw(), page_index)
    }

    /// Decodes an image file into a grayscale page.
    pub fn open(path: &Path, page_index: u32) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let image = image::open(path).map_err(|e| Error::UnreadableImage {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Self::from_dynamic(image, page_index)
    }

    pub fn decode_png(bytes: &[u8], page_index: u32) -> Result<Self> {
        let image = image::load_from_memory_with_format(bytes, ImageFormat::Png).map_err(|e| {
            Error::UnreadableImage { path: "<memory>".into(), reason: e.to_string() }
        })?;
        Self::from_dynamic(image, page_index)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> PageDims {
        PageDims::new(self.width, self.height)
    }

    pub fn mode(&self) -> ColorMode {
        self.mode
    }

    pub fn page_index(&self) -> u32 {
        self.page_index
    }

    pub fn with_page_index(mut self, page_index: u32) -> Self {
        self.page_index = page_index;
        self
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * self.mode.channels()
    }

    /// Pixel value as RGB; gray pixels are replicated across channels.
    pub fn rgb(&self, x: u32, y: u32) -> [u8; 3] {
        let i = self.offset(x, y);
        match self.mode {
            ColorMode::Gray => [self.data[i]; 3],
            ColorMode::Rgb => [self.data[i], self.data[i + 1], self.data[i + 2]],
        }
    }

    pub fn to_rgb(&self) -> PageImage {
        match self.mode {
            ColorMode::Rgb => self.clone(),
            ColorMode::Gray => {
                let data = self.data.iter().flat_map(|&v| [v, v, v]).collect();
                PageImage { mode: ColorMode::Rgb, data, ..*self }
            }
        }
    }

    /// Copies the pixels of `rect` verbatim into a new page.
    pub fn crop(&self, rect: PixelRect) -> Result<PageImage> {
        if !rect.fits_within(self.dims()) {
            return Err(Error::OutsidePage {
                rect: rect.to_string(),
                width: self.width,
                height: self.height,
            });
        }
        let ch = self.mode.channels();
        let row_len = rect.width() as usize * ch;
        let mut data = Vec::with_capacity(row_len * rect.height() as usize);
        for y in rect.y0..rect.y1 {
            let start = self.offset(rect.x0, y);
            data.extend_from_slice(&self.data[start..start + row_len]);
        }
        PageImage::new(rect.width(), rect.height(), self.mode, data, self.page_index)
    }

    pub(crate) fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let image = match self.mode {
            ColorMode::Gray => DynamicImage::ImageLuma8(
                GrayImage::from_raw(self.width, self.height, self.data.clone()).expect("validated buffer"),
            ),
            ColorMode::Rgb => DynamicImage::ImageRgb8(
                RgbImage::from_raw(self.width, self.height, self.data.clone()).expect("validated buffer"),
            ),
        };
        let mut out = Cursor::new(Vec::new());
        image
            .write_to(&mut out, ImageFormat::Png)
            .map_err(|e| Error::InvalidPage(format!("png encoding failed: {e}")))?;
        Ok(out.into_inner())
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode_png()?)?;
        Ok(())
    }
}
