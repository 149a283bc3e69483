//! Text-recognition backends.
//!
//! A backend turns an image into a list of [`WordBox`]es. Two ship here: a
//! [`SidecarRecognizer`] that replays `<image>.words.json` files written next
//! to fixture images, and a [`RemoteRecognizer`] that posts PNG bytes to a
//! recognition service.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PageDims, PixelRect};
use crate::page::PageImage;

/// One recognized word, in pixel coordinates with the origin at the top left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordBox {
    pub text: String,
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    #[serde(default = "full_confidence")]
    pub confidence: f64,
    #[serde(default)]
    pub page_index: u32,
}

fn full_confidence() -> f64 {
    1.0
}

impl WordBox {
    pub fn new(text: impl Into<String>, x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { text: text.into(), x0, y0, x1, y1, confidence: 1.0, page_index: 0 }
    }

    pub fn on_page(mut self, page_index: u32) -> Self {
        self.page_index = page_index;
        self
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }

    pub fn center_y(&self) -> f64 {
        (self.y0 + self.y1) / 2.0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    /// Pixels covered by the box: `[floor x0, ceil x1) x [floor y0, ceil y1)`.
    pub fn pixel_rect(&self) -> PixelRect {
        PixelRect::new(
            self.x0.floor().max(0.0) as u32,
            self.y0.floor().max(0.0) as u32,
            self.x1.ceil().max(0.0) as u32,
            self.y1.ceil().max(0.0) as u32,
        )
    }

    /// Checks ordering, confidence range and containment in the page.
    pub fn validate(&self, dims: PageDims) -> Result<()> {
        let finite = [self.x0, self.y0, self.x1, self.y1, self.confidence].iter().all(|v| v.is_finite());
        if !finite || !(self.x0 < self.x1 && self.y0 < self.y1) {
            return Err(Error::InvalidWordBox(format!("`{}` has malformed coordinates", self.text)));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::InvalidWordBox(format!(
                "`{}` has confidence {} outside [0, 1]",
                self.text, self.confidence
            )));
        }
        if self.x0 < 0.0 || self.y0 < 0.0 || self.x1 > f64::from(dims.width) || self.y1 > f64::from(dims.height) {
            return Err(Error::InvalidWordBox(format!(
                "`{}` at ({}, {})-({}, {}) exceeds the {}x{} page",
                self.text, self.x0, self.y0, self.x1, self.y1, dims.width, dims.height
            )));
        }
        Ok(())
    }
}

/// Wire format shared by sidecar files and the remote `/recognize` endpoint.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct WordList {
    pub words: Vec<WordBox>,
}

/// What a backend is asked to read.
#[derive(Debug, Clone, Copy)]
pub struct RecognitionInput<'a> {
    pub image: &'a PageImage,
    /// File the pixels came from, when known.
    pub source: Option<&'a Path>,
    /// Sub-rectangle of `source` that `image` was cropped from.
    pub region: Option<PixelRect>,
}

impl<'a> RecognitionInput<'a> {
    pub fn page(image: &'a PageImage, source: Option<&'a Path>) -> Self {
        Self { image, source, region: None }
    }

    pub fn crop(image: &'a PageImage, source: Option<&'a Path>, region: PixelRect) -> Self {
        Self { image, source, region: Some(region) }
    }
}

/// Anything that turns an image into word boxes in that image's coordinates.
pub trait Recognizer: Send + Sync {
    fn recognize(&self, input: &RecognitionInput<'_>) -> Result<Vec<WordBox>>;
}

/// Path of the sidecar for an image: the image path with `.words.json` appended.
pub fn sidecar_path(image: &Path) -> PathBuf {
    let mut name = image.as_os_str().to_owned();
    name.push(".words.json");
    PathBuf::from(name)
}

pub fn read_sidecar(path: &Path) -> Result<WordList> {
    let raw = std::fs::read(path).map_err(|e| Error::Backend {
        diagnostics: format!("cannot read sidecar {}: {e}", path.display()),
        retriable: false,
    })?;
    serde_json::from_slice(&raw).map_err(|e| Error::Backend {
        diagnostics: format!("malformed sidecar {}: {e}", path.display()),
        retriable: false,
    })
}

pub fn write_sidecar(image: &Path, words: &[WordBox]) -> Result<()> {
    let list = WordList { words: words.to_vec() };
    std::fs::write(sidecar_path(image), serde_json::to_vec_pretty(&list)?)?;
    Ok(())
}

/// Deterministic backend replaying sidecar files.
///
/// For crops, the sidecar of the source page is read, words whose centre
/// falls inside the crop are kept, clipped to it and shifted into crop
/// coordinates.
#[derive(Debug, Clone, Copy, Default)]
pub struct SidecarRecognizer;

impl Recognizer for SidecarRecognizer {
    fn recognize(&self, input: &RecognitionInput<'_>) -> Result<Vec<WordBox>> {
        let source = input.source.ok_or_else(|| Error::Backend {
            diagnostics: "sidecar backend needs the image's source path".into(),
            retriable: false,
        })?;
        let list = read_sidecar(&sidecar_path(source))?;
        let page_index = input.image.page_index();
        let Some(region) = input.region else {
            return Ok(list.words.into_iter().map(|w| w.on_page(page_index)).collect());
        };
        let (ox, oy) = (f64::from(region.x0), f64::from(region.y0));
        let (w, h) = (f64::from(region.width()), f64::from(region.height()));
        Ok(list
            .words
            .into_iter()
            .filter(|word| {
                let (cx, cy) = word.center();
                region.contains_point(cx, cy)
            })
            .map(|word| WordBox {
                x0: (word.x0 - ox).clamp(0.0, w),
                y0: (word.y0 - oy).clamp(0.0, h),
                x1: (word.x1 - ox).clamp(0.0, w),
                y1: (word.y1 - oy).clamp(0.0, h),
                page_index,
                ..word
            })
            .collect())
    }
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
struct Permits {
    free: Mutex<usize>,
    cond: Condvar,
}

impl Permits {
    fn new(n: usize) -> Self {
        Self { free: Mutex::new(n.max(1)), cond: Condvar::new() }
    }

    fn acquire(&self) -> PermitGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cond.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        PermitGuard(self)
    }
}

struct PermitGuard<'a>(&'a Permits);

impl Drop for PermitGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cond.notify_one();
    }
}

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub max_in_flight: usize,
    pub timeout: Duration,
    pub retries: u32,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self { max_in_flight: 4, timeout: Duration::from_secs(30), retries: 2 }
    }
}

/// Client for a recognition service exposing `POST /recognize`.
#[derive(Debug)]
pub struct RemoteRecognizer {
    endpoint: String,
    agent: ureq::Agent,
    retries: u32,
    permits: Permits,
}

impl RemoteRecognizer {
    pub fn new(base_url: &str, config: RemoteConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            endpoint: format!("{}/recognize", base_url.trim_end_matches('/')),
            agent,
            retries: config.retries,
            permits: Permits::new(config.max_in_flight),
        }
    }

    fn attempt(&self, png: &[u8]) -> Result<Vec<WordBox>> {
        let _permit = self.permits.acquire();
        let mut response = self
            .agent
            .post(&self.endpoint)
            .header("Content-Type", "image/png")
            .send(png)
            .map_err(|e| Error::Backend { diagnostics: format!("{}: {e}", self.endpoint), retriable: true })?;
        let status = response.status().as_u16();
        let mut body = String::new();
        response
            .body_mut()
            .as_reader()
            .read_to_string(&mut body)
            .map_err(|e| Error::Backend { diagnostics: format!("reading response: {e}"), retriable: true })?;
        if status != 200 {
            return Err(Error::Backend {
                diagnostics: format!("{} answered {status}: {}", self.endpoint, truncate(&body, 512)),
                retriable: status >= 500 || status == 429,
            });
        }
        let list: WordList = serde_json::from_str(&body).map_err(|e| Error::Backend {
            diagnostics: format!("malformed response from {}: {e}: {}", self.endpoint, truncate(&body, 512)),
            retriable: true,
        })?;
        Ok(list.words)
    }
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

impl Recognizer for RemoteRecognizer {
    fn recognize(&self, input: &RecognitionInput<'_>) -> Result<Vec<WordBox>> {
        let png = input.image.encode_png()?;
        let mut last = None;
        for _ in 0..=self.retries {
            match self.attempt(&png) {
                Ok(words) => {
                    let page_index = input.image.page_index();
                    return Ok(words.into_iter().map(|w| w.on_page(page_index)).collect());
                }
                Err(e) if e.is_retriable() => last = Some(e),
                Err(e) => return Err(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }
}
