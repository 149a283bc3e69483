//! Page bundles: the canonical form of an uploaded question paper or scanned
//! answer sheet.
//!
//! A bundle is described by a `manifest.json` listing page images in order.
//! PDFs are turned into such a directory by an external rasterizer adapter;
//! nothing in this crate parses PDF.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::PageDims;
use crate::page::PageImage;

pub const DEFAULT_DPI: u32 = 150;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BundleKind {
    QuestionPaper,
    AnswerSheet,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestPage {
    pub index: u32,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub bundle_id: String,
    pub kind: BundleKind,
    pub pages: Vec<ManifestPage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_name: Option<String>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let raw = std::fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        serde_json::from_slice(&raw).map_err(|e| Error::Manifest { path: path.to_path_buf(), reason: e.to_string() })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    /// Structural checks that need no file access.
    pub fn validate(&self) -> Result<()> {
        if self.pages.is_empty() {
            return Err(Error::EmptyBundle(self.bundle_id.clone()));
        }
        let mut seen = HashSet::new();
        for page in &self.pages {
            if !seen.insert(page.index) {
                return Err(Error::DuplicatePageIndex { index: page.index, file: page.file.clone() });
            }
        }
        for (position, page) in self.pages.iter().enumerate() {
            if page.index != position as u32 {
                return Err(Error::PageOutOfOrder {
                    file: page.file.clone(),
                    index: page.index,
                    expected: position as u32,
                });
            }
        }
        Ok(())
    }
}

/// An ordered, validated set of pages. Immutable after loading.
#[derive(Debug, Clone, PartialEq)]
pub struct PageBundle {
    pub bundle_id: String,
    pub kind: BundleKind,
    pub source_name: String,
    pages: Vec<PageImage>,
    files: Vec<PathBuf>,
}

/// Deterministic description of a bundle, independent of where it was loaded from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleMetadata {
    pub bundle_id: String,
    pub kind: BundleKind,
    pub source_name: String,
    pub pages: Vec<PageMetadata>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageMetadata {
    pub index: u32,
    pub file: String,
    pub width: u32,
    pub height: u32,
    pub sha256: String,
}

impl PageBundle {
    /// Builds a bundle from pages already in memory.
    pub fn from_pages(
        bundle_id: impl Into<String>,
        kind: BundleKind,
        source_name: impl Into<String>,
        pages: Vec<PageImage>,
        files: Vec<PathBuf>,
    ) -> Result<Self> {
        let bundle_id = bundle_id.into();
        if pages.is_empty() {
            return Err(Error::EmptyBundle(bundle_id));
        }
        if !files.is_empty() && files.len() != pages.len() {
            return Err(Error::InvalidPage("one file path per page expected".into()));
        }
        for (i, page) in pages.iter().enumerate() {
            if page.page_index() != i as u32 {
                return Err(Error::PageOutOfOrder {
                    file: format!("page {i}"),
                    index: page.page_index(),
                    expected: i as u32,
                });
            }
        }
        Ok(Self { bundle_id, kind, source_name: source_name.into(), pages, files })
    }

    pub fn pages(&self) -> &[PageImage] {
        &self.pages
    }

    pub fn len(&self) -> usize {
        self.pages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pages.is_empty()
    }

    pub fn page_dims(&self) -> Vec<PageDims> {
        self.pages.iter().map(PageImage::dims).collect()
    }

    /// Source file of a page, when the bundle was loaded from disk.
    pub fn page_file(&self, page_index: u32) -> Option<&Path> {
        self.files.get(page_index as usize).map(PathBuf::as_path)
    }

    /// The uncropped page.
    pub fn whole_page(&self, page_index: u32) -> Result<&PageImage> {
        self.pages.get(page_index as usize).ok_or_else(|| Error::PageNotFound {
            bundle_id: self.bundle_id.clone(),
            page_index,
        })
    }

    pub fn metadata(&self) -> BundleMetadata {
        let pages = self
            .pages
            .iter()
            .enumerate()
            .map(|(i, page)| PageMetadata {
                index: page.page_index(),
                file: self
                    .files
                    .get(i)
                    .and_then(|f| f.file_name())
                    .map(|f| f.to_string_lossy().into_owned())
                    .unwrap_or_default(),
                width: page.width(),
                height: page.height(),
                sha256: hex_digest(page.data()),
            })
            .collect();
        BundleMetadata {
            bundle_id: self.bundle_id.clone(),
            kind: self.kind,
            source_name: self.source_name.clone(),
            pages,
        }
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Loads the bundle described by a manifest. File paths are resolved
/// relative to the manifest's directory. Either every page loads or an
/// error naming the first offending entry is returned.
pub fn load_bundle(manifest_path: &Path) -> Result<PageBundle> {
    let manifest = Manifest::read(manifest_path)?;
    manifest.validate()?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut pages = Vec::with_capacity(manifest.pages.len());
    let mut files = Vec::with_capacity(manifest.pages.len());
    for entry in &manifest.pages {
        let path = base.join(&entry.file);
        pages.push(PageImage::open(&path, entry.index)?);
        files.push(path);
    }
    let source_name = manifest.source_name.clone().unwrap_or_else(|| {
        manifest_path
            .parent()
            .and_then(|p| p.file_name())
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    PageBundle::from_pages(manifest.bundle_id, manifest.kind, source_name, pages, files)
}

/// External program that renders a PDF to `page-<index>.png` files plus a
/// `manifest.json`. It is invoked as `<program> <args...> <pdf> <dpi> <outdir>`.
#[derive(Debug, Clone)]
pub struct RasterizerAdapter {
    pub program: PathBuf,
    pub args: Vec<String>,
}

impl RasterizerAdapter {
    pub const ENV: &'static str = "GRADEPIPE_RASTERIZER";

    pub fn new(program: impl Into<PathBuf>) -> Self {
        Self { program: program.into(), args: Vec::new() }
    }

    /// Reads the adapter command line from `GRADEPIPE_RASTERIZER`
    /// (whitespace-separated program and leading arguments).
    pub fn from_env() -> Option<Self> {
        let raw = std::env::var(Self::ENV).ok()?;
        let mut parts = raw.split_whitespace();
        let program = parts.next()?;
        Some(Self { program: program.into(), args: parts.map(str::to_owned).collect() })
    }
}

/// Renders a PDF through the adapter into `out_dir` and loads the result.
pub fn rasterize_pdf(
    adapter: Option<&RasterizerAdapter>,
    pdf_path: &Path,
    dpi: u32,
    out_dir: &Path,
) -> Result<PageBundle> {
    let adapter = adapter.ok_or(Error::AdapterNotConfigured)?;
    if !pdf_path.is_file() {
        return Err(Error::MissingFile(pdf_path.to_path_buf()));
    }
    std::fs::create_dir_all(out_dir)?;
    let output = Command::new(&adapter.program)
        .args(&adapter.args)
        .arg(pdf_path)
        .arg(dpi.to_string())
        .arg(out_dir)
        .output()
        .map_err(|e| Error::AdapterFailed {
            status: "not started".into(),
            output: format!("{}: {e}", adapter.program.display()),
        })?;
    if !output.status.success() {
        let mut text = String::from_utf8_lossy(&output.stderr).into_owned();
        text.push_str(&String::from_utf8_lossy(&output.stdout));
        return Err(Error::AdapterFailed { status: output.status.to_string(), output: text.trim().to_owned() });
    }
    let mut bundle = load_bundle(&out_dir.join("manifest.json"))?;
    if let Some(name) = pdf_path.file_name() {
        bundle.source_name = name.to_string_lossy().into_owned();
    }
    Ok(bundle)
}
