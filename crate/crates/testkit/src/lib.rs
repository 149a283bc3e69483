//! Synthetic exams: a printed question paper plus filled-in answer sheets,
//! each page written as a PNG with a word-box sidecar.

use std::path::{Path, PathBuf};

use gradepipe_core::identity::{Roster, RosterEntry};
use gradepipe_core::ingest::{BundleKind, Manifest, ManifestPage};
use gradepipe_core::layout::QuestionType;
use gradepipe_core::ocr::write_sidecar;
use gradepipe_core::page::ColorMode;
use gradepipe_core::{PageImage, PixelRect, WordBox};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const PAGE_WIDTH: u32 = 1000;
pub const PAGE_HEIGHT: u32 = 1400;
const INK: u8 = 30;
const FIRST_QUESTION_TOP: u32 = 160;
const BOTTOM_RESERVE: u32 = 40;
const LINE_HEIGHT: u32 = 24;

const FILLER: &[&str] = &["the", "value", "is", "because", "so", "we", "get", "then", "result", "hence", "step"];
const TOPICS: &[&str] = &[
    "cache", "pipeline", "hazard", "latency", "throughput", "register", "branch", "memory", "bus", "interrupt",
    "stack", "queue", "mutex", "deadlock", "page", "segment", "thread", "kernel", "socket", "packet",
];

#[derive(Debug, Clone)]
pub struct FixtureSpec {
    pub questions: usize,
    pub sheets: usize,
    pub pages: usize,
    pub seed: u64,
    /// Every `n`-th sheet carries no keyword at all.
    pub keywordless_every: usize,
    /// Sheets whose written roll has one character replaced.
    pub corrupted_rolls: Vec<usize>,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self { questions: 10, sheets: 12, pages: 2, seed: 7, keywordless_every: 4, corrupted_rolls: vec![1, 6] }
    }
}

#[derive(Debug, Clone)]
pub struct FixtureQuestion {
    pub question_id: String,
    pub page_index: u32,
    pub top: u32,
    pub bottom: u32,
    pub question_type: QuestionType,
    pub keywords: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ExamFixture {
    pub root: PathBuf,
    pub paper_manifest: PathBuf,
    pub sheet_manifests: Vec<PathBuf>,
    pub sheet_ids: Vec<String>,
    /// True roll written on each sheet, by sheet position.
    pub sheet_rolls: Vec<String>,
    pub roster: Roster,
    pub questions: Vec<FixtureQuestion>,
    pub name_box: PixelRect,
    pub roll_box: PixelRect,
}

impl ExamFixture {
    pub fn roster_csv(&self) -> String {
        let mut out = String::from("roll,name\n");
        for e in self.roster.entries() {
            out.push_str(&format!("{},{}\n", e.roll, e.name));
        }
        out
    }
}

fn roll(i: usize) -> String {
    format!("CS21B{:03}", i + 1)
}

/// Approximate text width in pixels.
fn text_width(text: &str) -> f64 {
    12.0 * text.chars().count() as f64 + 8.0
}

struct PageDraft {
    words: Vec<WordBox>,
}

impl PageDraft {
    fn new() -> Self {
        Self { words: Vec::new() }
    }

    /// Lays words left to right from `x`, returning the x after the last one.
    fn line(&mut self, words: &[&str], x: f64, top: f64) -> f64 {
        let mut x = x;
        for w in words {
            let width = text_width(w);
            self.words.push(WordBox::new(*w, x, top, x + width, top + f64::from(LINE_HEIGHT)));
            x += width + 10.0;
        }
        x
    }

    fn write(self, dir: &Path, page_index: u32) -> ManifestPage {
        let mut data = vec![255u8; (PAGE_WIDTH * PAGE_HEIGHT) as usize];
        for w in &self.words {
            let r = w.pixel_rect();
            // Strokes are the middle band of each word box.
            for y in (r.y0 + 6)..(r.y1.saturating_sub(6)).min(PAGE_HEIGHT) {
                for x in (r.x0 + 2)..r.x1.saturating_sub(2).min(PAGE_WIDTH) {
                    data[(y * PAGE_WIDTH + x) as usize] = INK;
                }
            }
        }
        let file = format!("page-{page_index}.png");
        let path = dir.join(&file);
        let image = PageImage::new(PAGE_WIDTH, PAGE_HEIGHT, ColorMode::Gray, data, page_index).expect("page buffer");
        image.save_png(&path).expect("write page");
        let words: Vec<WordBox> = self.words.into_iter().map(|w| w.on_page(page_index)).collect();
        write_sidecar(&path, &words).expect("write sidecar");
        ManifestPage { index: page_index, file }
    }
}

fn layout(spec: &FixtureSpec, rng: &mut ChaCha8Rng) -> Vec<FixtureQuestion> {
    let per_page = spec.questions.div_ceil(spec.pages);
    let span = PAGE_HEIGHT - FIRST_QUESTION_TOP - BOTTOM_RESERVE;
    let step = span / per_page as u32;
    let types = [QuestionType::Numerical, QuestionType::Short, QuestionType::Long];
    (0..spec.questions)
        .map(|k| {
            let page_index = (k / per_page) as u32;
            let top = FIRST_QUESTION_TOP + step * (k % per_page) as u32;
            let keywords: Vec<String> =
                TOPICS.choose_multiple(rng, 2).map(|s| (*s).to_owned()).collect();
            FixtureQuestion {
                question_id: format!("q{}", k + 1),
                page_index,
                top,
                // Two printed lines per question.
                bottom: top + 30 + LINE_HEIGHT,
                question_type: types[k % 3],
                keywords,
            }
        })
        .collect()
}

fn print_questions(drafts: &mut [PageDraft], questions: &[FixtureQuestion]) {
    for (k, q) in questions.iter().enumerate() {
        let page = &mut drafts[q.page_index as usize];
        let label = format!("Q{}", k + 1);
        page.line(&[label.as_str(), "Explain", "the", "role", "of"], 40.0, f64::from(q.top));
        page.line(&["a", "component", "(5", "marks)"], 90.0, f64::from(q.top + 30));
    }
}

fn write_bundle(dir: &Path, bundle_id: &str, kind: BundleKind, drafts: Vec<PageDraft>) -> PathBuf {
    std::fs::create_dir_all(dir).expect("fixture dir");
    let pages = drafts.into_iter().enumerate().map(|(i, d)| d.write(dir, i as u32)).collect();
    let manifest = Manifest { bundle_id: bundle_id.to_owned(), kind, pages, source_name: None };
    let path = dir.join("manifest.json");
    manifest.write(&path).expect("write manifest");
    path
}

/// Writes a complete exam under `root`.
pub fn write_exam(root: &Path, spec: &FixtureSpec) -> ExamFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let questions = layout(spec, &mut rng);
    let name_box = PixelRect::new(150, 40, 560, 100);
    let roll_box = PixelRect::new(660, 40, 980, 100);

    let header = |page: &mut PageDraft| {
        page.line(&["Name:"], 40.0, 60.0);
        page.line(&["Roll:"], 580.0, 60.0);
    };

    let mut paper: Vec<PageDraft> = (0..spec.pages).map(|_| PageDraft::new()).collect();
    header(&mut paper[0]);
    print_questions(&mut paper, &questions);
    let paper_manifest = write_bundle(&root.join("paper"), "paper", BundleKind::QuestionPaper, paper);

    let roster = Roster::new(
        (0..spec.sheets).map(|i| RosterEntry { roll: roll(i), name: format!("Student {}", i + 1) }).collect(),
    )
    .expect("unique rolls");

    let mut sheet_manifests = Vec::new();
    let mut sheet_ids = Vec::new();
    let mut sheet_rolls = Vec::new();
    // Sheets are scanned in an order unrelated to the roster.
    let mut students: Vec<usize> = (0..spec.sheets).collect();
    students.shuffle(&mut rng);
    for (pos, &student) in students.iter().enumerate() {
        let bundle_id = format!("sheet-{:03}", pos + 1);
        let mut pages: Vec<PageDraft> = (0..spec.pages).map(|_| PageDraft::new()).collect();
        header(&mut pages[0]);
        let number = (student + 1).to_string();
        pages[0].line(&["Student", number.as_str()], 160.0, 58.0);
        let mut written = roll(student);
        if spec.corrupted_rolls.contains(&pos) {
            // Letter O for digit 0.
            written = written.replacen('0', "O", 1);
        }
        pages[0].line(&[written.as_str()], 680.0, 58.0);
        print_questions(&mut pages, &questions);

        let keywordless = spec.keywordless_every > 0 && pos % spec.keywordless_every == spec.keywordless_every - 1;
        for (k, q) in questions.iter().enumerate() {
            let mut words: Vec<String> = (0..rng.gen_range(3..7)).map(|_| FILLER.choose(&mut rng).unwrap().to_string()).collect();
            if !keywordless && (pos + k) % 3 != 0 {
                let keyword = q.keywords[(pos + k) % q.keywords.len()].clone();
                let at = rng.gen_range(0..=words.len());
                // Punctuation and case must not stop a match.
                words.insert(at, format!("{}{}", capitalize(&keyword), if at % 2 == 0 { "," } else { "" }));
            }
            let refs: Vec<&str> = words.iter().map(String::as_str).collect();
            pages[q.page_index as usize].line(&refs, 100.0, f64::from(q.bottom + 40));
        }
        sheet_manifests.push(write_bundle(&root.join(&bundle_id), &bundle_id, BundleKind::AnswerSheet, pages));
        sheet_ids.push(bundle_id);
        sheet_rolls.push(roll(student));
    }

    ExamFixture {
        root: root.to_path_buf(),
        paper_manifest,
        sheet_manifests,
        sheet_ids,
        sheet_rolls,
        roster,
        questions,
        name_box,
        roll_box,
    }
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    chars.next().map(|c| c.to_uppercase().chain(chars).collect()).unwrap_or_default()
}
