use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("bundle `{0}` lists no pages")]
    EmptyBundle(String),
    #[error("page file `{}` does not exist", .0.display())]
    MissingFile(PathBuf),
    #[error("cannot decode image `{}`: {reason}", .path.display())]
    UnreadableImage { path: PathBuf, reason: String },
    #[error("page index {index} is listed twice (entry `{file}`)")]
    DuplicatePageIndex { index: u32, file: String },
    #[error("manifest entry `{file}` has index {index}, expected {expected}")]
    PageOutOfOrder { file: String, index: u32, expected: u32 },
    #[error("invalid manifest `{}`: {reason}", .path.display())]
    Manifest { path: PathBuf, reason: String },
    #[error("invalid page image: {0}")]
    InvalidPage(String),
    #[error("no PDF rasterizer adapter is configured")]
    AdapterNotConfigured,
    #[error("rasterizer adapter failed ({status}): {output}")]
    AdapterFailed { status: String, output: String },

    #[error("recognition backend failed: {diagnostics}")]
    Backend { diagnostics: String, retriable: bool },
    #[error("invalid word box: {0}")]
    InvalidWordBox(String),

    #[error("invalid anchor pattern: {0}")]
    Pattern(#[from] regex::Error),
    #[error("duplicate question numbers: {}", .0.join(", "))]
    DuplicateQuestions(Vec<String>),
    #[error("anchors `{first}` and `{second}` share one text line")]
    AnchorsShareLine { first: String, second: String },
    #[error("questions {first} and {second} overlap on page {page_index}")]
    RegionOverlap { first: u32, second: u32, page_index: u32 },
    #[error("question order must be exactly 1..={expected_max}, found {found:?}")]
    NonContiguousOrder { expected_max: usize, found: Vec<u32> },
    #[error("question {order} is on page {page_index}, before the page of question {previous}")]
    OrderNotDocumentOrder { order: u32, previous: u32, page_index: u32 },
    #[error("region `{0}` has invalid bounds")]
    RegionBounds(String),
    #[error("unknown question `{0}`")]
    UnknownQuestion(String),
    #[error("duplicate question id `{0}`")]
    DuplicateQuestionId(String),

    #[error("invalid roster: {0}")]
    Roster(String),
    #[error("roll `{0}` is not on the roster")]
    UnknownRoll(String),
    #[error("roll `{roll}` is already assigned to sheet `{holder}`")]
    RollConflict { roll: String, holder: String },
    #[error("unknown answer sheet `{0}`")]
    UnknownSheet(String),

    #[error("question regions must be confirmed before answer regions are deduced (unconfirmed: {})", .0.join(", "))]
    Unconfirmed(Vec<String>),
    #[error("answer region for `{question_id}` on `{bundle_id}` is empty; open the whole-page view instead")]
    DegenerateRegion { question_id: String, bundle_id: String },
    #[error("rectangle {rect} lies outside a {width}x{height} page")]
    OutsidePage { rect: String, width: u32, height: u32 },
    #[error("page {page_index} not found in bundle `{bundle_id}`")]
    PageNotFound { bundle_id: String, page_index: u32 },

    #[error("highlight box for `{0}` falls outside the crop")]
    HighlightOutOfBounds(String),
    #[error("no highlighting was attempted for question `{0}`")]
    NotAttempted(String),

    #[error("cannot split an empty submission list")]
    EmptySubmissions,
    #[error("no question has a defined reduction")]
    NoDefinedReductions,
    #[error("invalid event log: {0}")]
    EventLog(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether repeating the same call may succeed.
    pub fn is_retriable(&self) -> bool {
        matches!(self, Error::Backend { retriable: true, .. })
    }
}
