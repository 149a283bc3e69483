//! `gradepipe` command-line front end.

use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gradepipe_core::analytics::{self, emit_report, read_events_csv, EvaluationReport, ExamEvents, SheetTrim};
use gradepipe_core::identity::{Roster, DEFAULT_THRESHOLD};
use gradepipe_core::ingest::{rasterize_pdf, BundleKind, Manifest, RasterizerAdapter, DEFAULT_DPI};
use gradepipe_core::layout::{LayoutConfig, QuestionType, RegionEdit, DEFAULT_ANCHOR_PATTERN};
use gradepipe_core::ocr::{Recognizer, RemoteConfig, RemoteRecognizer, SidecarRecognizer};
use gradepipe_core::regions::DeductionConfig;
use gradepipe_core::PixelRect;
use gradepipe_server::platform::SaveQuestions;
use gradepipe_server::{MonotonicClock, Platform, QuestionSettings, Role, Store};
use serde_json::json;

#[derive(Parser)]
#[command(name = "gradepipe", version, about = "Assisted grading of scanned answer sheets")]
struct Cli {
    /// Directory holding the database and rendered pages.
    #[arg(long, global = true, env = "GRADEPIPE_DATA", default_value = "gradepipe-data")]
    data_dir: PathBuf,
    /// Database file; defaults to `<data-dir>/gradepipe.db`.
    #[arg(long, global = true, env = "GRADEPIPE_DB")]
    db: Option<PathBuf>,
    /// Text recognition backend: `mock` reads word-box sidecars, anything
    /// else is the base URL of a recognition service.
    #[arg(long, global = true, env = "GRADEPIPE_OCR_URL", default_value = "mock")]
    backend: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Register a page bundle with an exam.
    Ingest(IngestArgs),
    /// Find question regions on the exam's question paper.
    DetectQuestions {
        #[arg(long)]
        exam: String,
        #[arg(long, default_value = DEFAULT_ANCHOR_PATTERN)]
        pattern: String,
    },
    /// Map answer sheets to roster entries.
    MapIdentities {
        #[arg(long)]
        exam: String,
        /// Roster CSV with `roll,name` columns; replaces the stored roster.
        #[arg(long)]
        roster: Option<PathBuf>,
        #[arg(long, value_parser = parse_rect)]
        name_box: PixelRect,
        #[arg(long, value_parser = parse_rect)]
        roll_box: PixelRect,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: usize,
    },
    /// Write every answer crop as `<out>/<roll>/<question>.png`.
    Crop {
        #[arg(long)]
        exam: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 16)]
        side_margin: u32,
        #[arg(long, default_value_t = 16)]
        bottom_margin: u32,
        #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
        vertical_offset: i32,
    },
    /// Spot keywords in every answer crop.
    Highlight {
        #[arg(long)]
        exam: String,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, env = "GRADEPIPE_ADDR", default_value = "127.0.0.1:8080")]
        addr: String,
    },
    /// Evaluate grading times.
    Analyze(AnalyzeArgs),
    /// Exam set-up.
    #[command(subcommand)]
    Exam(ExamCommand),
    /// User accounts.
    #[command(subcommand)]
    User(UserCommand),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    exam: String,
    #[arg(long, conflicts_with = "pdf", required_unless_present = "pdf")]
    manifest: Option<PathBuf>,
    #[arg(long)]
    pdf: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_DPI)]
    dpi: u32,
    /// Bundle kind for a PDF.
    #[arg(long, value_enum, default_value_t = Kind::AnswerSheet)]
    kind: Kind,
    /// Bundle id for a PDF; defaults to the file stem.
    #[arg(long)]
    bundle_id: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    AnswerSheet,
    QuestionPaper,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long, conflicts_with = "events", required_unless_present = "events")]
    exam: Option<String>,
    #[arg(long, requires = "exam")]
    seed: Option<u64>,
    /// Offline event logs; each file's stem is taken as its exam id.
    #[arg(long, num_args = 1..)]
    events: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = Trim::SheetLevel)]
    sheet_trim: Trim,
    /// Directory for `report.json` and `report.csv`; the JSON goes to stdout otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Trim {
    SheetLevel,
    ResponseLevel,
}

#[derive(Subcommand)]
enum ExamCommand {
    Create {
        #[arg(long)]
        exam: String,
        #[arg(long)]
        name: String,
        #[arg(long)]
        roster: Option<PathBuf>,
    },
    List,
    /// Print the stored question regions.
    Questions {
        #[arg(long)]
        exam: String,
    },
    /// Set question types, which also confirms the regions.
    Types {
        #[arg(long)]
        exam: String,
        /// `q1=long,q2=numerical,...`
        #[arg(long, value_delimiter = ',', value_parser = parse_type)]
        types: Vec<(String, QuestionType)>,
    },
    /// Set keywords and scoring for one question or, with `--file`, for many.
    Keywords {
        #[arg(long)]
        exam: String,
        /// JSON array of `{question_id, keywords, max_score, rubric}`.
        #[arg(long, conflicts_with_all = ["question", "keywords"])]
        file: Option<PathBuf>,
        #[arg(long, required_unless_present = "file")]
        question: Option<String>,
        #[arg(long, value_delimiter = ',')]
        keywords: Vec<String>,
        #[arg(long, default_value_t = 10.0)]
        max_score: f64,
        #[arg(long, default_value = "")]
        rubric: String,
    },
    /// Let a grader grade a question.
    Assign {
        #[arg(long)]
        exam: String,
        #[arg(long)]
        grader: String,
        #[arg(long, value_delimiter = ',', required = true)]
        questions: Vec<String>,
    },
    /// Split the sheets and start grading.
    Open {
        #[arg(long)]
        exam: String,
        #[arg(long)]
        seed: u64,
    },
    /// Write the grading event log as CSV.
    Events {
        #[arg(long)]
        exam: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum UserCommand {
    /// Create a user and print its token.
    Add {
        #[arg(long)]
        id: String,
        #[arg(long, value_parser = parse_role)]
        role: Role,
    },
}

fn parse_rect(s: &str) -> std::result::Result<PixelRect, String> {
    let parts: Vec<u32> = s
        .split(',')
        .map(|p| p.trim().parse::<u32>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match parts[..] {
        [x0, y0, x1, y1] if x0 < x1 && y0 < y1 => Ok(PixelRect::new(x0, y0, x1, y1)),
        [_, _, _, _] => Err("expected x0 < x1 and y0 < y1".into()),
        _ => Err("expected x0,y0,x1,y1".into()),
    }
}

fn parse_type(s: &str) -> std::result::Result<(String, QuestionType), String> {
    let (q, t) = s.split_once('=').ok_or("expected <question>=<type>")?;
    let ty = QuestionType::parse(t.trim()).ok_or_else(|| format!("unknown question type `{t}`"))?;
    Ok((q.trim().to_owned(), ty))
}

fn parse_role(s: &str) -> std::result::Result<Role, String> {
    Role::parse(s).ok_or_else(|| format!("unknown role `{s}`"))
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

impl Cli {
    fn recognizer(&self) -> Arc<dyn Recognizer> {
        if self.backend == "mock" {
            Arc::new(SidecarRecognizer)
        } else {
            Arc::new(RemoteRecognizer::new(&self.backend, RemoteConfig::default()))
        }
    }

    fn platform(&self) -> Result<Platform> {
        std::fs::create_dir_all(&self.data_dir)
            .with_context(|| format!("creating {}", self.data_dir.display()))?;
        let db = self.db.clone().unwrap_or_else(|| self.data_dir.join("gradepipe.db"));
        let store = Store::open(&db).with_context(|| format!("opening {}", db.display()))?;
        Ok(Platform::new(store, Arc::new(MonotonicClock::new()), self.recognizer()))
    }
}

fn ingest(cli: &Cli, p: &Platform, args: &IngestArgs) -> Result<()> {
    let manifest = match (&args.manifest, &args.pdf) {
        (Some(m), _) => m.clone(),
        (None, Some(pdf)) => {
            let stem = pdf.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let bundle_id = args.bundle_id.clone().unwrap_or(stem);
            let out = cli.data_dir.join("pages").join(&args.exam).join(&bundle_id);
            rasterize_pdf(RasterizerAdapter::from_env().as_ref(), pdf, args.dpi, &out)?;
            let path = out.join("manifest.json");
            let mut manifest = Manifest::read(&path)?;
            manifest.bundle_id = bundle_id;
            manifest.kind = match args.kind {
                Kind::AnswerSheet => BundleKind::AnswerSheet,
                Kind::QuestionPaper => BundleKind::QuestionPaper,
            };
            manifest.write(&path)?;
            path
        }
        (None, None) => bail!("one of --manifest or --pdf is required"),
    };
    print_json(&p.ingest(&args.exam, &manifest)?)
}

fn analyze(p: Option<&Platform>, args: &AnalyzeArgs) -> Result<()> {
    let trim = match args.sheet_trim {
        Trim::SheetLevel => SheetTrim::SheetLevel,
        Trim::ResponseLevel => SheetTrim::ResponseLevel,
    };
    let report: EvaluationReport = match (&args.exam, p) {
        (Some(exam), Some(p)) => p.analyze(exam, args.seed, trim)?,
        _ => {
            let mut exams = Vec::new();
            for path in &args.events {
                let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
                let events = read_events_csv(std::io::BufReader::new(file))
                    .with_context(|| format!("reading {}", path.display()))?;
                let exam_id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                exams.push(ExamEvents { exam_id, events });
            }
            analytics::analyze(&exams, trim)?
        }
    };
    match &args.out {
        Some(dir) => {
            emit_report(&report, dir)?;
            print_json(&report.summary)
        }
        None => {
            print!("{}", report.to_json()?);
            Ok(())
        }
    }
}

fn exam_command(p: &Platform, command: &ExamCommand) -> Result<()> {
    match command {
        ExamCommand::Create { exam, name, roster } => {
            let roster = match roster {
                Some(path) => Roster::from_csv_path(path)?,
                None => Roster::new(Vec::new())?,
            };
            print_json(&p.create_exam(exam, name, roster)?)
        }
        ExamCommand::List => print_json(&p.exams()?),
        ExamCommand::Questions { exam } => print_json(&p.questions(exam)?),
        ExamCommand::Types { exam, types } => {
            let current = p.questions(exam)?;
            let edits = types
                .iter()
                .map(|(q, ty)| RegionEdit::Update {
                    question_id: q.clone(),
                    rect: None,
                    page_index: None,
                    order: None,
                    text: None,
                    question_type: Some(*ty),
                })
                .collect();
            print_json(&p.save_questions(exam, &SaveQuestions { revision: current.revision, regions: None, edits })?)
        }
        ExamCommand::Keywords { exam, file, question, keywords, max_score, rubric } => {
            let settings: Vec<QuestionSettings> = match (file, question) {
                (Some(path), _) => {
                    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
                }
                (None, Some(q)) => vec![QuestionSettings {
                    question_id: q.clone(),
                    keywords: keywords.clone(),
                    max_score: *max_score,
                    rubric: rubric.clone(),
                }],
                (None, None) => bail!("one of --file or --question is required"),
            };
            let saved = settings.iter().map(|s| p.set_settings(exam, s)).collect::<Result<Vec<_>, _>>()?;
            print_json(&saved)
        }
        ExamCommand::Assign { exam, grader, questions } => {
            for q in questions {
                p.assign(exam, grader, q)?;
            }
            Ok(())
        }
        ExamCommand::Open { exam, seed } => {
            let split = p.open_grading(exam, *seed)?;
            print_json(&json!({
                "s_hna": split.s_hna.len(),
                "s_ha": split.s_ha.len(),
                "s_h": split.s_h.len(),
                "s_nh": split.s_nh.len(),
            }))
        }
        ExamCommand::Events { exam, out } => {
            let csv = p.export_events(exam)?;
            match out {
                Some(path) => std::fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?,
                None => {
                    use std::io::Write;
                    std::io::stdout().write_all(&csv)?;
                }
            }
            Ok(())
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    // Offline analysis needs no database.
    if let Command::Analyze(args) = &cli.command {
        if args.exam.is_none() {
            return analyze(None, args);
        }
    }
    let p = cli.platform()?;
    match &cli.command {
        Command::Ingest(args) => ingest(cli, &p, args),
        Command::DetectQuestions { exam, pattern } => {
            print_json(&p.detect_questions(exam, &LayoutConfig::with_pattern(pattern)?)?)
        }
        Command::MapIdentities { exam, roster, name_box, roll_box, threshold } => {
            if let Some(path) = roster {
                p.set_roster(exam, &Roster::from_csv_path(path)?)?;
            }
            print_json(&p.map_identities(exam, *name_box, *roll_box, *threshold)?)
        }
        Command::Crop { exam, out, side_margin, bottom_margin, vertical_offset } => {
            let config = DeductionConfig {
                side_margin: *side_margin,
                bottom_margin: *bottom_margin,
                vertical_offset: *vertical_offset,
            };
            p.set_deduction(exam, &config)?;
            let export = p.export_crops(exam, out)?;
            print_json(&json!({
                "written": export.written.len(),
                "degenerate": export.degenerate,
                "unmapped": export.unmapped,
            }))
        }
        Command::Highlight { exam } => print_json(&p.run_highlights(exam)?),
        Command::Serve { addr } => serve(p, addr),
        Command::Analyze(args) => analyze(Some(&p), args),
        Command::Exam(command) => exam_command(&p, command),
        Command::User(UserCommand::Add { id, role }) => {
            println!("{}", p.add_user(id, *role)?);
            Ok(())
        }
    }
}

fn serve(p: Platform, addr: &str) -> Result<()> {
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(gradepipe_server::serve(Arc::new(p), addr))?;
    Ok(())
}

fn main() -> std::process::ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}
