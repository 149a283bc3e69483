//! JSON-over-HTTP interface.

use std::sync::Arc;

use axum::extract::{FromRequestParts, Path, Query, State};
use axum::http::header::{AUTHORIZATION, CONTENT_TYPE};
use axum::http::request::Parts;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use gradepipe_core::analytics::{EvaluationReport, SheetTrim};
use gradepipe_core::identity::{IdentityMapping, Roster, RosterEntry};
use gradepipe_core::PageImage;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};
use crate::platform::{ExamSummary, GradeReceipt, NextResponse, Platform, QuestionSet, SaveQuestions};
use crate::store::{QuestionSettings, Role, User};

type Shared = Arc<Platform>;

#[derive(Serialize)]
struct ErrorBody {
    error: &'static str,
    message: String,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let code = self.code();
        let status = match code {
            "not_found" => StatusCode::NOT_FOUND,
            "conflict" | "state" => StatusCode::CONFLICT,
            "validation" => StatusCode::UNPROCESSABLE_ENTITY,
            "unauthenticated" => StatusCode::UNAUTHORIZED,
            "forbidden" => StatusCode::FORBIDDEN,
            "backend" => StatusCode::BAD_GATEWAY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            tracing::error!(error = %self, "request failed");
        }
        (status, Json(ErrorBody { error: code, message: self.to_string() })).into_response()
    }
}

/// Runs blocking platform work off the async executor.
async fn blocking<T, F>(platform: &Shared, f: F) -> Result<T>
where
    T: Send + 'static,
    F: FnOnce(&Platform) -> Result<T> + Send + 'static,
{
    let platform = Arc::clone(platform);
    tokio::task::spawn_blocking(move || f(&platform)).await.map_err(|e| ServiceError::Task(e.to_string()))?
}

/// The caller, identified by its bearer token.
pub struct Caller(pub User);

impl Caller {
    fn instructor(&self) -> Result<()> {
        if self.0.role != Role::Instructor {
            return Err(ServiceError::Forbidden("instructors only".into()));
        }
        Ok(())
    }
}

impl FromRequestParts<Shared> for Caller {
    type Rejection = ServiceError;

    async fn from_request_parts(parts: &mut Parts, state: &Shared) -> Result<Self> {
        let token = parts
            .headers
            .get(AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .ok_or(ServiceError::Unauthenticated)?
            .to_owned();
        blocking(state, move |p| p.authenticate(&token)).await.map(Caller)
    }
}

#[derive(Deserialize)]
struct NewExam {
    exam_id: String,
    name: String,
    #[serde(default)]
    roster: Vec<RosterEntry>,
}

#[derive(Deserialize)]
struct MappingFix {
    roll: Option<String>,
}

#[derive(Deserialize)]
struct Assignment {
    grader_id: String,
    question_id: String,
}

#[derive(Deserialize)]
struct OpenGrading {
    seed: u64,
}

#[derive(Serialize)]
struct SplitSizes {
    s_hna: usize,
    s_ha: usize,
    s_h: usize,
    s_nh: usize,
}

#[derive(Deserialize)]
struct NextQuery {
    question: String,
}

#[derive(Deserialize)]
struct Grade {
    bundle_id: String,
    question_id: String,
    score: f64,
}

#[derive(Deserialize)]
struct ReportQuery {
    seed: Option<u64>,
    #[serde(default)]
    sheet_trim: SheetTrim,
}

pub fn router(platform: Shared) -> Router {
    Router::new()
        .route("/exams", get(list_exams).post(create_exam))
        .route("/exams/{exam}", get(get_exam))
        .route("/exams/{exam}/questions", get(get_questions).put(put_questions))
        .route("/exams/{exam}/mappings", get(get_mappings))
        .route("/exams/{exam}/mappings/{bundle}", put(put_mapping))
        .route("/exams/{exam}/keywords", get(get_keywords).put(put_keywords))
        .route("/exams/{exam}/assignments", post(post_assignment))
        .route("/exams/{exam}/open", post(post_open))
        .route("/exams/{exam}/next", get(get_next))
        .route("/exams/{exam}/grades", post(post_grade).put(put_grade))
        .route("/exams/{exam}/events.csv", get(get_events))
        .route("/exams/{exam}/report", get(get_report))
        .route("/pages/{bundle}/{file}", get(get_page))
        .route("/crops/{bundle}/{file}", get(get_crop))
        .with_state(platform)
}

async fn list_exams(State(p): State<Shared>, _: Caller) -> Result<Json<Vec<ExamSummary>>> {
    blocking(&p, |p| p.exams()).await.map(Json)
}

async fn create_exam(State(p): State<Shared>, caller: Caller, Json(body): Json<NewExam>) -> Result<Response> {
    caller.instructor()?;
    let roster = Roster::new(body.roster)?;
    let summary = blocking(&p, move |p| p.create_exam(&body.exam_id, &body.name, roster)).await?;
    Ok((StatusCode::CREATED, Json(summary)).into_response())
}

async fn get_exam(State(p): State<Shared>, _: Caller, Path(exam): Path<String>) -> Result<Json<ExamSummary>> {
    blocking(&p, move |p| p.exam(&exam)).await.map(Json)
}

async fn get_questions(State(p): State<Shared>, _: Caller, Path(exam): Path<String>) -> Result<Json<QuestionSet>> {
    blocking(&p, move |p| p.questions(&exam)).await.map(Json)
}

async fn put_questions(
    State(p): State<Shared>,
    caller: Caller,
    Path(exam): Path<String>,
    Json(body): Json<SaveQuestions>,
) -> Result<Json<QuestionSet>> {
    caller.instructor()?;
    blocking(&p, move |p| p.save_questions(&exam, &body)).await.map(Json)
}

async fn get_mappings(
    State(p): State<Shared>,
    caller: Caller,
    Path(exam): Path<String>,
) -> Result<Json<Vec<IdentityMapping>>> {
    caller.instructor()?;
    blocking(&p, move |p| p.mappings(&exam)).await.map(Json)
}

async fn put_mapping(
    State(p): State<Shared>,
    caller: Caller,
    Path((exam, bundle)): Path<(String, String)>,
    Json(body): Json<MappingFix>,
) -> Result<Json<IdentityMapping>> {
    caller.instructor()?;
    blocking(&p, move |p| p.correct_mapping(&exam, &bundle, body.roll.as_deref())).await.map(Json)
}

async fn get_keywords(
    State(p): State<Shared>,
    caller: Caller,
    Path(exam): Path<String>,
) -> Result<Json<Vec<QuestionSettings>>> {
    caller.instructor()?;
    blocking(&p, move |p| p.settings(&exam)).await.map(Json)
}

async fn put_keywords(
    State(p): State<Shared>,
    caller: Caller,
    Path(exam): Path<String>,
    Json(body): Json<Vec<QuestionSettings>>,
) -> Result<Json<Vec<QuestionSettings>>> {
    caller.instructor()?;
    blocking(&p, move |p| body.iter().map(|s| p.set_settings(&exam, s)).collect()).await.map(Json)
}

async fn post_assignment(
    State(p): State<Shared>,
    caller: Caller,
    Path(exam): Path<String>,
    Json(body): Json<Assignment>,
) -> Result<StatusCode> {
    caller.instructor()?;
    blocking(&p, move |p| p.assign(&exam, &body.grader_id, &body.question_id)).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn post_open(
    State(p): State<Shared>,
    caller: Caller,
    Path(exam): Path<String>,
    Json(body): Json<OpenGrading>,
) -> Result<Json<SplitSizes>> {
    caller.instructor()?;
    let split = blocking(&p, move |p| p.open_grading(&exam, body.seed)).await?;
    Ok(Json(SplitSizes { s_hna: split.s_hna.len(), s_ha: split.s_ha.len(), s_h: split.s_h.len(), s_nh: split.s_nh.len() }))
}

async fn get_next(
    State(p): State<Shared>,
    Caller(user): Caller,
    Path(exam): Path<String>,
    Query(q): Query<NextQuery>,
) -> Result<Json<NextResponse>> {
    blocking(&p, move |p| p.serve_next(&exam, &user.user_id, &q.question)).await.map(Json)
}

async fn post_grade(
    State(p): State<Shared>,
    Caller(user): Caller,
    Path(exam): Path<String>,
    Json(g): Json<Grade>,
) -> Result<Json<GradeReceipt>> {
    let event =
        blocking(&p, move |p| p.record_grade(&exam, &user.user_id, &g.bundle_id, &g.question_id, g.score)).await?;
    Ok(Json(GradeReceipt::from(&event)))
}

async fn put_grade(
    State(p): State<Shared>,
    Caller(user): Caller,
    Path(exam): Path<String>,
    Json(g): Json<Grade>,
) -> Result<Json<GradeReceipt>> {
    let event = blocking(&p, move |p| p.regrade(&exam, &user, &g.bundle_id, &g.question_id, g.score)).await?;
    Ok(Json(GradeReceipt::from(&event)))
}

async fn get_events(State(p): State<Shared>, caller: Caller, Path(exam): Path<String>) -> Result<Response> {
    caller.instructor()?;
    let csv = blocking(&p, move |p| p.export_events(&exam)).await?;
    Ok(([(CONTENT_TYPE, "text/csv; charset=utf-8")], csv).into_response())
}

async fn get_report(
    State(p): State<Shared>,
    caller: Caller,
    Path(exam): Path<String>,
    Query(q): Query<ReportQuery>,
) -> Result<Json<EvaluationReport>> {
    caller.instructor()?;
    blocking(&p, move |p| p.analyze(&exam, q.seed, q.sheet_trim)).await.map(Json)
}

fn png_stem(file: &str) -> Result<&str> {
    file.strip_suffix(".png").ok_or_else(|| ServiceError::NotFound(format!("`{file}`")))
}

fn png(image: &PageImage) -> Result<Response> {
    Ok(([(CONTENT_TYPE, "image/png")], image.encode_png()?).into_response())
}

async fn get_page(
    State(p): State<Shared>,
    _: Caller,
    Path((bundle, file)): Path<(String, String)>,
) -> Result<Response> {
    let index: u32 = png_stem(&file)?.parse().map_err(|_| ServiceError::NotFound(format!("page `{file}`")))?;
    let image = blocking(&p, move |p| p.page(&bundle, index)).await?;
    png(&image)
}

async fn get_crop(
    State(p): State<Shared>,
    _: Caller,
    Path((bundle, file)): Path<(String, String)>,
) -> Result<Response> {
    let question = png_stem(&file)?.to_owned();
    let image = blocking(&p, move |p| p.response_image(&bundle, &question)).await?;
    png(&image)
}
