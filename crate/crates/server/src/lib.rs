//! Grading service: persistence, the grading workflow and its HTTP API.
//!
//! Grading time is measured on the server, from dispatch of a response to
//! its first grade, and is never shown to graders.

pub mod clock;
pub mod error;
pub mod http;
pub mod platform;
pub mod store;

pub use clock::{Clock, ManualClock, MonotonicClock};
pub use error::{Result, ServiceError};
pub use platform::{GradeReceipt, NextResponse, Platform, ResponseView};
pub use store::{QuestionSettings, Role, Store, User};

/// Serves the API on `addr` until the process is stopped.
pub async fn serve(platform: std::sync::Arc<Platform>, addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, http::router(platform)).await
}
