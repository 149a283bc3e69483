use thiserror::Error;

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Core(#[from] gradepipe_core::Error),
    #[error("storage error: {0}")]
    Store(#[from] rusqlite::Error),
    #[error("{0} not found")]
    NotFound(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("invalid request: {0}")]
    Validation(String),
    #[error("{0}")]
    State(String),
    #[error("missing or unknown bearer token")]
    Unauthenticated,
    #[error("not allowed: {0}")]
    Forbidden(String),
    #[error("background task failed: {0}")]
    Task(String),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        use gradepipe_core::Error as E;
        match self {
            ServiceError::NotFound(_) => "not_found",
            ServiceError::Conflict(_) => "conflict",
            ServiceError::Validation(_) => "validation",
            ServiceError::State(_) => "state",
            ServiceError::Unauthenticated => "unauthenticated",
            ServiceError::Forbidden(_) => "forbidden",
            ServiceError::Store(_) | ServiceError::Task(_) => "internal",
            ServiceError::Core(e) => match e {
                E::PageNotFound { .. } | E::UnknownQuestion(_) | E::UnknownSheet(_) | E::UnknownRoll(_) => {
                    "not_found"
                }
                E::RollConflict { .. } => "conflict",
                E::DegenerateRegion { .. } | E::Unconfirmed(_) | E::NotAttempted(_) => "state",
                E::Backend { .. } | E::AdapterFailed { .. } | E::AdapterNotConfigured => "backend",
                E::Io(_) => "internal",
                _ => "validation",
            },
        }
    }
}
