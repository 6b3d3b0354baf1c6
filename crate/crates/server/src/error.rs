//! Mapping of engine errors to HTTP responses.
//!
//! Every error body is `{"error": <code>, "message": <text>}`; malformed
//! easel specs additionally carry `"violations": [{field, message}]`.

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

use easel_core::easel::validate::Violation;
use easel_core::easel::CompileError;
use easel_core::engine::EngineError;
use easel_core::gateway::GatewayError;
use easel_core::metadata::MetadataError;
use easel_core::organization::ExhibitError;
use easel_core::project::ProjectError;
use easel_core::provenance::ProvenanceError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorBody {
    pub error: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub violations: Option<Vec<Violation>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                error: code,
                message: message.into(),
                violations: None,
            },
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, "conflict", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }

    fn violations(violations: Vec<Violation>, message: String) -> Self {
        let mut e = Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_spec", message);
        e.body.violations = Some(violations);
        e
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<CompileError> for ApiError {
    fn from(e: CompileError) -> Self {
        let message = e.to_string();
        match e {
            CompileError::Validation(v) => Self::violations(v, message),
            CompileError::Template(_) => Self::internal(message),
            _ => Self::invalid(message),
        }
    }
}

impl From<GatewayError> for ApiError {
    fn from(e: GatewayError) -> Self {
        let message = e.to_string();
        match e {
            GatewayError::InvalidGraph(_) => Self::invalid(message),
            GatewayError::UnknownJob(_) => Self::not_found(message),
            GatewayError::NotDone { .. } | GatewayError::NotCancellable { .. } => Self::conflict(message),
            GatewayError::BackendUnavailable(_) => Self::new(StatusCode::SERVICE_UNAVAILABLE, "backend_unavailable", message),
        }
    }
}

impl From<ProjectError> for ApiError {
    fn from(e: ProjectError) -> Self {
        use ProjectError as P;
        let message = e.to_string();
        match e {
            P::UnknownAsset(_)
            | P::UnknownItem(_)
            | P::UnknownRun(_)
            | P::UnknownEasel(_)
            | P::UnknownCollection(_)
            | P::Provenance(ProvenanceError::UnknownNode(_))
            | P::Exhibit(ExhibitError::UnknownEntry(_)) => Self::not_found(message),
            P::EmptyPayload => Self::bad_request(message),
            P::UndecodablePayload { .. } | P::UnsupportedKind(_) => {
                Self::new(StatusCode::UNSUPPORTED_MEDIA_TYPE, "unsupported_payload", message)
            }
            P::NotRecreatable(_) => Self::conflict(message),
            P::NoOutputs(_) => Self::new(StatusCode::BAD_GATEWAY, "no_outputs", message),
            P::Compile(c) => c.into(),
            P::Blob(_) | P::Journal(_) | P::Export(_) => Self::internal(message),
            _ => Self::invalid(message),
        }
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let message = e.to_string();
        match e {
            EngineError::Project(p) => p.into(),
            EngineError::Gateway(g) => g.into(),
            EngineError::Compile(c) => c.into(),
            EngineError::QuickOp(easel_core::easel::quick::QuickOpError::Compile(c)) => c.into(),
            EngineError::QuickOp(_) => Self::invalid(message),
            EngineError::Metadata(MetadataError::BackendUnavailable(_)) => {
                Self::new(StatusCode::SERVICE_UNAVAILABLE, "backend_unavailable", message)
            }
            EngineError::Metadata(_) | EngineError::UnknownUpload(_) => Self::invalid(message),
            EngineError::JobFailed { .. } => Self::new(StatusCode::BAD_GATEWAY, "job_failed", message),
            EngineError::JobCancelled(_) => Self::conflict(message),
        }
    }
}

pub type ApiResult<T> = Result<T, ApiError>;
