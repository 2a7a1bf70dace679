use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use rankq_core::api::ApiError;
use rankq_core::Error;

/// Core error carried to an HTTP response.
#[derive(Debug)]
pub struct ApiFailure(pub Error);

impl From<Error> for ApiFailure {
    fn from(e: Error) -> Self {
        ApiFailure(e)
    }
}

pub fn status_of(e: &Error) -> StatusCode {
    match e {
        Error::InvalidArgument(_)
        | Error::IncompatibleSketch(_)
        | Error::Codec(_)
        | Error::Config(_)
        | Error::EmptyReport => StatusCode::BAD_REQUEST,
        Error::TimeRegression { .. } | Error::StaleWindow { .. } => StatusCode::CONFLICT,
        Error::NotWaiting(_) => StatusCode::NOT_FOUND,
        Error::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiFailure {
    fn into_response(self) -> Response {
        let status = status_of(&self.0);
        if status.is_server_error() {
            tracing::error!(error = %self.0, "request failed");
        } else {
            tracing::debug!(error = %self.0, "request rejected");
        }
        let body = ApiError {
            error: self.0.kind().to_string(),
            message: self.0.to_string(),
        };
        (status, Json(body)).into_response()
    }
}
