use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use deepsketch::queryir::QueryError;
use deepsketch::sketch::SketchError;
use serde::Serialize;

/// JSON error body: `{"error": code, "message": ..., "position"?: n}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub position: Option<usize>,
}

#[derive(Serialize)]
struct Body<'a> {
    error: &'a str,
    message: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    position: Option<usize>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            position: None,
        }
    }

    pub fn not_found(what: impl Into<String>) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "not_found", what)
    }

    pub fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }

    pub fn body(&self) -> serde_json::Value {
        serde_json::to_value(Body {
            error: self.code,
            message: &self.message,
            position: self.position,
        })
        .expect("error serializes")
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body())).into_response()
    }
}

fn query_error_code(e: &QueryError) -> (StatusCode, &'static str) {
    use QueryError::*;
    let bad = StatusCode::BAD_REQUEST;
    let unprocessable = StatusCode::UNPROCESSABLE_ENTITY;
    match e {
        Syntax { .. } => (bad, "syntax_error"),
        UnsupportedOperator { .. } => (bad, "unsupported_operator"),
        UnsupportedLiteral { .. } => (bad, "unsupported_literal"),
        PlaceholderNotAllowed { .. } => (bad, "placeholder_not_allowed"),
        NoPlaceholder => (bad, "no_placeholder"),
        MultiplePlaceholders { .. } => (bad, "multiple_placeholders"),
        UnknownTable(_) | UnknownColumn { .. } => (unprocessable, "unknown_symbol"),
        UnknownAlias(_) => (bad, "unknown_alias"),
        DuplicateAlias(_) => (bad, "duplicate_alias"),
        AmbiguousColumn(_) => (bad, "ambiguous_column"),
        NonFkJoin(_) => (bad, "non_fk_join"),
        JoinOutsideQuery(_) => (bad, "join_outside_query"),
        LiteralKind { .. } => (bad, "literal_kind"),
        DuplicateTable(_) => (bad, "duplicate_table"),
        DuplicatePredicate { .. } => (bad, "duplicate_predicate"),
        EmptyQuery => (bad, "empty_query"),
        Disconnected => (bad, "disconnected"),
        InvalidTemplate(_) => (unprocessable, "invalid_template"),
        EmptySample { .. } => (unprocessable, "empty_sample"),
        NonDateColumnForYear { .. } => (unprocessable, "grouping_kind_mismatch"),
        InvalidGenerator(_) => (bad, "invalid_params"),
    }
}

impl From<QueryError> for ApiError {
    fn from(e: QueryError) -> Self {
        let (status, code) = query_error_code(&e);
        let mut message = e.to_string();
        if matches!(e, QueryError::PlaceholderNotAllowed { .. }) {
            message.push_str("; use the template endpoint for queries with '?'");
        }
        ApiError {
            status,
            code,
            position: e.position(),
            message,
        }
    }
}

impl From<SketchError> for ApiError {
    fn from(e: SketchError) -> Self {
        match e {
            SketchError::Query(q) => q.into(),
            SketchError::UnknownSymbol { .. } => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "unknown_symbol", e.to_string())
            }
            SketchError::InvalidConfig(m) => ApiError::bad_request("invalid_params", m),
            other => ApiError::internal(other.to_string()),
        }
    }
}
