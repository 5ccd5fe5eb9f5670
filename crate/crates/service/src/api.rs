//! HTTP surface over [`SessionStore`].

use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cpcp_core::model::ColumnKind;
use cpcp_core::{Dataset64, IngestError, ViewState64};
use serde::Serialize;
use serde_json::json;
use tower_http::cors::CorsLayer;

use crate::store::{PatchRequest, ServiceError, SessionStore, ViewRequest, ViewSnapshot};

pub const DEFAULT_MAX_UPLOAD_BYTES: usize = 256 * 1024 * 1024;

/// Error body: `{"error": <variant name>, "message": <text>}` plus
/// `current_version` on conflicts.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: serde_json::Value,
}

impl ApiError {
    fn new(status: StatusCode, name: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: json!({ "error": name, "message": message.into() }),
        }
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let status = match &e {
            ServiceError::UnknownDataset(_) | ServiceError::UnknownView(_) => StatusCode::NOT_FOUND,
            ServiceError::VersionConflict { .. } => StatusCode::CONFLICT,
            ServiceError::Ingest(IngestError::SizeLimit { .. }) => StatusCode::PAYLOAD_TOO_LARGE,
            ServiceError::Ingest(_) => StatusCode::BAD_REQUEST,
            ServiceError::Core(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::Persist(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let mut err = Self::new(status, e.name(), e.to_string());
        if let ServiceError::VersionConflict { current, .. } = e {
            err.body["current_version"] = json!(current);
        }
        err
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Serialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
    pub missing: usize,
}

#[derive(Debug, Serialize)]
pub struct DatasetSummary {
    pub dataset_id: String,
    pub name: String,
    pub row_count: usize,
    pub schema: Vec<ColumnSchema>,
}

impl DatasetSummary {
    pub fn of(ds: &Dataset64) -> Self {
        let schema = ds
            .columns()
            .iter()
            .map(|c| {
                let stats = c.numeric_stats();
                ColumnSchema {
                    name: c.name().to_owned(),
                    kind: c.kind(),
                    min: stats.map(|s| s.min),
                    max: stats.map(|s| s.max),
                    categories: c.categories().map(<[String]>::to_vec),
                    missing: (0..c.len()).filter(|&r| c.is_missing(r)).count(),
                }
            })
            .collect();
        Self {
            dataset_id: ds.id().to_string(),
            name: ds.name().to_owned(),
            row_count: ds.row_count(),
            schema,
        }
    }
}

#[derive(Serialize)]
struct ViewBody<'a> {
    view_id: &'a str,
    version: u64,
    state: &'a ViewState64,
    layout: &'a cpcp_core::BundleLayout64,
}

fn view_response(status: StatusCode, snap: &ViewSnapshot) -> Response {
    let body = ViewBody {
        view_id: &snap.view_id,
        version: snap.version,
        state: &snap.state,
        layout: &snap.layout,
    };
    (status, Json(body)).into_response()
}

/// Router with all endpoints. `max_upload_bytes` bounds dataset uploads;
/// larger bodies get 413.
pub fn router(store: Arc<SessionStore>, max_upload_bytes: usize) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/datasets", post(upload_dataset))
        .route("/datasets/{id}", get(get_dataset))
        .route("/datasets/{id}/views", post(create_view))
        .route("/views/{id}", get(get_view).patch(patch_view))
        .route("/views/{id}/layout", get(get_layout))
        .route("/views/{id}/svg", get(get_svg))
        .layer(DefaultBodyLimit::max(max_upload_bytes))
        .layer(CorsLayer::permissive())
        .with_state(store)
}

/// Runs store work off the async workers.
async fn blocking<T, F>(store: &Arc<SessionStore>, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&SessionStore) -> Result<T, ServiceError> + Send + 'static,
{
    let store = store.clone();
    tokio::task::spawn_blocking(move || f(&store))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()))?
        .map_err(ApiError::from)
}

async fn upload_dataset(
    State(store): State<Arc<SessionStore>>,
    Query(query): Query<HashMap<String, String>>,
    req: Request,
) -> ApiResult<Response> {
    let is_multipart = req
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    let mut name = query.get("name").cloned();
    let bytes = if is_multipart {
        let mut multipart = Multipart::from_request(req, &store)
            .await
            .map_err(|e| ApiError::new(e.status(), "Malformed", e.body_text()))?;
        let field = multipart
            .next_field()
            .await
            .map_err(|e| {
                ApiError::new(e.status(), multipart_error_name(e.status()), e.body_text())
            })?
            .ok_or_else(|| {
                ApiError::new(
                    StatusCode::BAD_REQUEST,
                    "EmptyFile",
                    "no file field in form",
                )
            })?;
        if name.is_none() {
            name = field.file_name().map(str::to_owned);
        }
        field.bytes().await.map_err(|e| {
            ApiError::new(e.status(), multipart_error_name(e.status()), e.body_text())
        })?
    } else {
        Bytes::from_request(req, &store).await.map_err(|e| {
            ApiError::new(e.status(), multipart_error_name(e.status()), e.body_text())
        })?
    };
    let ds = blocking(&store, move |s| s.upload(&bytes, name.as_deref())).await?;
    Ok((StatusCode::CREATED, Json(DatasetSummary::of(&ds))).into_response())
}

fn multipart_error_name(status: StatusCode) -> &'static str {
    if status == StatusCode::PAYLOAD_TOO_LARGE {
        "SizeLimit"
    } else {
        "Malformed"
    }
}

async fn get_dataset(
    State(store): State<Arc<SessionStore>>,
    Path(id): Path<String>,
) -> ApiResult<Json<DatasetSummary>> {
    let ds = store.dataset(&id)?;
    Ok(Json(DatasetSummary::of(&ds)))
}

async fn create_view(
    State(store): State<Arc<SessionStore>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Response> {
    store.dataset(&id)?;
    let req: ViewRequest = parse_json(&body)?;
    let snap = blocking(&store, move |s| s.create_view(&id, &req)).await?;
    Ok(view_response(StatusCode::CREATED, &snap))
}

async fn get_view(
    State(store): State<Arc<SessionStore>>,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    Ok(view_response(StatusCode::OK, &store.view(&id)?))
}

async fn patch_view(
    State(store): State<Arc<SessionStore>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Response> {
    store.view(&id)?;
    let req: PatchRequest = parse_json(&body)?;
    let snap = blocking(&store, move |s| s.patch_view(&id, &req)).await?;
    Ok(view_response(StatusCode::OK, &snap))
}

async fn get_layout(
    State(store): State<Arc<SessionStore>>,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    let snap = store.view(&id)?;
    Ok((
        [(header::CONTENT_TYPE, "application/json")],
        snap.body.as_ref().clone(),
    )
        .into_response())
}

async fn get_svg(
    State(store): State<Arc<SessionStore>>,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    let svg = store.svg(&id)?;
    Ok(([(header::CONTENT_TYPE, "image/svg+xml")], svg).into_response())
}

fn parse_json<T: serde::de::DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| {
        ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "InvalidRequest",
            e.to_string(),
        )
    })
}
