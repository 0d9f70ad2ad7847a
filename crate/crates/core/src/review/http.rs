//! JSON over HTTP for the review queue.
//!
//! ```text
//! GET  /review/items?status=&class=&cursor=&limit=
//! GET  /review/items/{id}
//! GET  /review/items/{id}/images/{slot}.png
//! POST /review/items/{id}/resolution   {"resolution": "...", "note": "..."}
//! ```
//!
//! Errors are `{"error": {"code": "...", "message": "..."}}` with codes
//! `not_found`, `conflict`, `bad_request`, `unauthorized` and `internal`.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::class::OrganClass;
use crate::verdict::Resolution;

use super::store::{ImageSlot, ListQuery, ReviewItem, ReviewStatus, ReviewStore};
use super::ReviewError;

pub const REVIEWER_HEADER: &str = "x-reviewer-id";

pub struct ReviewService {
    pub store: Arc<ReviewStore>,
    /// When set, every request needs `Authorization: Bearer <token>`.
    pub token: Option<String>,
}

#[derive(Serialize)]
struct ItemView {
    #[serde(flatten)]
    item: ReviewItem,
    image_urls: BTreeMap<&'static str, String>,
}

impl From<ReviewItem> for ItemView {
    fn from(item: ReviewItem) -> Self {
        let image_urls = item
            .images
            .iter()
            .map(|s| {
                (
                    s.as_str(),
                    format!("/review/items/{}/images/{}.png", item.id, s.as_str()),
                )
            })
            .collect();
        ItemView { item, image_urls }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ResolutionBody {
    resolution: Resolution,
    #[serde(default)]
    note: String,
}

pub const MAX_NOTE_CHARS: usize = 4000;

struct ApiError(StatusCode, &'static str, String, Option<Box<ReviewItem>>);

impl ApiError {
    fn bad_request(msg: impl Into<String>) -> Self {
        ApiError(StatusCode::BAD_REQUEST, "bad_request", msg.into(), None)
    }
}

impl From<ReviewError> for ApiError {
    fn from(e: ReviewError) -> Self {
        let msg = e.to_string();
        match e {
            ReviewError::NotFound(_) => ApiError(StatusCode::NOT_FOUND, "not_found", msg, None),
            ReviewError::Conflict(item) => {
                ApiError(StatusCode::CONFLICT, "conflict", msg, Some(item))
            }
            ReviewError::BadRequest(_) => ApiError::bad_request(msg),
            ReviewError::Io(_) => {
                ApiError(StatusCode::INTERNAL_SERVER_ERROR, "internal", msg, None)
            }
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({"error": {"code": self.1, "message": self.2}});
        if let Some(item) = self.3 {
            body["item"] = serde_json::to_value(ItemView::from(*item)).unwrap_or_default();
        }
        (self.0, Json(body)).into_response()
    }
}

type Shared = Arc<ReviewService>;

fn authorize(svc: &ReviewService, headers: &HeaderMap) -> Result<(), ApiError> {
    let Some(token) = &svc.token else {
        return Ok(());
    };
    let given = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    if given == Some(token.as_str()) {
        Ok(())
    } else {
        Err(ApiError(
            StatusCode::UNAUTHORIZED,
            "unauthorized",
            "missing or wrong bearer token".into(),
            None,
        ))
    }
}

fn parse_id(raw: &str) -> Result<u64, ApiError> {
    raw.parse()
        .map_err(|_| ApiError::bad_request(format!("invalid item id {raw:?}")))
}

fn parse_query(params: &HashMap<String, String>) -> Result<ListQuery, ApiError> {
    let mut q = ListQuery::default();
    for (key, value) in params {
        match key.as_str() {
            "status" => {
                q.status =
                    Some(ReviewStatus::parse(value).ok_or_else(|| {
                        ApiError::bad_request(format!("unknown status {value:?}"))
                    })?)
            }
            "class" => {
                q.class = Some(
                    value
                        .parse::<OrganClass>()
                        .map_err(|e| ApiError::bad_request(e.to_string()))?,
                )
            }
            "cursor" => q.cursor = Some(parse_id(value)?),
            "limit" => {
                q.limit = value
                    .parse()
                    .map_err(|_| ApiError::bad_request(format!("invalid limit {value:?}")))?
            }
            other => {
                return Err(ApiError::bad_request(format!(
                    "unknown query parameter {other:?}"
                )))
            }
        }
    }
    Ok(q)
}

async fn list_items(
    State(svc): State<Shared>,
    headers: HeaderMap,
    Query(params): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    authorize(&svc, &headers)?;
    let page = svc.store.list(&parse_query(&params)?)?;
    let items: Vec<ItemView> = page.items.into_iter().map(ItemView::from).collect();
    Ok(Json(json!({"items": items, "next_cursor": page.next_cursor})).into_response())
}

async fn get_item(
    State(svc): State<Shared>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    authorize(&svc, &headers)?;
    let id = parse_id(&id)?;
    let item = svc
        .store
        .get(id)
        .ok_or_else(|| ReviewError::NotFound(format!("review item {id}")))?;
    Ok(Json(ItemView::from(item)).into_response())
}

async fn get_image(
    State(svc): State<Shared>,
    headers: HeaderMap,
    Path((id, file)): Path<(String, String)>,
) -> Result<Response, ApiError> {
    authorize(&svc, &headers)?;
    let id = parse_id(&id)?;
    let slot = file
        .strip_suffix(".png")
        .and_then(ImageSlot::parse)
        .ok_or_else(|| ReviewError::NotFound(format!("image {file}")))?;
    let png = svc.store.image(id, slot)?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

async fn post_resolution(
    State(svc): State<Shared>,
    headers: HeaderMap,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    authorize(&svc, &headers)?;
    let id = parse_id(&id)?;
    let body: ResolutionBody =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(e.to_string()))?;
    if body.note.chars().count() > MAX_NOTE_CHARS {
        return Err(ApiError::bad_request(format!(
            "note longer than {MAX_NOTE_CHARS} characters"
        )));
    }
    let reviewer = headers.get(REVIEWER_HEADER).and_then(|v| v.to_str().ok());
    let store = svc.store.clone();
    let note = body.note;
    let reviewer = reviewer.map(str::to_string);
    let item = tokio::task::spawn_blocking(move || {
        store.submit_review(id, body.resolution, &note, reviewer.as_deref())
    })
    .await
    .map_err(|e| {
        ApiError(
            StatusCode::INTERNAL_SERVER_ERROR,
            "internal",
            e.to_string(),
            None,
        )
    })??;
    Ok(Json(ItemView::from(item)).into_response())
}

pub fn router(service: ReviewService) -> Router {
    Router::new()
        .route("/review/items", get(list_items))
        .route("/review/items/{id}", get(get_item))
        .route("/review/items/{id}/images/{file}", get(get_image))
        .route("/review/items/{id}/resolution", post(post_resolution))
        .with_state(Arc::new(service))
}

/// Serve until ctrl-c.
pub async fn serve(addr: SocketAddr, service: ReviewService) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("review service listening on {}", listener.local_addr()?);
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
