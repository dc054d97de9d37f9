//! JSON-over-HTTP service for the engine.
//!
//! Every success body is `{"snapshot_version": n, "data": ...}`. Every error
//! body is `{"error": {"kind", "message", "field"?}}` with a 4xx status for
//! bad requests and unknown ids and a 5xx status for internal failures.
//! Engine calls run on the blocking pool so a rebuild never stalls reads.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use itoo_core::engine::{Engine, UploadRequest, Versioned};
use itoo_core::error::Error;
use itoo_core::model::{InteractionKind, ItemEmbeddings, ItemId, ItemMeta, OotdId, SuperCategory, UserId, UserProfile};

pub const DEFAULT_FEED_K: usize = 10;
pub const DEFAULT_SIMILAR_K: usize = 10;
pub const DEFAULT_LEADERS_K: usize = 5;
const MAX_K: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorDetail {
    pub kind: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

/// An error response with its HTTP status.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub detail: ErrorDetail,
}

impl ApiError {
    fn new(status: StatusCode, kind: &str, message: impl Into<String>, field: Option<&str>) -> Self {
        Self { status, detail: ErrorDetail { kind: kind.into(), message: message.into(), field: field.map(str::to_string) } }
    }

    fn bad_request(kind: &str, message: impl Into<String>, field: Option<&str>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, kind, message, field)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message, None)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        let (status, kind, field) = match &e {
            Error::UnknownUser(_) => (StatusCode::NOT_FOUND, "unknown_user", None),
            Error::UnknownItem(_) => (StatusCode::NOT_FOUND, "unknown_item", None),
            Error::UnknownOotd(_) => (StatusCode::NOT_FOUND, "unknown_ootd", None),
            Error::UnknownSubCategory(_) => (StatusCode::UNPROCESSABLE_ENTITY, "unknown_sub_category", Some("sub_category")),
            Error::DimensionMismatch { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "dimension_mismatch", None),
            Error::ZeroVectors(_) => (StatusCode::UNPROCESSABLE_ENTITY, "zero_vector", None),
            Error::Schema(_) => (StatusCode::UNPROCESSABLE_ENTITY, "schema", None),
            Error::Contract(_) => (StatusCode::UNPROCESSABLE_ENTITY, "contract", None),
            Error::ColdStart(_) => (StatusCode::UNPROCESSABLE_ENTITY, "cold_start", None),
            Error::FutureEvents { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "future_events", None),
            Error::Parse { .. } | Error::Json(_) => (StatusCode::BAD_REQUEST, "malformed_request", None),
            Error::Config { .. } => (StatusCode::BAD_REQUEST, "config", None),
            Error::Cycle(_) => (StatusCode::UNPROCESSABLE_ENTITY, "cycle", None),
            Error::MissingMean(_) | Error::Sampling(_) | Error::Diverged { .. } | Error::Io(_) => {
                (StatusCode::INTERNAL_SERVER_ERROR, "internal", None)
            }
        };
        Self::new(status, kind, message, field)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { error: self.detail })).into_response()
    }
}

type ApiResult<T> = Result<Json<Versioned<T>>, ApiError>;

/// Parses a JSON body, naming the offending field when serde reports one.
fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    if body.is_empty() {
        return Err(ApiError::bad_request("malformed_request", "request body is empty; expected a JSON object", None));
    }
    serde_json::from_slice(body).map_err(|e| {
        let message = e.to_string();
        let field = named_field(&message);
        ApiError::bad_request("malformed_request", message, field.as_deref())
    })
}

/// The field named by a serde "missing/unknown/duplicate field `x`" message.
fn named_field(message: &str) -> Option<String> {
    ["missing field `", "unknown field `", "duplicate field `"].iter().find_map(|prefix| {
        let start = message.find(prefix)? + prefix.len();
        let len = message[start..].find('`')?;
        Some(message[start..start + len].to_string())
    })
}

type Params = BTreeMap<String, String>;

fn param<T: std::str::FromStr>(params: &Params, name: &str) -> Result<Option<T>, ApiError>
where
    T::Err: std::fmt::Display,
{
    params
        .get(name)
        .map(|raw| {
            raw.parse::<T>()
                .map_err(|e| ApiError::bad_request("malformed_request", format!("query parameter '{name}': {e}"), Some(name)))
        })
        .transpose()
}

fn k_param(params: &Params, default: usize) -> Result<usize, ApiError> {
    let k = param::<usize>(params, "k")?.unwrap_or(default);
    if k == 0 || k > MAX_K {
        return Err(ApiError::bad_request("malformed_request", format!("k must be in 1..={MAX_K}, got {k}"), Some("k")));
    }
    Ok(k)
}

fn path_id<T: std::str::FromStr>(raw: &str, name: &str) -> Result<T, ApiError>
where
    T::Err: std::fmt::Display,
{
    raw.parse().map_err(|e| ApiError::bad_request("malformed_request", format!("path segment '{name}': {e}"), Some(name)))
}

async fn blocking<T, F>(engine: &Arc<Engine>, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Engine) -> itoo_core::error::Result<Versioned<T>> + Send + 'static,
{
    let engine = engine.clone();
    match tokio::task::spawn_blocking(move || f(&engine)).await {
        Ok(Ok(v)) => Ok(Json(v)),
        Ok(Err(e)) => Err(e.into()),
        Err(join) => Err(ApiError::internal(format!("request handler failed: {join}"))),
    }
}

/// Body of `POST /items`: the item metadata fields plus `embeddings`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewItem {
    #[serde(flatten)]
    pub meta: ItemMeta,
    pub embeddings: ItemEmbeddings,
}

/// Body of `POST /interactions`. `target` is an OOTD id for views and likes
/// and a user id for follows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewInteraction {
    pub user_id: UserId,
    pub kind: InteractionKind,
    pub target: String,
}

/// Body of `POST /search`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchRequest {
    pub super_category: SuperCategory,
    pub vector: Vec<f32>,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub ef: Option<usize>,
}

/// Body of `POST /rebuild`; an empty body means a partial rebuild.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RebuildRequest {
    #[serde(default)]
    pub full: bool,
}

pub fn router(engine: Arc<Engine>) -> Router {
    Router::new()
        .route("/status", get(status))
        .route("/items", post(add_item))
        .route("/items/{item_id}/similar", get(similar_items))
        .route("/search", post(search))
        .route("/users", post(add_user))
        .route("/users/{user_id}/feed", get(feed))
        .route("/users/{user_id}/leaders", get(leaders))
        .route("/ootds", post(upload_ootd))
        .route("/ootds/{ootd_id}", get(ootd_detail))
        .route("/ootds/{ootd_id}/similar", get(similar_ootds))
        .route("/interactions", post(record_interaction))
        .route("/rebuild", post(rebuild))
        .fallback(not_found)
        .with_state(engine)
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "no_route", "no such endpoint", None)
}

async fn status(State(engine): State<Arc<Engine>>) -> ApiResult<itoo_core::engine::EngineStatus> {
    blocking(&engine, |e| Ok(e.status())).await
}

async fn add_item(State(engine): State<Arc<Engine>>, body: Bytes) -> ApiResult<ItemId> {
    let req: NewItem = parse_body(&body)?;
    blocking(&engine, move |e| e.add_item(req.meta, req.embeddings)).await
}

async fn add_user(State(engine): State<Arc<Engine>>, body: Bytes) -> ApiResult<UserId> {
    let profile: UserProfile = parse_body(&body)?;
    blocking(&engine, move |e| e.add_user(profile)).await
}

async fn upload_ootd(State(engine): State<Arc<Engine>>, body: Bytes) -> ApiResult<itoo_core::engine::UploadReport> {
    let req: UploadRequest = parse_body(&body)?;
    blocking(&engine, move |e| e.upload_ootd(&req)).await
}

async fn record_interaction(
    State(engine): State<Arc<Engine>>,
    body: Bytes,
) -> ApiResult<itoo_core::model::InteractionEvent> {
    let req: NewInteraction = parse_body(&body)?;
    if req.kind == InteractionKind::Upload {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "contract",
            "uploads are recorded by POST /ootds",
            Some("kind"),
        ));
    }
    blocking(&engine, move |e| e.record_interaction(&req.user_id, req.kind, &req.target)).await
}

async fn feed(
    State(engine): State<Arc<Engine>>,
    Path(user): Path<String>,
    Query(params): Query<Params>,
) -> ApiResult<Vec<itoo_core::engine::FeedCard>> {
    let k = k_param(&params, DEFAULT_FEED_K)?;
    blocking(&engine, move |e| e.feed(&UserId::new(user), k)).await
}

async fn leaders(
    State(engine): State<Arc<Engine>>,
    Path(user): Path<String>,
    Query(params): Query<Params>,
) -> ApiResult<Vec<itoo_core::engine::LeaderCard>> {
    let k = k_param(&params, DEFAULT_LEADERS_K)?;
    blocking(&engine, move |e| e.leaders(&UserId::new(user), k)).await
}

async fn similar_items(
    State(engine): State<Arc<Engine>>,
    Path(item): Path<String>,
    Query(params): Query<Params>,
) -> ApiResult<Vec<itoo_core::engine::ItemHit>> {
    let item = ItemId(path_id(&item, "item_id")?);
    let k = k_param(&params, DEFAULT_SIMILAR_K)?;
    let ef = param::<usize>(&params, "ef")?;
    blocking(&engine, move |e| e.similar_items(item, k, ef)).await
}

async fn search(State(engine): State<Arc<Engine>>, body: Bytes) -> ApiResult<Vec<itoo_core::engine::ItemHit>> {
    let req: SearchRequest = parse_body(&body)?;
    let k = req.k.unwrap_or(DEFAULT_SIMILAR_K);
    if k == 0 || k > MAX_K {
        return Err(ApiError::bad_request("malformed_request", format!("k must be in 1..={MAX_K}, got {k}"), Some("k")));
    }
    blocking(&engine, move |e| e.search(req.super_category, &req.vector, k, req.ef)).await
}

async fn ootd_detail(
    State(engine): State<Arc<Engine>>,
    Path(ootd): Path<String>,
) -> ApiResult<itoo_core::engine::OotdDetail> {
    let ootd = OotdId(path_id(&ootd, "ootd_id")?);
    blocking(&engine, move |e| e.ootd_detail(ootd)).await
}

async fn similar_ootds(
    State(engine): State<Arc<Engine>>,
    Path(ootd): Path<String>,
    Query(params): Query<Params>,
) -> ApiResult<Vec<itoo_core::engine::FeedCard>> {
    let ootd = OotdId(path_id(&ootd, "ootd_id")?);
    let k = k_param(&params, DEFAULT_SIMILAR_K)?;
    blocking(&engine, move |e| e.similar_ootds(ootd, k)).await
}

async fn rebuild(State(engine): State<Arc<Engine>>, body: Bytes) -> ApiResult<itoo_core::engine::RebuildReport> {
    let req: RebuildRequest = if body.is_empty() { RebuildRequest::default() } else { parse_body(&body)? };
    blocking(&engine, move |e| e.rebuild(req.full)).await
}

/// Serves the API until ctrl-c.
pub async fn serve(engine: Arc<Engine>, addr: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(engine))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
