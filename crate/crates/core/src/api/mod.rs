//! HTTP façade over a [`Store`] for the review UI and scripts.
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/api/run` | run id and manifest |
//! | GET | `/api/sets?status=&provenance=&kind=&registry=&minSize=&maxSize=&page=&pageSize=` | paginated summaries |
//! | GET | `/api/sets/{id}` | set with expanded member profiles and decisions |
//! | POST | `/api/sets/{id}/decision` | `{verdict, amendedMembers?, reviewer, note?, runId?}` |
//! | GET | `/api/stats` | composition tables and merge report |
//!
//! Errors are `{"error": {"code": ..., "message": ...}}` with code one of
//! `not_found`, `validation`, `conflict`, `stage_order` or `internal`.
//! Pages are numbered from 1 and hold 50 items unless `pageSize` says
//! otherwise.

use std::collections::{BTreeSet, HashMap};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::model::{ProfileRef, Provenance, RegistryId, SetStatus, Verdict};
use crate::store::{ReviewDecision, ReviewFilter, SetKind, SetView, Store, StoreError};

pub const DEFAULT_PAGE_SIZE: usize = 50;
pub const MAX_PAGE_SIZE: usize = 500;

pub type SharedStore = Arc<RwLock<Store>>;

#[derive(Debug, Clone, Default)]
pub struct ApiOptions {
    /// Permissive cross-origin policy.
    pub cors: bool,
    /// Directory served at `/` for everything outside `/api`.
    pub ui_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    NotFound,
    Validation,
    Conflict,
    StageOrder,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: ErrorCode,
    pub message: String,
}

impl ApiError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            code: ErrorCode::Validation,
            message: message.into(),
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::NOT_FOUND,
            code: ErrorCode::NotFound,
            message: message.into(),
        }
    }
}

#[derive(Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}

#[derive(Serialize, Deserialize)]
pub struct ErrorDetail {
    pub code: ErrorCode,
    pub message: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: ErrorDetail {
                code: self.code,
                message: self.message,
            },
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let (status, code) = match &e {
            StoreError::NotFound(_) => (StatusCode::NOT_FOUND, ErrorCode::NotFound),
            StoreError::Validation(_) => (StatusCode::BAD_REQUEST, ErrorCode::Validation),
            StoreError::Conflict(_) | StoreError::Integrity(_) | StoreError::Locked(_) => {
                (StatusCode::CONFLICT, ErrorCode::Conflict)
            }
            StoreError::StageOrder { .. } => (StatusCode::CONFLICT, ErrorCode::StageOrder),
            StoreError::Io { .. } | StoreError::Json { .. } => {
                log::error!("{e}");
                (StatusCode::INTERNAL_SERVER_ERROR, ErrorCode::Internal)
            }
        };
        Self {
            status,
            code,
            message: e.to_string(),
        }
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SetSummary {
    pub id: String,
    pub kind: SetKind,
    pub provenance: Provenance,
    pub status: SetStatus,
    pub size: usize,
    pub registries: BTreeSet<RegistryId>,
    pub members: Vec<ProfileRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
}

impl From<&SetView> for SetSummary {
    fn from(v: &SetView) -> Self {
        Self {
            id: v.set.id.clone(),
            kind: v.kind,
            provenance: v.set.provenance,
            status: v.set.status,
            size: v.set.len(),
            registries: v.set.registries(),
            members: v.set.members.iter().cloned().collect(),
            notes: v.set.notes.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SetPage {
    pub run_id: String,
    pub page: usize,
    pub page_size: usize,
    pub total: usize,
    pub items: Vec<SetSummary>,
}

/// Body of `POST /api/sets/{id}/decision`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct DecisionRequest {
    pub verdict: Verdict,
    #[serde(default)]
    pub amended_members: Option<BTreeSet<ProfileRef>>,
    pub reviewer: String,
    #[serde(default)]
    pub note: Option<String>,
    /// Run the client loaded; a mismatch with the served run is a conflict.
    #[serde(default)]
    pub run_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DecisionResponse {
    pub run_id: String,
    pub set: SetView,
}

fn parse_param<T: std::str::FromStr>(
    params: &HashMap<String, String>,
    key: &str,
) -> Result<Option<T>, ApiError>
where
    T::Err: std::fmt::Display,
{
    params
        .get(key)
        .filter(|v| !v.is_empty())
        .map(|v| {
            v.parse::<T>()
                .map_err(|e| ApiError::validation(format!("invalid {key} {v:?}: {e}")))
        })
        .transpose()
}

fn read(store: &SharedStore) -> std::sync::RwLockReadGuard<'_, Store> {
    store.read().unwrap_or_else(|p| p.into_inner())
}

async fn list_sets(
    State(store): State<SharedStore>,
    Query(params): Query<HashMap<String, String>>,
) -> ApiResult<SetPage> {
    let filter = ReviewFilter {
        status: parse_param(&params, "status")?,
        provenance: parse_param(&params, "provenance")?,
        kind: parse_param(&params, "kind")?,
        registry: parse_param(&params, "registry")?,
        min_size: parse_param(&params, "minSize")?,
        max_size: parse_param(&params, "maxSize")?,
    };
    let page: usize = parse_param(&params, "page")?.unwrap_or(1);
    let page_size: usize = parse_param(&params, "pageSize")?.unwrap_or(DEFAULT_PAGE_SIZE);
    if page == 0 {
        return Err(ApiError::validation("page numbers start at 1"));
    }
    if !(1..=MAX_PAGE_SIZE).contains(&page_size) {
        return Err(ApiError::validation(format!(
            "pageSize must be between 1 and {MAX_PAGE_SIZE}"
        )));
    }

    let store = read(&store);
    let matching = store.query(&filter);
    let items = matching
        .iter()
        .skip((page - 1).saturating_mul(page_size))
        .take(page_size)
        .map(|v| SetSummary::from(*v))
        .collect();
    Ok(Json(SetPage {
        run_id: store.run_id().to_string(),
        page,
        page_size,
        total: matching.len(),
        items,
    }))
}

async fn get_set(
    State(store): State<SharedStore>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let store = read(&store);
    let detail = store.detail(&id)?;
    let mut body =
        serde_json::to_value(&detail).map_err(|e| ApiError::validation(e.to_string()))?;
    body["runId"] = store.run_id().into();
    Ok(Json(body).into_response())
}

async fn post_decision(
    State(store): State<SharedStore>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<DecisionResponse> {
    let req: DecisionRequest = serde_json::from_slice(&body)
        .map_err(|e| ApiError::validation(format!("invalid decision body: {e}")))?;
    let decision = ReviewDecision {
        set_id: id,
        verdict: req.verdict,
        amended_members: req.amended_members,
        reviewer: req.reviewer,
        note: req.note,
        timestamp: String::new(),
        run_id: req.run_id,
    };
    let mut store = store.write().unwrap_or_else(|p| p.into_inner());
    if store.get(&decision.set_id).is_none() {
        return Err(ApiError::not_found(format!(
            "set {} not found",
            decision.set_id
        )));
    }
    let set = store.record_decision(decision)?;
    Ok(Json(DecisionResponse {
        run_id: store.run_id().to_string(),
        set,
    }))
}

async fn stats(State(store): State<SharedStore>) -> Result<Response, ApiError> {
    let stats = read(&store).stats()?;
    Ok(Json(stats).into_response())
}

async fn run_info(State(store): State<SharedStore>) -> Result<Response, ApiError> {
    let store = read(&store);
    let body = serde_json::json!({
        "runId": store.run_id(),
        "merged": store.is_merged(),
        "profiles": store.profile_count(),
        "sets": store.sets().len(),
        "review": store.status_counts(),
        "manifest": store.run().manifest(),
    });
    Ok(Json(body).into_response())
}

async fn not_found() -> ApiError {
    ApiError::not_found("no such endpoint")
}

pub fn router(store: SharedStore, options: &ApiOptions) -> Router {
    let api = Router::new()
        .route("/api/run", get(run_info))
        .route("/api/sets", get(list_sets))
        .route("/api/sets/{id}", get(get_set))
        .route("/api/sets/{id}/decision", post(post_decision))
        .route("/api/stats", get(stats))
        .route("/api", get(not_found))
        .route("/api/{*rest}", get(not_found).post(not_found));
    let mut app = match &options.ui_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api.fallback(not_found),
    }
    .with_state(store);
    if options.cors {
        app = app.layer(tower_http::cors::CorsLayer::permissive());
    }
    app
}

/// Serves until interrupted.
pub async fn serve(
    store: SharedStore,
    addr: SocketAddr,
    options: ApiOptions,
) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(store, &options))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
