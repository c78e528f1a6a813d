//! HTTP/JSON surface of the gateway.
//!
//! Every `/api` route requires an `X-Api-Key` header naming a registered
//! user. Errors are JSON bodies `{"error": code, "message": text}`, plus a
//! `span` for SQL errors. A governance rejection of a query is not an error:
//! it comes back as `200` with `"status": "rejected"`.

use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::oneshot;

use super::{Decision, Gateway, GatewayError, RequestStatus};
use crate::audit::{AuditEvent, AuditFilter};
use crate::catalog::{ProductStatus, User};
use crate::clock::parse_timestamp;
use crate::governance::PurposeCategory;

pub const API_KEY_HEADER: &str = "x-api-key";

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: json!({ "error": code, "message": message.into() }),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<GatewayError> for ApiError {
    fn from(err: GatewayError) -> Self {
        let message = err.to_string();
        let (status, code) = match &err {
            GatewayError::NotFound { .. } => (StatusCode::NOT_FOUND, "not_found"),
            GatewayError::Conflict { .. } => (StatusCode::CONFLICT, "conflict"),
            GatewayError::ProductInactive(_) => (StatusCode::CONFLICT, "product_inactive"),
            GatewayError::Forbidden(_) => (StatusCode::FORBIDDEN, "forbidden"),
            GatewayError::InvalidState { .. } => (StatusCode::CONFLICT, "invalid_state"),
            GatewayError::AccessDenied { .. } => (StatusCode::FORBIDDEN, "access_denied"),
            GatewayError::InvalidPurpose(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_purpose"),
            GatewayError::BadRequest(_) => (StatusCode::BAD_REQUEST, "bad_request"),
            GatewayError::Parse(_) => (StatusCode::UNPROCESSABLE_ENTITY, "parse_error"),
            GatewayError::Violation(v) => (StatusCode::UNPROCESSABLE_ENTITY, super::violation_code(v)),
            GatewayError::Audit(_) | GatewayError::Exec(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        let mut api = ApiError::new(status, code, message);
        match &err {
            GatewayError::Parse(p) => {
                api.body["span"] = json!({ "line": p.line, "column": p.column });
                api.body["expected"] = json!(p.expected);
                api.body["found"] = json!(p.found);
            }
            GatewayError::Violation(v) => api.body["span"] = json!(v.span()),
            GatewayError::Conflict { existing } => api.body["existing_request_id"] = json!(existing),
            _ => {}
        }
        api
    }
}

type ApiResult = Result<Response, ApiError>;

fn authenticate(gateway: &Gateway, headers: &HeaderMap) -> Result<User, ApiError> {
    let key = headers
        .get(API_KEY_HEADER)
        .and_then(|v| v.to_str().ok())
        .ok_or_else(|| ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing X-Api-Key header"))?;
    gateway
        .authenticate(key)
        .cloned()
        .ok_or_else(|| ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "unknown API key"))
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

/// Runs gateway work off the async executor; the writer mutex and the
/// audit file are blocking.
async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f).await.unwrap_or_else(|e| {
        Err(ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "internal",
            format!("handler failed: {e}"),
        ))
    })
}

fn ok<T: Serialize>(status: StatusCode, value: &T) -> ApiResult {
    Ok((status, Json(value)).into_response())
}

pub fn router(gateway: Arc<Gateway>) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/dataproducts", get(search))
        .route("/api/dataproducts/{id}", get(product))
        .route("/api/accessrequests", post(create_request).get(list_requests))
        .route("/api/accessrequests/{id}", get(show_request))
        .route("/api/accessrequests/{id}/decision", post(decide))
        .route("/api/query", post(query))
        .route("/api/audit", get(audit))
        .route("/api/audit/verify", get(verify_audit))
        .with_state(gateway)
}

async fn health(State(gw): State<Arc<Gateway>>, headers: HeaderMap) -> ApiResult {
    authenticate(&gw, &headers)?;
    ok(StatusCode::OK, &json!({ "status": "ok" }))
}

#[derive(Deserialize)]
struct SearchParams {
    q: Option<String>,
    status: Option<String>,
}

async fn search(State(gw): State<Arc<Gateway>>, headers: HeaderMap, Query(params): Query<SearchParams>) -> ApiResult {
    authenticate(&gw, &headers)?;
    let status = match params.status.as_deref() {
        None => None,
        Some(s) => Some(ProductStatus::parse(s).ok_or_else(|| ApiError::bad_request(format!("unknown status {s:?}")))?),
    };
    let found = gw
        .search(params.q.as_deref(), status)
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    ok(StatusCode::OK, &found)
}

async fn product(State(gw): State<Arc<Gateway>>, headers: HeaderMap, Path(id): Path<String>) -> ApiResult {
    let caller = authenticate(&gw, &headers)?;
    let detail = blocking(move || Ok(gw.product_detail(&caller, &id)?)).await?;
    ok(StatusCode::OK, &detail)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateRequestBody {
    product_id: String,
    purpose_text: String,
    purpose_category: Option<String>,
}

async fn create_request(State(gw): State<Arc<Gateway>>, headers: HeaderMap, body: Bytes) -> ApiResult {
    let caller = authenticate(&gw, &headers)?;
    let body: CreateRequestBody = parse_body(&body)?;
    let category = match body.purpose_category.as_deref() {
        None => None,
        Some(c) => Some(PurposeCategory::parse(c).map_err(GatewayError::from)?),
    };
    let request =
        blocking(move || Ok(gw.create_access_request(&caller, &body.product_id, &body.purpose_text, category)?))
            .await?;
    ok(StatusCode::CREATED, &request)
}

#[derive(Deserialize)]
struct ListParams {
    status: Option<String>,
}

async fn list_requests(
    State(gw): State<Arc<Gateway>>,
    headers: HeaderMap,
    Query(params): Query<ListParams>,
) -> ApiResult {
    let caller = authenticate(&gw, &headers)?;
    let status = match params.status.as_deref() {
        None => None,
        Some(s) => Some(RequestStatus::parse(s).ok_or_else(|| ApiError::bad_request(format!("unknown status {s:?}")))?),
    };
    let list = blocking(move || Ok(gw.list_requests(&caller, status))).await?;
    ok(StatusCode::OK, &list)
}

async fn show_request(State(gw): State<Arc<Gateway>>, headers: HeaderMap, Path(id): Path<String>) -> ApiResult {
    let caller = authenticate(&gw, &headers)?;
    let request = blocking(move || {
        gw.list_requests(&caller, None)
            .into_iter()
            .find(|r| r.id == id)
            .ok_or_else(|| {
                GatewayError::NotFound {
                    entity: "access request",
                    id,
                }
                .into()
            })
    })
    .await?;
    ok(StatusCode::OK, &request)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DecisionBody {
    decision: Decision,
    note: Option<String>,
}

async fn decide(State(gw): State<Arc<Gateway>>, headers: HeaderMap, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let caller = authenticate(&gw, &headers)?;
    let body: DecisionBody = parse_body(&body)?;
    let request = blocking(move || Ok(gw.decide_request(&caller, &id, body.decision, body.note.as_deref())?)).await?;
    ok(StatusCode::OK, &request)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QueryBody {
    product_id: String,
    sql: String,
    purpose_text: Option<String>,
}

async fn query(State(gw): State<Arc<Gateway>>, headers: HeaderMap, body: Bytes) -> ApiResult {
    let caller = authenticate(&gw, &headers)?;
    let body: QueryBody = parse_body(&body)?;
    let outcome =
        blocking(move || Ok(gw.run_query(&caller, &body.product_id, &body.sql, body.purpose_text.as_deref())?)).await?;
    ok(StatusCode::OK, &outcome)
}

#[derive(Deserialize)]
struct AuditParams {
    actor: Option<String>,
    product_id: Option<String>,
    event: Option<String>,
    since: Option<String>,
}

async fn audit(State(gw): State<Arc<Gateway>>, headers: HeaderMap, Query(params): Query<AuditParams>) -> ApiResult {
    authenticate(&gw, &headers)?;
    let event = match params.event.as_deref() {
        None => None,
        Some(e) => Some(AuditEvent::parse(e).ok_or_else(|| ApiError::bad_request(format!("unknown event {e:?}")))?),
    };
    let since = match params.since.as_deref() {
        None => None,
        Some(s) => Some(
            parse_timestamp(s)
                .ok_or_else(|| ApiError::bad_request(format!("since must be an ISO-8601 timestamp, got {s:?}")))?,
        ),
    };
    let filter = AuditFilter {
        actor: params.actor,
        product_id: params.product_id,
        event,
        since,
    };
    let records = blocking(move || Ok(gw.audit(&filter))).await?;
    ok(StatusCode::OK, &records)
}

async fn verify_audit(State(gw): State<Arc<Gateway>>, headers: HeaderMap) -> ApiResult {
    authenticate(&gw, &headers)?;
    let status = blocking(move || {
        gw.verify_audit()
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))
    })
    .await?;
    ok(StatusCode::OK, &status)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    gateway: Arc<Gateway>,
    listener: tokio::net::TcpListener,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(gateway))
        .with_graceful_shutdown(shutdown)
        .await
}

/// A server on its own thread and runtime; stops when dropped.
pub struct BackgroundServer {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<std::io::Result<()>>>,
}

impl BackgroundServer {
    /// Binds `addr` (port 0 picks a free port) and starts serving.
    pub fn start(gateway: Arc<Gateway>, addr: SocketAddr) -> std::io::Result<Self> {
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        let listener = runtime.block_on(tokio::net::TcpListener::bind(addr))?;
        let addr = listener.local_addr()?;
        let (tx, rx) = oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            runtime.block_on(serve(gateway, listener, async {
                let _ = rx.await;
            }))
        });
        Ok(Self {
            addr,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for BackgroundServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(thread) = self.thread.take() {
            let _ = thread.join();
        }
    }
}
