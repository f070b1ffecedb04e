//! HTTP surface: `/api/v1` registry operations, the TRS subset under
//! `/ga4gh/trs/v2` and `/healthz`.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::header::{AUTHORIZATION, CONTENT_DISPOSITION, CONTENT_TYPE};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use componenthub_core::access::{AccessPolicy, Role, Visibility};
use componenthub_core::federation::ToolQuery;
use componenthub_core::rocrate::{read_zip, ZipLimits};
use componenthub_core::store::{Facet, RecordPatch, SearchQuery};
use componenthub_core::watch::MachineDescription;
use componenthub_core::{
    ComponentKind, Error, MetadataDocument, PersistentIdentifier, Principal, Result, SourceDescriptor, Timestamp,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::service::Service;

/// Upper bound on uploaded crates and provenance batches.
pub const MAX_UPLOAD_BYTES: usize = 512 * 1024 * 1024;

pub fn router(service: Arc<Service>) -> Router {
    let api = Router::new()
        .route("/records", post(register))
        .route("/records/{pid}", get(resolve).patch(update).delete(tombstone))
        .route("/records/{pid}/versions", get(versions))
        .route("/records/{pid}/crate", get(export_crate))
        .route("/records/{pid}/artifact", get(artifact))
        .route("/records/{pid}/runs", get(runs))
        .route("/records/{pid}/assess", post(assess))
        .route("/records/{pid}/embargo", post(embargo))
        .route("/records/{pid}/verify", post(verify))
        .route("/records/{pid}/viability", post(viability))
        .route("/search", get(search))
        .route("/crates", post(import_crate))
        .route("/provenance", post(provenance))
        .route("/machines", get(list_machines).post(register_machine))
        .route("/sync/{remote}", post(sync));
    let trs = Router::new()
        .route("/tools", get(trs_tools))
        .route("/tools/{id}/versions/{version_id}/ABSTRACT/descriptor", get(trs_descriptor))
        .route("/tools/{id}/versions/{version_id}/containerfile", get(trs_containerfile));
    Router::new()
        .route("/healthz", get(health))
        .nest("/api/v1", api)
        .nest("/ga4gh/trs/v2", trs)
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(service)
}

// ------------------------------------------------------------------ errors

/// A domain error plus whether the caller was anonymous, which decides
/// between 401 and 403 for authorization failures.
#[derive(Debug)]
pub struct ApiError {
    pub error: Error,
    pub anonymous: bool,
}

impl ApiError {
    fn new(error: Error, anonymous: bool) -> Self {
        ApiError { error, anonymous }
    }
}

/// The single HTTP status for each domain error.
pub fn status_for(error: &Error, anonymous: bool) -> StatusCode {
    match error {
        Error::InvalidPid(_) | Error::Packaging(_) | Error::MalformedQuery(_) => StatusCode::BAD_REQUEST,
        Error::NamespaceMismatch { .. }
        | Error::InvalidDocument(_)
        | Error::InvalidSource(_)
        | Error::InvalidCrate(_)
        | Error::PastTimestamp
        | Error::SourceUnreachable
        | Error::Workflow(_) => StatusCode::UNPROCESSABLE_ENTITY,
        Error::NotFound(_) | Error::VersionNotFound { .. } => StatusCode::NOT_FOUND,
        Error::Tombstoned(_) | Error::AlreadyTombstoned(_) | Error::SyncInProgress(_) => StatusCode::CONFLICT,
        Error::Gone { .. } => StatusCode::GONE,
        Error::Unauthorized(_) if anonymous => StatusCode::UNAUTHORIZED,
        Error::Unauthorized(_) => StatusCode::FORBIDDEN,
        Error::Auth(_) => StatusCode::UNAUTHORIZED,
        Error::CounterExhausted => StatusCode::INSUFFICIENT_STORAGE,
        Error::StorageFailure(_) | Error::SandboxUnavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
        Error::RemoteUnreachable(_) | Error::PartialFailure { .. } => StatusCode::BAD_GATEWAY,
    }
}

/// JSON error body. `reason` carries deny codes; `report`, `sync` and
/// `metadata` carry the structured payload of the matching errors.
pub fn error_body(error: &Error) -> Value {
    let mut body = json!({"error": error.code(), "message": error.to_string()});
    match error {
        Error::Unauthorized(reason) => body["reason"] = json!(reason.code()),
        Error::InvalidDocument(report) | Error::InvalidCrate(report) => body["report"] = json!(report),
        Error::PartialFailure { report, .. } => body["sync"] = json!(report),
        Error::Gone {
            metadata: Some(krate), ..
        } => body["metadata"] = krate.metadata_value(),
        _ => {}
    }
    body
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = status_for(&self.error, self.anonymous);
        if status.is_server_error() {
            tracing::warn!(code = self.error.code(), error = %self.error, "request failed");
        }
        (status, Json(error_body(&self.error))).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

/// Authenticate, then run `f` on the blocking pool.
async fn call<T, F>(svc: &Arc<Service>, headers: &HeaderMap, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Service, &Principal) -> Result<T> + Send + 'static,
{
    let auth = match headers.get(AUTHORIZATION).map(|v| v.to_str()) {
        None => None,
        Some(Ok(v)) => Some(v.to_string()),
        Some(Err(_)) => {
            return Err(ApiError::new(
                Error::Auth(componenthub_core::access::AuthError::TokenInvalid("header is not ASCII".into())),
                true,
            ))
        }
    };
    let svc = svc.clone();
    tokio::task::spawn_blocking(move || {
        let who = svc.authenticate(auth.as_deref()).map_err(|e| ApiError::new(e, true))?;
        f(&svc, &who).map_err(|e| ApiError::new(e, who.is_anonymous()))
    })
    .await
    .unwrap_or_else(|e| Err(ApiError::new(Error::StorageFailure(format!("worker failed: {e}")), true)))
}

fn pid(raw: &str) -> Result<PersistentIdentifier> {
    raw.parse()
}

// ----------------------------------------------------------------- records

/// Where a new record lives and who may see it. The enclave defaults to
/// the caller's first enclave.
#[derive(Clone, Debug, Default, Deserialize, Serialize)]
pub struct Placement {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enclave: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visibility: Option<Visibility>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embargo_until: Option<Timestamp>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub write_roles: Option<Role>,
}

impl Placement {
    fn policy(&self, who: &Principal) -> Result<AccessPolicy> {
        let enclave = self
            .enclave
            .clone()
            .or_else(|| who.enclaves.iter().next().cloned())
            .ok_or(Error::Unauthorized(componenthub_core::access::DenyReason::EnclaveMismatch))?;
        let mut policy = AccessPolicy::new(enclave, self.visibility.unwrap_or(Visibility::Public), who.subject.clone());
        policy.embargo_until = self.embargo_until;
        if let Some(r) = self.write_roles {
            policy.write_roles = r;
        }
        Ok(policy)
    }
}

#[derive(Deserialize, Serialize)]
pub struct RegisterBody {
    pub document: MetadataDocument,
    pub sources: Vec<SourceDescriptor>,
    #[serde(flatten)]
    pub placement: Placement,
}

async fn register(State(svc): State<Arc<Service>>, headers: HeaderMap, Json(body): Json<RegisterBody>) -> ApiResult<Response> {
    let record = call(&svc, &headers, move |svc, who| {
        let policy = body.placement.policy(who)?;
        svc.registry().register(body.document, body.sources, policy, who)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(record)).into_response())
}

async fn resolve(State(svc): State<Arc<Service>>, headers: HeaderMap, Path(raw): Path<String>) -> ApiResult<Response> {
    let view = call(&svc, &headers, move |svc, who| svc.registry().resolve(&pid(&raw)?, who)).await?;
    Ok(Json(view).into_response())
}

#[derive(Deserialize, Serialize, Default)]
pub struct PatchBody {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub document: Option<MetadataDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sources: Option<Vec<SourceDescriptor>>,
}

async fn update(
    State(svc): State<Arc<Service>>,
    headers: HeaderMap,
    Path(raw): Path<String>,
    Json(body): Json<PatchBody>,
) -> ApiResult<Response> {
    let record = call(&svc, &headers, move |svc, who| {
        let patch = RecordPatch {
            document: body.document,
            sources: body.sources,
        };
        svc.registry().update(&pid(&raw)?, patch, who)
    })
    .await?;
    Ok(Json(record).into_response())
}

#[derive(Deserialize, Serialize)]
pub struct TombstoneBody {
    pub reason: String,
}

async fn tombstone(
    State(svc): State<Arc<Service>>,
    headers: HeaderMap,
    Path(raw): Path<String>,
    Json(body): Json<TombstoneBody>,
) -> ApiResult<Response> {
    let note = call(&svc, &headers, move |svc, who| svc.registry().tombstone(&pid(&raw)?, &body.reason, who)).await?;
    Ok(Json(note).into_response())
}

async fn versions(State(svc): State<Arc<Service>>, headers: HeaderMap, Path(raw): Path<String>) -> ApiResult<Response> {
    let v = call(&svc, &headers, move |svc, who| svc.registry().list_versions(&pid(&raw)?, who)).await?;
    Ok(Json(v).into_response())
}

#[derive(Deserialize)]
struct VersionParam {
    version: Option<u32>,
}

fn crate_file_name(pid: &str) -> String {
    format!("{}.crate.zip", pid.replace(':', "_"))
}

async fn export_crate(
    State(svc): State<Arc<Service>>,
    headers: HeaderMap,
    Path(raw): Path<String>,
    Query(q): Query<VersionParam>,
) -> ApiResult<Response> {
    let name = crate_file_name(&raw);
    let bytes = call(&svc, &headers, move |svc, who| svc.registry().download_crate(&pid(&raw)?, who, q.version)).await?;
    Ok((
        [
            (CONTENT_TYPE, "application/zip".to_string()),
            (CONTENT_DISPOSITION, format!("attachment; filename=\"{name}\"")),
        ],
        bytes,
    )
        .into_response())
}

#[derive(Deserialize)]
struct LocatorParam {
    locator: String,
}

async fn artifact(
    State(svc): State<Arc<Service>>,
    headers: HeaderMap,
    Path(raw): Path<String>,
    Query(q): Query<LocatorParam>,
) -> ApiResult<Response> {
    let bytes = call(&svc, &headers, move |svc, who| svc.registry().fetch_artifact(&pid(&raw)?, &q.locator, who)).await?;
    Ok(([(CONTENT_TYPE, "application/octet-stream")], bytes).into_response())
}

async fn runs(State(svc): State<Arc<Service>>, headers: HeaderMap, Path(raw): Path<String>) -> ApiResult<Response> {
    let runs = call(&svc, &headers, move |svc, who| svc.registry().runs_for(&pid(&raw)?, who)).await?;
    Ok(Json(runs).into_response())
}

async fn assess(State(svc): State<Arc<Service>>, headers: HeaderMap, Path(raw): Path<String>) -> ApiResult<Response> {
    let report = call(&svc, &headers, move |svc, who| svc.registry().assess(&pid(&raw)?, who)).await?;
    Ok(Json(report).into_response())
}

#[derive(Deserialize, Serialize)]
pub struct EmbargoBody {
    pub until: Timestamp,
}

async fn embargo(
    State(svc): State<Arc<Service>>,
    headers: HeaderMap,
    Path(raw): Path<String>,
    Json(body): Json<EmbargoBody>,
) -> ApiResult<Response> {
    let policy = call(&svc, &headers, move |svc, who| svc.registry().set_embargo(&pid(&raw)?, body.until, who)).await?;
    Ok(Json(policy).into_response())
}

async fn verify(State(svc): State<Arc<Service>>, headers: HeaderMap, Path(raw): Path<String>) -> ApiResult<Response> {
    let result = call(&svc, &headers, move |svc, who| svc.verify(&pid(&raw)?, who)).await?;
    Ok(Json(result).into_response())
}

async fn viability(State(svc): State<Arc<Service>>, headers: HeaderMap, Path(raw): Path<String>) -> ApiResult<Response> {
    let result = call(&svc, &headers, move |svc, who| svc.check_viability(&pid(&raw)?, who)).await?;
    Ok(Json(result).into_response())
}

/// `q` plus one parameter per facet, `offset`, `limit` and
/// `include_tombstoned`.
pub fn search_query(params: &BTreeMap<String, String>) -> Result<SearchQuery> {
    let mut query = SearchQuery::default();
    for (key, value) in params {
        let number = || {
            value
                .parse::<usize>()
                .map_err(|_| Error::MalformedQuery(format!("{key} must be a non-negative integer")))
        };
        match key.as_str() {
            "q" => query.text = Some(value.clone()),
            "offset" => query.offset = number()?,
            "limit" => query.limit = number()?,
            "include_tombstoned" => {
                query.include_tombstoned = value
                    .parse()
                    .map_err(|_| Error::MalformedQuery("include_tombstoned must be true or false".into()))?
            }
            other => {
                let facet = Facet::parse(other).ok_or_else(|| Error::MalformedQuery(format!("unknown parameter {other:?}")))?;
                query.facets.insert(facet, value.clone());
            }
        }
    }
    query.check()?;
    Ok(query)
}

async fn search(
    State(svc): State<Arc<Service>>,
    headers: HeaderMap,
    Query(params): Query<BTreeMap<String, String>>,
) -> ApiResult<Response> {
    let page = call(&svc, &headers, move |svc, who| svc.registry().search(&search_query(&params)?, who)).await?;
    Ok(Json(page).into_response())
}

async fn import_crate(
    State(svc): State<Arc<Service>>,
    headers: HeaderMap,
    Query(placement): Query<Placement>,
    body: Bytes,
) -> ApiResult<Response> {
    let imported = call(&svc, &headers, move |svc, who| {
        let krate = read_zip(&body, ZipLimits::default())?;
        svc.registry().import_crate(&krate, placement.policy(who)?, who)
    })
    .await?;
    Ok((
        StatusCode::CREATED,
        Json(json!({"record": imported.record, "warnings": imported.warnings})),
    )
        .into_response())
}

async fn provenance(State(svc): State<Arc<Service>>, headers: HeaderMap, body: String) -> ApiResult<Response> {
    let summary = call(&svc, &headers, move |svc, who| svc.registry().ingest_provenance(&body, who)).await?;
    Ok(Json(summary).into_response())
}

async fn list_machines(State(svc): State<Arc<Service>>, headers: HeaderMap) -> ApiResult<Response> {
    let machines = call(&svc, &headers, |svc, who| Ok(svc.registry().list_machines(who))).await?;
    Ok(Json(machines).into_response())
}

async fn register_machine(
    State(svc): State<Arc<Service>>,
    headers: HeaderMap,
    Json(desc): Json<MachineDescription>,
) -> ApiResult<Response> {
    let pid = call(&svc, &headers, move |svc, who| svc.registry().register_machine(&desc, who)).await?;
    Ok((StatusCode::CREATED, Json(json!({"pid": pid})) ).into_response())
}

async fn sync(State(svc): State<Arc<Service>>, headers: HeaderMap, Path(remote): Path<String>) -> ApiResult<Response> {
    let report = call(&svc, &headers, move |svc, who| svc.sync(&remote, who)).await?;
    Ok(Json(report).into_response())
}

async fn health(State(svc): State<Arc<Service>>) -> Response {
    Json(svc.health()).into_response()
}

// --------------------------------------------------------------------- TRS

#[derive(Deserialize)]
struct TrsParams {
    #[serde(default)]
    offset: Option<usize>,
    #[serde(default)]
    limit: Option<usize>,
    #[serde(default, rename = "toolClass")]
    tool_class: Option<String>,
}

async fn trs_tools(State(svc): State<Arc<Service>>, headers: HeaderMap, Query(p): Query<TrsParams>) -> ApiResult<Response> {
    let page = call(&svc, &headers, move |svc, who| {
        let kind = p
            .tool_class
            .map(|raw| ComponentKind::parse_loose(&raw).ok_or_else(|| Error::MalformedQuery(format!("unknown toolClass {raw:?}"))))
            .transpose()?;
        let defaults = ToolQuery::default();
        let query = ToolQuery {
            kind,
            offset: p.offset.unwrap_or(defaults.offset),
            limit: p.limit.unwrap_or(defaults.limit),
        };
        svc.registry().trs_list_tools(&query, who)
    })
    .await?;
    Ok(Json(page).into_response())
}

async fn trs_descriptor(
    State(svc): State<Arc<Service>>,
    headers: HeaderMap,
    Path((id, version)): Path<(String, String)>,
) -> ApiResult<Response> {
    let d = call(&svc, &headers, move |svc, who| svc.registry().trs_get_tool_version(&id, &version, who)).await?;
    Ok(Json(d).into_response())
}

async fn trs_containerfile() -> Response {
    (
        StatusCode::NOT_IMPLEMENTED,
        Json(json!({"error": "not-implemented", "message": "container files are not served by this registry"})),
    )
        .into_response()
}
