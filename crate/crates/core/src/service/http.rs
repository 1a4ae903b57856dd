// SPDX-License-Identifier: Apache-2.0

//! JSON over HTTP. Writers take the project's write lock, so mutations are
//! applied in a single total order equal to the log order; readers share
//! the read lock and see whole mutations only.

use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post, put};
use axum::{Json, Router};
use parking_lot::RwLock;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::project::{AnnotateRequest, ExportFormat, NewCluster, NewInstance, NewRegion, Project, RecommendRequest};
use super::ServiceError;
use crate::formats::{parse_per_image, SplitAssignment};
use crate::model::{AttributeValue, Instance};

pub type SharedProject = Arc<RwLock<Project>>;

struct ApiError(ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let e = self.0;
        let status = match &e {
            ServiceError::UnknownImage(_) => StatusCode::NOT_FOUND,
            ServiceError::Invalid(crate::model::Violation::UnknownEntity { .. }) => StatusCode::NOT_FOUND,
            ServiceError::Invalid(crate::model::Violation::DuplicateId { .. })
            | ServiceError::Invalid(crate::model::Violation::DuplicateTriple { .. }) => StatusCode::CONFLICT,
            ServiceError::ReadOnly => StatusCode::FORBIDDEN,
            _ if e.is_client_error() => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let mut body = json!({ "code": e.code(), "message": e.to_string() });
        match &e {
            ServiceError::Invalid(v) => body["details"] = json!(v),
            ServiceError::Format(crate::formats::FormatError::Validation(vs)) => body["details"] = json!(vs),
            _ => {}
        }
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn body<T: DeserializeOwned>(bytes: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(bytes).map_err(|e| ApiError(ServiceError::BadRequest(e.to_string())))
}

#[derive(Serialize)]
struct Created {
    id: String,
}

#[derive(Serialize)]
struct Done {
    ok: bool,
}

const DONE: Done = Done { ok: true };

#[derive(Deserialize)]
struct ExportRequest {
    format: ExportFormat,
    #[serde(default)]
    split_assignment: SplitAssignment,
}

#[derive(Deserialize)]
struct AttributesRequest {
    attributes: BTreeSet<AttributeValue>,
}

/// The full API router over a shared project.
pub fn router(project: SharedProject) -> Router {
    Router::new()
        .route("/api/config", get(get_config))
        .route("/api/images", get(list_images))
        .route("/api/images/{id}", get(get_image))
        .route("/api/images/{id}/bitmap", get(get_bitmap))
        .route("/api/images/{id}/annotation", get(get_annotation).put(put_annotation))
        .route("/api/images/{id}/recommend", post(post_recommend))
        .route("/api/images/{id}/relationships", post(post_relationship))
        .route("/api/images/{id}/relationships/{rid}", delete(delete_relationship))
        .route("/api/images/{id}/instances", post(post_instance))
        .route("/api/images/{id}/instances/{iid}", put(put_instance).delete(delete_instance))
        .route("/api/images/{id}/instances/{iid}/attributes", put(put_attributes))
        .route("/api/images/{id}/regions", post(post_region))
        .route("/api/images/{id}/regions/{gid}", delete(delete_region))
        .route("/api/images/{id}/clusters", post(post_cluster))
        .route("/api/images/{id}/clusters/{cid}", delete(delete_cluster))
        .route("/api/images/{id}/scenegraph", get(get_scenegraph))
        .route("/api/stats", get(get_stats))
        .route("/api/export", post(post_export))
        .route("/api/prior", get(get_prior))
        .with_state(project)
}

/// Serves the API until interrupted.
pub async fn serve(project: SharedProject, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(project))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

async fn get_config(State(p): State<SharedProject>) -> Response {
    Json(p.read().config().clone()).into_response()
}

async fn list_images(State(p): State<SharedProject>) -> Response {
    Json(p.read().list_images()).into_response()
}

async fn get_image(State(p): State<SharedProject>, Path(id): Path<String>) -> ApiResult<super::ImageSummary> {
    Ok(Json(p.read().summary(&id)?))
}

async fn get_bitmap(State(p): State<SharedProject>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let path =
        p.read().bitmap_path(&id)?.map(ToOwned::to_owned).ok_or_else(|| ServiceError::UnknownImage(id.clone()))?;
    let bytes = std::fs::read(&path).map_err(|e| ServiceError::storage(&path, e))?;
    let mime = match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("bmp") => "image/bmp",
        _ => "application/octet-stream",
    };
    Ok(([(header::CONTENT_TYPE, mime)], bytes).into_response())
}

async fn get_annotation(
    State(p): State<SharedProject>,
    Path(id): Path<String>,
) -> ApiResult<crate::model::AnnotationDocument> {
    Ok(Json(p.read().document(&id)?.clone()))
}

async fn put_annotation(State(p): State<SharedProject>, Path(id): Path<String>, bytes: Bytes) -> ApiResult<Done> {
    let doc = parse_per_image(&bytes).map_err(ServiceError::Format)?;
    p.write().put_annotation(&id, doc)?;
    Ok(Json(DONE))
}

async fn post_recommend(
    State(p): State<SharedProject>,
    Path(id): Path<String>,
    bytes: Bytes,
) -> ApiResult<super::RecommendResponse> {
    let req: RecommendRequest = body(&bytes)?;
    Ok(Json(p.read().recommend(&id, &req)?))
}

async fn post_relationship(
    State(p): State<SharedProject>,
    Path(id): Path<String>,
    bytes: Bytes,
) -> Result<Response, ApiError> {
    let req: AnnotateRequest = body(&bytes)?;
    let resp = p.write().annotate(&id, req)?;
    Ok((StatusCode::CREATED, Json(resp)).into_response())
}

async fn delete_relationship(
    State(p): State<SharedProject>,
    Path((id, rid)): Path<(String, String)>,
) -> ApiResult<Done> {
    p.write().delete_relationship(&id, &rid)?;
    Ok(Json(DONE))
}

async fn post_instance(
    State(p): State<SharedProject>,
    Path(id): Path<String>,
    bytes: Bytes,
) -> Result<Response, ApiError> {
    let req: NewInstance = body(&bytes)?;
    let new_id = p.write().add_instance(&id, req)?;
    Ok((StatusCode::CREATED, Json(Created { id: new_id })).into_response())
}

async fn put_instance(
    State(p): State<SharedProject>,
    Path((id, iid)): Path<(String, String)>,
    bytes: Bytes,
) -> ApiResult<Done> {
    let inst: Instance = body(&bytes)?;
    if inst.id != iid {
        return Err(ServiceError::BadRequest(format!("body id `{}` does not match `{iid}`", inst.id)).into());
    }
    p.write().update_instance(&id, inst)?;
    Ok(Json(DONE))
}

async fn put_attributes(
    State(p): State<SharedProject>,
    Path((id, iid)): Path<(String, String)>,
    bytes: Bytes,
) -> ApiResult<Done> {
    let req: AttributesRequest = body(&bytes)?;
    p.write().set_attributes(&id, &iid, req.attributes)?;
    Ok(Json(DONE))
}

async fn delete_instance(State(p): State<SharedProject>, Path((id, iid)): Path<(String, String)>) -> ApiResult<Done> {
    p.write().delete_instance(&id, &iid)?;
    Ok(Json(DONE))
}

async fn post_region(
    State(p): State<SharedProject>,
    Path(id): Path<String>,
    bytes: Bytes,
) -> Result<Response, ApiError> {
    let req: NewRegion = body(&bytes)?;
    let new_id = p.write().add_region(&id, req)?;
    Ok((StatusCode::CREATED, Json(Created { id: new_id })).into_response())
}

async fn delete_region(State(p): State<SharedProject>, Path((id, gid)): Path<(String, String)>) -> ApiResult<Done> {
    p.write().delete_region(&id, &gid)?;
    Ok(Json(DONE))
}

async fn post_cluster(
    State(p): State<SharedProject>,
    Path(id): Path<String>,
    bytes: Bytes,
) -> Result<Response, ApiError> {
    let req: NewCluster = body(&bytes)?;
    let new_id = p.write().add_cluster(&id, req)?;
    Ok((StatusCode::CREATED, Json(Created { id: new_id })).into_response())
}

async fn delete_cluster(State(p): State<SharedProject>, Path((id, cid)): Path<(String, String)>) -> ApiResult<Done> {
    p.write().delete_cluster(&id, &cid)?;
    Ok(Json(DONE))
}

async fn get_scenegraph(State(p): State<SharedProject>, Path(id): Path<String>) -> ApiResult<super::SceneGraph> {
    Ok(Json(p.read().scenegraph(&id)?))
}

async fn get_stats(State(p): State<SharedProject>) -> Response {
    Json(p.read().stats()).into_response()
}

async fn post_export(State(p): State<SharedProject>, bytes: Bytes) -> ApiResult<super::ExportResult> {
    let req: ExportRequest = body(&bytes)?;
    // Exclusive so concurrent exports do not interleave file writes.
    Ok(Json(p.write().export(req.format, &req.split_assignment)?))
}

async fn get_prior(State(p): State<SharedProject>) -> Response {
    Json(p.read().prior_snapshot()).into_response()
}
