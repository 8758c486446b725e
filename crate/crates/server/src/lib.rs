//! HTTP+JSON front end over [`SessionManager`].
//!
//! Binary payloads travel either raw with a matching content type or as
//! base64 strings inside JSON bodies.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::Deserialize;
use serde_json::json;

use shadowbasis_core::ao::AoStroke;
use shadowbasis_core::composite::Placement;
use shadowbasis_core::session::{ServiceError, SessionManager, SessionSource, DEFAULT_SESSION_AO_SPP};
use shadowbasis_core::{CameraPose, EnvLightMap, Error, ShadowDomain};

/// Uploaded basis sets are tens of megabytes.
pub const MAX_BODY_BYTES: usize = 512 * 1024 * 1024;
pub const PORT_ENV: &str = "SHADOWBASIS_PORT";
pub const DEFAULT_PORT: u16 = 8080;

const PFM_TYPE: &str = "image/x-portable-floatmap";

pub struct ApiError(ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError(e)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(ServiceError::BadRequest(e))
    }
}

fn bad_request(msg: impl Into<String>) -> ApiError {
    ApiError(ServiceError::BadRequest(Error::InvalidParameter(msg.into())))
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, kind) = match &self.0 {
            ServiceError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            ServiceError::NotReady(_) => (StatusCode::SERVICE_UNAVAILABLE, "not_ready"),
            ServiceError::Failed(_) => (StatusCode::UNPROCESSABLE_ENTITY, "build_failed"),
            ServiceError::MissingLayer(_) => (StatusCode::CONFLICT, "missing_layer"),
            ServiceError::BadRequest(_) => (StatusCode::BAD_REQUEST, "bad_request"),
        };
        let mut body = json!({ "error": kind, "message": self.0.to_string() });
        if let ServiceError::MissingLayer(layer) = &self.0 {
            body["layer"] = json!(layer);
        }
        let mut resp = (status, Json(body)).into_response();
        if status == StatusCode::SERVICE_UNAVAILABLE {
            resp.headers_mut().insert(header::RETRY_AFTER, HeaderValue::from_static("1"));
        }
        resp
    }
}

type ApiResult<T> = Result<T, ApiError>;
type AppState = Arc<SessionManager>;

/// Runs session work off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .unwrap_or_else(|e| Err(bad_request(format!("worker failed: {e}"))))
}

fn decode_b64(field: &str, s: &str) -> ApiResult<Vec<u8>> {
    B64.decode(s.trim())
        .map_err(|e| bad_request(format!("field `{field}` is not valid base64: {e}")))
}

fn content_type(headers: &HeaderMap) -> &str {
    headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .map(|s| s.split(';').next().unwrap_or("").trim())
        .unwrap_or("")
}

fn binary(content_type: &'static str, bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, content_type)], bytes).into_response()
}

fn parse_json<T: serde::de::DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| Error::from(e).into())
}

#[derive(Deserialize, Default)]
struct CreateRequest {
    obj: Option<String>,
    pose: Option<CameraPose>,
    ao_spp: Option<usize>,
    ssbb: Option<String>,
    mask: Option<String>,
    receiver: Option<String>,
    ao: Option<String>,
}

#[derive(Deserialize, Default)]
struct CreateQuery {
    yaw: Option<f64>,
    pitch: Option<f64>,
    width: Option<usize>,
    height: Option<usize>,
    ao_spp: Option<usize>,
}

impl CreateQuery {
    fn pose(&self) -> CameraPose {
        let mut pose = CameraPose::new(self.yaw.unwrap_or(0.0), self.pitch.unwrap_or(0.0));
        pose.width = self.width.unwrap_or(pose.width);
        pose.height = self.height.unwrap_or(pose.height);
        pose
    }
}

async fn create_session(
    State(mgr): State<AppState>,
    Query(q): Query<CreateQuery>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    let source = match content_type(&headers) {
        "application/octet-stream" => SessionSource::Prebuilt {
            ssbb: body.to_vec(),
            mask: None,
            receiver: None,
            ao: None,
        },
        "text/plain" | "model/obj" => SessionSource::Mesh {
            obj: String::from_utf8(body.to_vec()).map_err(|_| bad_request("OBJ upload is not UTF-8"))?,
            pose: q.pose(),
            ao_spp: q.ao_spp.unwrap_or(DEFAULT_SESSION_AO_SPP),
        },
        _ => {
            let req: CreateRequest = parse_json(&body)?;
            match (req.obj, req.ssbb) {
                (Some(obj), None) => SessionSource::Mesh {
                    obj,
                    pose: req.pose.unwrap_or_else(|| q.pose()),
                    ao_spp: req.ao_spp.or(q.ao_spp).unwrap_or(DEFAULT_SESSION_AO_SPP),
                },
                (None, Some(ssbb)) => SessionSource::Prebuilt {
                    ssbb: decode_b64("ssbb", &ssbb)?,
                    mask: req.mask.as_deref().map(|s| decode_b64("mask", s)).transpose()?,
                    receiver: req.receiver.as_deref().map(|s| decode_b64("receiver", s)).transpose()?,
                    ao: req.ao.as_deref().map(|s| decode_b64("ao", s)).transpose()?,
                },
                _ => return Err(bad_request("provide exactly one of `obj` or `ssbb`")),
            }
        }
    };
    let status = blocking(move || Ok(mgr.create(source)?.status())).await?;
    Ok((StatusCode::CREATED, Json(json!({ "id": status.id, "status": status }))).into_response())
}

async fn session_status(State(mgr): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(mgr.get(&id)?.status()).into_response())
}

async fn delete_session(State(mgr): State<AppState>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    if mgr.remove(&id) {
        Ok(StatusCode::NO_CONTENT)
    } else {
        Err(ServiceError::NotFound(id).into())
    }
}

async fn set_elm(State(mgr): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let session = mgr.get(&id)?;
    let elm: EnvLightMap = parse_json(&body)?;
    let body = blocking(move || {
        let result = session.set_elm(elm)?;
        let preview = session.shadow_preview_png(ShadowDomain::Inverse)?;
        let composite = session.composite_png().ok();
        let (w, h) = result.shadow.dims();
        Ok(json!({
            "compose_ms": result.compose_ms,
            "width": w,
            "height": h,
            "domain": ShadowDomain::Inverse,
            "peak": result.shadow.pixels.max().unwrap_or(0.0),
            "preview_png": B64.encode(preview),
            "composite_png": composite.map(|c| B64.encode(c)),
        }))
    })
    .await?;
    Ok(Json(body).into_response())
}

#[derive(Deserialize)]
struct ImageQuery {
    format: Option<String>,
    domain: Option<String>,
}

async fn get_shadow(
    State(mgr): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<ImageQuery>,
) -> ApiResult<Response> {
    let session = mgr.get(&id)?;
    let domain: ShadowDomain = q.domain.as_deref().unwrap_or("inverse").parse()?;
    match q.format.as_deref().unwrap_or("pfm") {
        "pfm" => Ok(binary(PFM_TYPE, session.shadow(domain)?.pixels.encode_pfm())),
        "png" => Ok(binary("image/png", session.shadow_preview_png(domain)?)),
        other => Err(bad_request(format!("unknown format `{other}`"))),
    }
}

async fn get_ao(State(mgr): State<AppState>, Path(id): Path<String>, Query(q): Query<ImageQuery>) -> ApiResult<Response> {
    let ao = mgr.get(&id)?.ao()?;
    match q.format.as_deref().unwrap_or("pfm") {
        "pfm" => Ok(binary(PFM_TYPE, ao.encode_pfm())),
        "png" => Ok(binary("image/png", ao.encode_png()?)),
        other => Err(bad_request(format!("unknown format `{other}`"))),
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum StrokesBody {
    Wrapped { strokes: Vec<AoStroke> },
    Bare(Vec<AoStroke>),
}

async fn edit_ao(
    State(mgr): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<ImageQuery>,
    body: Bytes,
) -> ApiResult<Response> {
    let session = mgr.get(&id)?;
    let strokes = match parse_json::<StrokesBody>(&body)? {
        StrokesBody::Wrapped { strokes } | StrokesBody::Bare(strokes) => strokes,
    };
    let ao = blocking(move || Ok(session.edit_ao(&strokes)?)).await?;
    match q.format.as_deref().unwrap_or("pfm") {
        "pfm" => Ok(binary(PFM_TYPE, ao.encode_pfm())),
        "png" => Ok(binary("image/png", ao.encode_png()?)),
        other => Err(bad_request(format!("unknown format `{other}`"))),
    }
}

#[derive(Deserialize)]
struct PngBody {
    png: String,
}

fn png_payload(headers: &HeaderMap, body: &[u8]) -> ApiResult<Vec<u8>> {
    if content_type(headers) == "image/png" {
        Ok(body.to_vec())
    } else {
        let b: PngBody = parse_json(body)?;
        decode_b64("png", &b.png)
    }
}

async fn set_background(
    State(mgr): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    let session = mgr.get(&id)?;
    let png = png_payload(&headers, &body)?;
    let (w, h) = blocking(move || Ok(session.set_background(&png)?)).await?;
    Ok(Json(json!({ "width": w, "height": h })).into_response())
}

#[derive(Deserialize)]
struct CutoutBody {
    png: String,
    #[serde(default)]
    x: i64,
    #[serde(default)]
    y: i64,
    scale: Option<f64>,
}

#[derive(Deserialize)]
struct PlacementQuery {
    x: Option<i64>,
    y: Option<i64>,
    scale: Option<f64>,
}

async fn set_cutout(
    State(mgr): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<PlacementQuery>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    let session = mgr.get(&id)?;
    let (png, placement) = if content_type(&headers) == "image/png" {
        let placement = Placement {
            x: q.x.unwrap_or(0),
            y: q.y.unwrap_or(0),
            scale: q.scale.unwrap_or(1.0),
        };
        (body.to_vec(), placement)
    } else {
        let b: CutoutBody = parse_json(&body)?;
        let placement = Placement {
            x: b.x,
            y: b.y,
            scale: b.scale.unwrap_or(1.0),
        };
        (decode_b64("png", &b.png)?, placement)
    };
    let (w, h) = blocking(move || Ok(session.set_cutout(&png, placement)?)).await?;
    Ok(Json(json!({ "width": w, "height": h, "placement": placement })).into_response())
}

async fn get_composite(State(mgr): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let session = mgr.get(&id)?;
    let png = blocking(move || Ok(session.composite_png()?)).await?;
    Ok(binary("image/png", png))
}

async fn export(State(mgr): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let session = mgr.get(&id)?;
    let e = blocking(move || Ok(session.export()?)).await?;
    Ok(Json(json!({
        "mask_png": B64.encode(&e.mask_png),
        "receiver_png": B64.encode(&e.receiver_png),
        "ao_pfm": B64.encode(&e.ao_pfm),
        "bases_ssbb": B64.encode(&e.bases_ssbb),
        "elm": e.elm,
        "shadow_pfm": e.shadow_pfm.as_ref().map(|s| B64.encode(s)),
    }))
    .into_response())
}

pub fn router(manager: Arc<SessionManager>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", axum::routing::delete(delete_session))
        .route("/sessions/{id}/status", get(session_status))
        .route("/sessions/{id}/elm", put(set_elm))
        .route("/sessions/{id}/shadow", get(get_shadow))
        .route("/sessions/{id}/ao", get(get_ao))
        .route("/sessions/{id}/ao/strokes", put(edit_ao))
        .route("/sessions/{id}/background", put(set_background))
        .route("/sessions/{id}/cutout", put(set_cutout))
        .route("/sessions/{id}/composite", get(get_composite))
        .route("/sessions/{id}/export", get(export))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(manager)
}

/// Serves until ctrl-c.
pub async fn serve(addr: SocketAddr, manager: Arc<SessionManager>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(manager))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
