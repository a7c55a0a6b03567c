//! Local HTTP service behind the authoring UI.
//!
//! Routes:
//!
//! - `POST /api/session` multipart upload of `image`, `depth`, `mask`
//!   (plus `depth_range` JSON when the depth is a 16-bit PNG, and an optional
//!   `mask_threshold`). Returns `{"session": id}`.
//! - `POST /api/session/{id}/trajectory` with
//!   `{"points": [[x,y],...], "frames", "theta", "normalize", "preset"}`.
//! - `POST /api/session/{id}/preset` with
//!   `{"kind", "magnitude", "frames", "pivot_depth"}`.
//! - `GET /api/session/{id}/bundle` zip of the control bundle for the last
//!   submitted guidance.
//! - `GET /` the UI bundle, or a placeholder page when none is configured.
//!
//! Errors are `{"error": code, "message": text}`.

use std::collections::{BTreeMap, HashMap};
use std::io::{Cursor, Write};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use objctrl_core::pipeline::{self, sha256_hex, Guidance, GuidanceSource, Inputs, RunConfig, RunOptions};
use objctrl_core::tensor_io::{depth_from_bytes, DepthRange, DEFAULT_MASK_THRESHOLD};
use objctrl_core::trajectory::{DEFAULT_FRAMES, DEFAULT_THETA};
use objctrl_core::{
    warp_mask_sequence, Error as CoreError, Image, Mask, PresetKind, PresetSpec, Trajectory2D,
};

pub const SESSION_TTL: Duration = Duration::from_secs(3600);
const UPLOAD_LIMIT: usize = 256 * 1024 * 1024;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("unknown session '{id}'"))
    }

    fn unprocessable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", message)
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        if e.is_io() {
            Self::internal(e.to_string())
        } else {
            Self::unprocessable(e.to_string())
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Json(serde_json::json!({"error": self.code, "message": self.message}));
        (self.status, body).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Uploaded bytes kept verbatim so bundles can hash them.
struct Uploads {
    image: Vec<u8>,
    depth: Vec<u8>,
    depth_range: Option<Vec<u8>>,
    mask: Vec<u8>,
}

struct Session {
    inputs: Arc<Inputs>,
    uploads: Arc<Uploads>,
    mask_threshold: u8,
    last: Option<(Guidance, RunOptions)>,
}

struct Entry {
    created: Instant,
    session: Arc<tokio::sync::Mutex<Session>>,
}

#[derive(Clone)]
pub struct AppState {
    sessions: Arc<Mutex<HashMap<String, Entry>>>,
    ttl: Duration,
    ui_dir: Option<PathBuf>,
}

impl AppState {
    pub fn new(ui_dir: Option<PathBuf>) -> Self {
        Self::with_ttl(ui_dir, SESSION_TTL)
    }

    pub fn with_ttl(ui_dir: Option<PathBuf>, ttl: Duration) -> Self {
        Self {
            sessions: Arc::new(Mutex::new(HashMap::new())),
            ttl,
            ui_dir,
        }
    }

    fn insert(&self, session: Session) -> String {
        let id = format!("{:032x}", rand::random::<u128>());
        let mut map = self.sessions.lock().expect("session map poisoned");
        self.purge(&mut map);
        map.insert(
            id.clone(),
            Entry {
                created: Instant::now(),
                session: Arc::new(tokio::sync::Mutex::new(session)),
            },
        );
        id
    }

    fn get(&self, id: &str) -> ApiResult<Arc<tokio::sync::Mutex<Session>>> {
        let mut map = self.sessions.lock().expect("session map poisoned");
        self.purge(&mut map);
        map.get(id)
            .map(|e| e.session.clone())
            .ok_or_else(|| ApiError::not_found(id))
    }

    fn purge(&self, map: &mut HashMap<String, Entry>) {
        let ttl = self.ttl;
        map.retain(|_, e| e.created.elapsed() < ttl);
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().expect("session map poisoned").len()
    }
}

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/api/session", post(create_session))
        .route("/api/session/{id}/trajectory", post(post_trajectory))
        .route("/api/session/{id}/preset", post(post_preset))
        .route("/api/session/{id}/bundle", get(get_bundle))
        .layer(DefaultBodyLimit::max(UPLOAD_LIMIT));
    let router = match &state.ui_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api.route("/", get(placeholder_ui)),
    };
    router.with_state(state)
}

pub async fn serve(addr: SocketAddr, ui_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(AppState::new(ui_dir))).await
}

async fn placeholder_ui() -> Html<&'static str> {
    Html(
        "<!doctype html><html><head><title>objctrl preview</title></head><body>\
         <p>UI bundle not installed. Start the server with <code>--ui-dir</code> \
         pointing at a built UI, or use the JSON API under <code>/api</code>.</p>\
         </body></html>",
    )
}

async fn create_session(State(state): State<AppState>, mut multipart: Multipart) -> ApiResult<Json<Value>> {
    let mut fields: HashMap<String, Vec<u8>> = HashMap::new();
    while let Some(field) = multipart
        .next_field()
        .await
        .map_err(|e| ApiError::bad_request(format!("multipart: {e}")))?
    {
        let name = field.name().unwrap_or_default().to_string();
        let bytes = field
            .bytes()
            .await
            .map_err(|e| ApiError::bad_request(format!("multipart field '{name}': {e}")))?;
        fields.insert(name, bytes.to_vec());
    }
    let mut take = |name: &str| {
        fields
            .remove(name)
            .ok_or_else(|| ApiError::unprocessable(format!("missing upload field '{name}'")))
    };
    let uploads = Uploads {
        image: take("image")?,
        depth: take("depth")?,
        mask: take("mask")?,
        depth_range: take("depth_range").ok(),
    };
    let mask_threshold = match take("mask_threshold") {
        Ok(b) => std::str::from_utf8(&b)
            .ok()
            .and_then(|s| s.trim().parse::<u8>().ok())
            .ok_or_else(|| ApiError::unprocessable("mask_threshold must be an integer in 0..=255"))?,
        Err(_) => DEFAULT_MASK_THRESHOLD,
    };

    let inputs = tokio::task::spawn_blocking({
        let range = uploads.depth_range.clone();
        let (image, depth, mask) = (uploads.image.clone(), uploads.depth.clone(), uploads.mask.clone());
        move || -> ApiResult<Inputs> {
            let range = range
                .map(|b| {
                    serde_json::from_slice::<DepthRange>(&b)
                        .map_err(|e| ApiError::unprocessable(format!("depth_range: {e}")))
                })
                .transpose()?;
            let image = Image::from_png_bytes(&image)?;
            let depth = depth_from_bytes(&depth, range)?;
            let mask = Mask::from_png_bytes(&mask, mask_threshold)?;
            Ok(Inputs::new(image, depth, mask)?)
        }
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;

    let id = state.insert(Session {
        inputs: Arc::new(inputs),
        uploads: Arc::new(uploads),
        mask_threshold,
        last: None,
    });
    Ok(Json(serde_json::json!({ "session": id })))
}

#[derive(Debug, Clone, Deserialize)]
pub struct PresetRequest {
    pub kind: PresetKind,
    pub magnitude: f64,
    #[serde(default)]
    pub frames: Option<usize>,
    #[serde(default)]
    pub pivot_depth: Option<f64>,
}

impl PresetRequest {
    fn spec(&self, default_frames: usize) -> PresetSpec {
        PresetSpec {
            kind: self.kind,
            magnitude: self.magnitude,
            frames: self.frames.unwrap_or(default_frames),
            pivot_depth: self.pivot_depth.unwrap_or(1.0),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct TrajectoryRequest {
    #[serde(default)]
    pub points: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub frames: Option<usize>,
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default)]
    pub normalize: Option<bool>,
    #[serde(default)]
    pub preset: Option<PresetRequest>,
}

/// Body of every preview response.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PreviewResponse {
    /// Lifted trajectory, absent for presets.
    pub traj3d: Option<Value>,
    /// Pose JSON document.
    pub poses: Value,
    /// Base64 PNG per frame.
    pub masks: Vec<String>,
    /// Camera centres per frame, `[x, y, z]`.
    pub camera_path: Vec<[f64; 3]>,
    pub frames: usize,
}

fn parse_json<T: serde::de::DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::unprocessable(format!("request body: {e}")))
}

async fn post_trajectory(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: axum::body::Bytes,
) -> ApiResult<Json<PreviewResponse>> {
    let session = state.get(&id)?;
    let req: TrajectoryRequest = parse_json(&body)?;
    let mut options = RunOptions::default();
    options.frames = req.frames.unwrap_or(DEFAULT_FRAMES);
    options.theta = req.theta.unwrap_or(DEFAULT_THETA);
    options.normalize = req.normalize.unwrap_or(true);
    let guidance = match (&req.preset, &req.points) {
        (Some(p), _) => Guidance::Preset(p.spec(options.frames)),
        (None, Some(points)) => {
            let t = Trajectory2D::new(points.clone())?;
            Guidance::Trajectory2d(t)
        }
        (None, None) => return Err(ApiError::unprocessable("request needs 'points' or 'preset'")),
    };
    preview(session, guidance, options).await.map(Json)
}

async fn post_preset(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: axum::body::Bytes,
) -> ApiResult<Json<PreviewResponse>> {
    let session = state.get(&id)?;
    let req: PresetRequest = parse_json(&body)?;
    let options = RunOptions::default();
    let guidance = Guidance::Preset(req.spec(options.frames));
    preview(session, guidance, options).await.map(Json)
}

async fn preview(
    session: Arc<tokio::sync::Mutex<Session>>,
    guidance: Guidance,
    mut options: RunOptions,
) -> ApiResult<PreviewResponse> {
    let mut guard = session.lock().await;
    options.mask_threshold = guard.mask_threshold;
    let inputs = guard.inputs.clone();
    let (g, o) = (guidance.clone(), options.clone());
    let response = tokio::task::spawn_blocking(move || compute_preview(&inputs, &g, &o))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    guard.last = Some((guidance, options));
    Ok(response)
}

fn compute_preview(inputs: &Inputs, guidance: &Guidance, options: &RunOptions) -> ApiResult<PreviewResponse> {
    if let Guidance::Trajectory2d(t) = guidance {
        t.check_bounds(inputs.width(), inputs.height())?;
    }
    let (traj, poses) = pipeline::derive_poses(&inputs.depth, guidance, options)?;
    let masks = warp_mask_sequence(&inputs.mask, &inputs.depth, &poses)?;
    let masks = masks
        .iter()
        .map(|m| m.to_png_bytes().map(|b| BASE64.encode(b)))
        .collect::<Result<Vec<_>, _>>()?;
    let camera_path = poses.frames().iter().map(|f| f.center()).collect();
    let poses_json: Value = serde_json::from_str(&poses.to_json()).map_err(|e| ApiError::internal(e.to_string()))?;
    let traj3d = traj
        .map(|t| serde_json::from_str::<Value>(&t.to_json()))
        .transpose()
        .map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(PreviewResponse {
        traj3d,
        frames: poses.len(),
        poses: poses_json,
        masks,
        camera_path,
    })
}

async fn get_bundle(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let session = state.get(&id)?;
    let guard = session.lock().await;
    let (guidance, options) = guard
        .last
        .clone()
        .ok_or_else(|| ApiError::unprocessable("no trajectory or preset has been submitted for this session"))?;
    let inputs = guard.inputs.clone();
    let uploads = guard.uploads.clone();
    let zip = tokio::task::spawn_blocking(move || build_bundle_zip(&inputs, &uploads, &guidance, &options))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    drop(guard);
    Ok((
        [
            (header::CONTENT_TYPE, "application/zip"),
            (header::CONTENT_DISPOSITION, "attachment; filename=\"control_bundle.zip\""),
        ],
        zip,
    )
        .into_response())
}

/// Writes the bundle through the pipeline into a scratch directory, then zips
/// it together with the inputs the manifest refers to under `inputs/`.
fn build_bundle_zip(
    inputs: &Inputs,
    uploads: &Uploads,
    guidance: &Guidance,
    options: &RunOptions,
) -> ApiResult<Vec<u8>> {
    let depth_name = if uploads.depth_range.is_some() { "inputs/depth.png" } else { "inputs/depth.otsr" };
    let mut extra: Vec<(String, Vec<u8>)> = vec![
        ("inputs/image.png".into(), uploads.image.clone()),
        (depth_name.into(), uploads.depth.clone()),
        ("inputs/mask.png".into(), uploads.mask.clone()),
    ];
    let mut hashes = BTreeMap::new();
    hashes.insert("image".to_string(), sha256_hex(&uploads.image));
    hashes.insert("depth".to_string(), sha256_hex(&uploads.depth));
    hashes.insert("mask".to_string(), sha256_hex(&uploads.mask));
    if let Some(r) = &uploads.depth_range {
        hashes.insert("depth_range".to_string(), sha256_hex(r));
        extra.push((format!("{depth_name}.json"), r.clone()));
    }
    let source = match guidance {
        Guidance::Trajectory2d(t) => {
            let bytes = t.to_json().into_bytes();
            hashes.insert("guidance".to_string(), sha256_hex(&bytes));
            extra.push(("inputs/trajectory_2d.json".into(), bytes));
            GuidanceSource::Trajectory2d {
                path: "inputs/trajectory_2d.json".into(),
            }
        }
        Guidance::Trajectory3d(t) => {
            let bytes = t.to_json().into_bytes();
            hashes.insert("guidance".to_string(), sha256_hex(&bytes));
            extra.push(("inputs/trajectory_3d.json".into(), bytes));
            GuidanceSource::Trajectory3d {
                path: "inputs/trajectory_3d.json".into(),
            }
        }
        Guidance::Poses(p) => {
            let bytes = p.to_json().into_bytes();
            hashes.insert("guidance".to_string(), sha256_hex(&bytes));
            extra.push(("inputs/poses.json".into(), bytes));
            GuidanceSource::Poses {
                path: "inputs/poses.json".into(),
            }
        }
        Guidance::Preset(spec) => GuidanceSource::Preset { spec: *spec },
    };
    let config = RunConfig {
        image: "inputs/image.png".into(),
        depth: depth_name.into(),
        mask: "inputs/mask.png".into(),
        guidance: source,
        options: options.clone(),
    };
    let signals = pipeline::compute(inputs, guidance, options)?;
    let dir = tempfile::tempdir().map_err(|e| ApiError::internal(e.to_string()))?;
    let bundle = pipeline::write_bundle(signals, &config, hashes, dir.path())?;

    let mut names: Vec<String> = bundle.manifest.files.keys().cloned().collect();
    names.push("manifest.json".into());
    let io = |e: std::io::Error| ApiError::internal(e.to_string());
    let zerr = |e: zip::result::ZipError| ApiError::internal(e.to_string());
    let mut zw = zip::ZipWriter::new(Cursor::new(Vec::new()));
    let opts = zip::write::SimpleFileOptions::default()
        .compression_method(zip::CompressionMethod::Stored)
        .last_modified_time(zip::DateTime::default());
    for name in names {
        let bytes = std::fs::read(dir.path().join(&name)).map_err(io)?;
        zw.start_file(name, opts).map_err(zerr)?;
        zw.write_all(&bytes).map_err(io)?;
    }
    for (name, bytes) in extra {
        zw.start_file(name, opts).map_err(zerr)?;
        zw.write_all(&bytes).map_err(io)?;
    }
    Ok(zw.finish().map_err(zerr)?.into_inner())
}
