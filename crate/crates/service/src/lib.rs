//! HTTP API over the pipeline, organised around interactive sessions.
//!
//! Sessions live in memory and expire after a period of inactivity. Batch
//! jobs run on a blocking thread and keep their zip in memory, or under
//! `DATA_DIR/jobs` when a data directory is configured.

pub mod error;
pub mod session;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use serde_json::{json, Value};
use tokio::sync::Mutex as AsyncMutex;

use gazepipeline_core::batch::{run_batch, BatchControl, InputFile, SummaryStats};
use gazepipeline_core::config::{load_config, PipelineConfig};

use crate::error::ApiError;
use crate::session::{Session, Stage};

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub port: u16,
    pub data_dir: Option<PathBuf>,
    pub max_upload_bytes: u64,
    pub session_ttl: Duration,
}

impl Default for Settings {
    fn default() -> Self {
        Self { port: 8080, data_dir: None, max_upload_bytes: 1 << 30, session_ttl: Duration::from_secs(7200) }
    }
}

impl Settings {
    /// Read `PORT`, `DATA_DIR`, `MAX_UPLOAD_BYTES` and `SESSION_TTL_S`.
    pub fn from_env() -> Result<Self, String> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<Self, String> {
        fn num<T: std::str::FromStr>(key: &str, v: Option<String>) -> Result<Option<T>, String> {
            v.map(|s| s.trim().parse::<T>().map_err(|_| format!("{key} must be a non-negative integer, got {s:?}"))).transpose()
        }
        let d = Self::default();
        Ok(Self {
            port: num("PORT", get("PORT"))?.unwrap_or(d.port),
            data_dir: get("DATA_DIR").filter(|s| !s.is_empty()).map(PathBuf::from),
            max_upload_bytes: num("MAX_UPLOAD_BYTES", get("MAX_UPLOAD_BYTES"))?.unwrap_or(d.max_upload_bytes),
            session_ttl: num("SESSION_TTL_S", get("SESSION_TTL_S"))?.map_or(d.session_ttl, Duration::from_secs),
        })
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "state", rename_all = "snake_case")]
enum JobState {
    Running,
    Done { summary: SummaryStats, warnings: Vec<String> },
    Failed { message: String, warnings: Vec<String> },
}

enum Archive {
    Memory(Vec<u8>),
    Disk(PathBuf),
}

struct Job {
    total_files: usize,
    done_files: AtomicUsize,
    state: Mutex<JobState>,
    archive: Mutex<Option<Archive>>,
}

struct Inner {
    settings: Settings,
    sessions: Mutex<HashMap<String, Arc<AsyncMutex<Session>>>>,
    jobs: Mutex<HashMap<String, Arc<Job>>>,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(settings: Settings) -> Self {
        Self(Arc::new(Inner { settings, sessions: Mutex::new(HashMap::new()), jobs: Mutex::new(HashMap::new()) }))
    }

    /// Drop sessions idle for longer than the TTL. Returns how many went.
    pub fn expire_sessions(&self) -> usize {
        let ttl = self.0.settings.session_ttl;
        let mut sessions = self.0.sessions.lock().expect("session map");
        let before = sessions.len();
        sessions.retain(|_, s| s.try_lock().map_or(true, |s| s.last_used.elapsed() <= ttl));
        before - sessions.len()
    }

    async fn session(&self, id: &str) -> Result<tokio::sync::OwnedMutexGuard<Session>, ApiError> {
        self.expire_sessions();
        let s = self.0.sessions.lock().expect("session map").get(id).cloned().ok_or_else(|| ApiError::unknown_session(id))?;
        let mut guard = s.lock_owned().await;
        guard.last_used = Instant::now();
        Ok(guard)
    }

    fn job(&self, id: &str) -> Result<Arc<Job>, ApiError> {
        self.0.jobs.lock().expect("job map").get(id).cloned().ok_or_else(|| ApiError::unknown_job(id))
    }
}

fn new_id() -> String {
    uuid::Uuid::new_v4().simple().to_string()
}

pub fn router(state: AppState) -> Router {
    let limit = usize::try_from(state.0.settings.max_upload_bytes).unwrap_or(usize::MAX).saturating_add(64 * 1024);
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/:id/files", post(upload))
        .route("/sessions/:id/trials", get(list_trials))
        .route("/sessions/:id/trials/:tid/:stage", post(process_trial))
        .route("/sessions/:id/config", get(get_config).put(put_config))
        .route("/sessions/:id/batch", post(start_batch))
        .route("/jobs/:jid", get(job_status))
        .route("/jobs/:jid/results.zip", get(job_results))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

async fn create_session(State(state): State<AppState>) -> impl IntoResponse {
    let id = new_id();
    state.0.sessions.lock().expect("session map").insert(id.clone(), Arc::new(AsyncMutex::new(Session::new())));
    (StatusCode::CREATED, Json(json!({ "session_id": id })))
}

async fn upload(State(state): State<AppState>, Path(id): Path<String>, mut multipart: Multipart) -> Result<Json<Value>, ApiError> {
    let mut session = state.session(&id).await?;
    let cap = state.0.settings.max_upload_bytes;
    let multipart_error = |e: axum::extract::multipart::MultipartError| ApiError::new(e.status(), "bad_upload", e.body_text());
    let mut files = Vec::new();
    let mut total: u64 = 0;
    while let Some(field) = multipart.next_field().await.map_err(multipart_error)? {
        let Some(name) = field.file_name().map(|n| n.rsplit(['/', '\\']).next().unwrap_or(n).to_string()) else {
            continue;
        };
        let bytes = field.bytes().await.map_err(multipart_error)?;
        total += bytes.len() as u64;
        if total > cap {
            return Err(ApiError::new(StatusCode::PAYLOAD_TOO_LARGE, "upload_too_large", format!("upload exceeds {cap} bytes")));
        }
        files.push(InputFile::new(name, bytes.to_vec()));
    }
    let summary = blocking(move || session.add_files(files, cap)).await??;
    Ok(Json(serde_json::to_value(summary).expect("summary serializes")))
}

async fn list_trials(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let session = state.session(&id).await?;
    Ok(Json(serde_json::to_value(session.summary()).expect("summary serializes")))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))
}

fn parse_json_body(body: &Bytes) -> Result<Value, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(Value::Null);
    }
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("body is not valid JSON: {e}")))
}

async fn process_trial(
    State(state): State<AppState>,
    Path((id, tid, stage)): Path<(String, String, String)>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let stage = Stage::parse(&stage).ok_or_else(|| ApiError::bad_request(format!("unknown stage {stage:?}; use clean, assign or measures")))?;
    let patch = parse_json_body(&body)?;
    let mut session = state.session(&id).await?;
    let out = blocking(move || {
        session.patch_config(&patch)?;
        session.process(&tid, stage)
    })
    .await??;
    let recomputed = if out.recomputed.is_empty() { "none".to_string() } else { out.recomputed.join(",") };
    let mut headers = HeaderMap::new();
    headers.insert("x-recomputed", HeaderValue::from_str(&recomputed).expect("ascii"));
    Ok((headers, Json(out.body)).into_response())
}

async fn get_config(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<PipelineConfig>, ApiError> {
    Ok(Json(state.session(&id).await?.config().clone()))
}

async fn put_config(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Json<PipelineConfig>, ApiError> {
    let text = std::str::from_utf8(&body).map_err(|_| ApiError::bad_request("config must be UTF-8 JSON"))?;
    let config = load_config(text)?;
    let mut session = state.session(&id).await?;
    let config = blocking(move || {
        session.set_config(config);
        session.config().clone()
    })
    .await?;
    Ok(Json(config))
}

async fn start_batch(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<impl IntoResponse, ApiError> {
    let session = state.session(&id).await?;
    if !session.has_files() {
        return Err(ApiError::conflict("no_files", "upload at least one ASC file before starting a batch"));
    }
    let config = match parse_json_body(&body)? {
        Value::Null => session.config().clone(),
        v => load_config(&v.to_string())?,
    };
    let files = session.input_files();
    drop(session);

    let total_files = files.iter().filter(|f| f.name.to_ascii_lowercase().ends_with(".asc")).count();
    let job = Arc::new(Job { total_files, done_files: AtomicUsize::new(0), state: Mutex::new(JobState::Running), archive: Mutex::new(None) });
    let jid = new_id();
    state.0.jobs.lock().expect("job map").insert(jid.clone(), job.clone());
    let data_dir = state.0.settings.data_dir.clone();
    let job_id = jid.clone();
    tokio::task::spawn_blocking(move || {
        let progress = |done: usize, _total: usize| {
            job.done_files.fetch_max(done, Ordering::SeqCst);
        };
        let control = BatchControl { progress: Some(&progress), cancel: None };
        let next = match run_batch(&files, &Default::default(), &config, &control) {
            Ok(r) => {
                let archive = match &data_dir {
                    Some(dir) => {
                        let path = dir.join("jobs").join(format!("{job_id}.zip"));
                        match std::fs::create_dir_all(dir.join("jobs")).and_then(|_| std::fs::write(&path, &r.archive)) {
                            Ok(()) => Archive::Disk(path),
                            Err(e) => {
                                tracing::warn!("could not spill job {job_id} to disk: {e}");
                                Archive::Memory(r.archive)
                            }
                        }
                    }
                    None => Archive::Memory(r.archive),
                };
                *job.archive.lock().expect("job archive") = Some(archive);
                JobState::Done { summary: r.summary, warnings: r.warnings }
            }
            Err(e) => {
                let warnings = match &e {
                    gazepipeline_core::batch::BatchError::NoSuccessfulTrials(w) => w.clone(),
                    _ => Vec::new(),
                };
                JobState::Failed { message: e.to_string(), warnings }
            }
        };
        job.done_files.store(job.total_files, Ordering::SeqCst);
        *job.state.lock().expect("job state") = next;
    });
    Ok((StatusCode::ACCEPTED, Json(json!({ "job_id": jid }))))
}

async fn job_status(State(state): State<AppState>, Path(jid): Path<String>) -> Result<Json<Value>, ApiError> {
    let job = state.job(&jid)?;
    let st = job.state.lock().expect("job state").clone();
    let mut body = serde_json::to_value(&st).expect("state serializes");
    body["job_id"] = json!(jid);
    body["progress"] = json!({ "done": job.done_files.load(Ordering::SeqCst), "total": job.total_files });
    Ok(Json(body))
}

async fn job_results(State(state): State<AppState>, Path(jid): Path<String>) -> Result<Response, ApiError> {
    let job = state.job(&jid)?;
    match &*job.state.lock().expect("job state") {
        JobState::Running => return Err(ApiError::conflict("job_not_done", "the job is still running")),
        JobState::Failed { message, .. } => return Err(ApiError::conflict("job_failed", message.clone())),
        JobState::Done { .. } => {}
    }
    let bytes = match job.archive.lock().expect("job archive").as_ref() {
        Some(Archive::Memory(b)) => b.clone(),
        Some(Archive::Disk(p)) => std::fs::read(p)
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "archive_unreadable", e.to_string()))?,
        None => return Err(ApiError::conflict("job_not_done", "the job has no archive")),
    };
    let headers = [
        (header::CONTENT_TYPE, "application/zip".to_string()),
        (header::CONTENT_DISPOSITION, format!("attachment; filename=\"results-{jid}.zip\"")),
    ];
    Ok((headers, bytes).into_response())
}

/// Bind and serve until the process is stopped. Idle sessions are swept
/// once a minute.
pub async fn serve(settings: Settings) -> std::io::Result<()> {
    let addr = SocketAddr::from(([0, 0, 0, 0], settings.port));
    let state = AppState::new(settings);
    let sweeper = state.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(Duration::from_secs(60));
        loop {
            tick.tick().await;
            let n = sweeper.expire_sessions();
            if n > 0 {
                tracing::info!("expired {n} idle session(s)");
            }
        }
    });
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {addr}");
    axum::serve(listener, router(state)).await
}
