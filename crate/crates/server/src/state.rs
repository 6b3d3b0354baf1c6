//! Shared server state: the engine, the event fan-out and the idempotency
//! cache.

use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::{FromRequestParts, Request, State};
use axum::http::request::Parts;
use axum::http::{HeaderMap, HeaderValue, Method, StatusCode};
use axum::middleware::Next;
use axum::response::{IntoResponse, Response};
use serde::Serialize;
use tokio::sync::broadcast;

use easel_core::clock::{Clock, SystemClock};
use easel_core::engine::{Engine, GatewayPreprocessor};
use easel_core::gateway::mock::MockDriver;
use easel_core::gateway::remote::RemoteDriver;
use easel_core::gateway::{Driver, Gateway, GatewayConfig, JobEvent};
use easel_core::journal::Record;
use easel_core::metadata::{MockPreprocessor, Preprocessor};
use easel_core::project::{Project, ProjectOptions};

use crate::config::{BackendMode, Config};
use crate::error::{ApiError, ApiResult};

pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";
pub const REPLAYED_HEADER: &str = "idempotent-replayed";
/// Responses remembered per server process, oldest evicted first.
pub const IDEMPOTENCY_CAPACITY: usize = 4096;
/// Largest response body the idempotency layer buffers.
const MAX_CACHED_BODY: usize = 64 << 20;

/// One frame of the document event stream.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerEvent {
    /// A committed journal record, in journal order.
    Record { record: Record },
    /// A job status change.
    Job { event: JobEvent },
    /// The consumer fell behind and `missed` events were dropped; it should
    /// refetch the document (now at journal `seq`) and continue.
    Resync { missed: u64, seq: u64 },
}

impl ServerEvent {
    pub fn name(&self) -> &'static str {
        match self {
            ServerEvent::Record { .. } => "record",
            ServerEvent::Job { .. } => "job",
            ServerEvent::Resync { .. } => "resync",
        }
    }
}

#[derive(Clone)]
struct Cached {
    fingerprint: String,
    status: StatusCode,
    content_type: Option<HeaderValue>,
    body: Bytes,
}

type Slot = Arc<tokio::sync::Mutex<Option<Cached>>>;

#[derive(Default)]
struct IdempotencyCache {
    slots: HashMap<String, Slot>,
    order: VecDeque<String>,
}

impl IdempotencyCache {
    fn slot(&mut self, key: &str) -> Slot {
        if let Some(s) = self.slots.get(key) {
            return s.clone();
        }
        if self.order.len() >= IDEMPOTENCY_CAPACITY {
            if let Some(old) = self.order.pop_front() {
                self.slots.remove(&old);
            }
        }
        self.order.push_back(key.to_owned());
        self.slots.entry(key.to_owned()).or_default().clone()
    }
}

pub struct Shared {
    pub engine: Arc<Engine>,
    pub config: Config,
    pub events: broadcast::Sender<ServerEvent>,
    idempotency: parking_lot::Mutex<IdempotencyCache>,
}

/// Cheaply clonable handle passed to every handler.
#[derive(Clone)]
pub struct AppState(pub Arc<Shared>);

impl std::ops::Deref for AppState {
    type Target = Shared;
    fn deref(&self) -> &Shared {
        &self.0
    }
}

/// Builds the engine `config` describes: file-backed project, the chosen
/// backend and (on a remote backend) preprocessing through it.
pub fn build_engine(config: &Config) -> anyhow::Result<Engine> {
    let clock: Arc<dyn Clock> = Arc::new(SystemClock);
    let project = Project::open(
        &config.data_dir,
        clock.clone(),
        ProjectOptions {
            sync: config.sync,
            snapshot_every: config.snapshot_every,
        },
    )?;
    let driver: Arc<dyn Driver> = match config.backend.mode {
        BackendMode::Mock => Arc::new(MockDriver::with_ticks(config.backend.mock_ticks)),
        BackendMode::Remote => {
            let url = config.backend.url.as_deref().unwrap_or_default();
            Arc::new(RemoteDriver::connect(url, format!("easel-{}", std::process::id()))?)
        }
    };
    let gateway = Gateway::new(
        driver,
        clock,
        GatewayConfig {
            max_inflight: config.max_inflight,
            ..GatewayConfig::default()
        },
    );
    let preprocessor: Arc<dyn Preprocessor> = match config.backend.mode {
        BackendMode::Mock => Arc::new(MockPreprocessor),
        BackendMode::Remote => Arc::new(GatewayPreprocessor::new(gateway.clone())),
    };
    Ok(Engine::new(project, gateway, preprocessor))
}

impl AppState {
    /// Wires `engine` to a new event channel and starts the background
    /// dispatcher and settler.
    pub fn new(engine: Engine, config: Config) -> Self {
        let (events, _) = broadcast::channel(config.event_buffer);
        let engine = Arc::new(engine);
        {
            let tx = events.clone();
            engine.project().subscribe(move |rec| {
                // No receivers is fine; lagging receivers see a resync.
                let _ = tx.send(ServerEvent::Record { record: rec.clone() });
            });
        }
        let jobs = engine.gateway().subscribe();
        let tx = events.clone();
        std::thread::Builder::new()
            .name("job-events".into())
            .spawn(move || {
                while let Ok(event) = jobs.recv() {
                    let _ = tx.send(ServerEvent::Job { event });
                }
            })
            .expect("spawn job event thread");
        engine.gateway().spawn_dispatcher();
        engine.spawn_settler();
        Self(Arc::new(Shared {
            engine,
            config,
            events,
            idempotency: parking_lot::Mutex::new(IdempotencyCache::default()),
        }))
    }

    /// Runs a mutation on a blocking thread as one request, journaling
    /// `key` with its first record.
    pub async fn mutate<T: Send + 'static>(
        &self,
        key: Key,
        f: impl FnOnce(&Engine) -> ApiResult<T> + Send + 'static,
    ) -> ApiResult<T> {
        let engine = self.engine.clone();
        tokio::task::spawn_blocking(move || engine.with_key(key.0, f))
            .await
            .map_err(|e| ApiError::internal(e.to_string()))?
    }

    /// Runs a read-only query on a blocking thread.
    pub async fn query<T: Send + 'static>(&self, f: impl FnOnce(&Engine) -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
        let engine = self.engine.clone();
        tokio::task::spawn_blocking(move || f(&engine))
            .await
            .map_err(|e| ApiError::internal(e.to_string()))?
    }

    /// Stops the dispatcher; queued jobs stay queued.
    pub fn shutdown(&self) {
        self.engine.gateway().shutdown();
    }
}

/// The request's idempotency key, if it sent one.
#[derive(Debug, Clone, Default)]
pub struct Key(pub Option<String>);

impl<S: Send + Sync> FromRequestParts<S> for Key {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, _: &S) -> Result<Self, ApiError> {
        idempotency_key(&parts.headers).map(Key)
    }
}

fn idempotency_key(headers: &HeaderMap) -> ApiResult<Option<String>> {
    match headers.get(IDEMPOTENCY_HEADER) {
        None => Ok(None),
        Some(v) => {
            let key = v
                .to_str()
                .map_err(|_| ApiError::bad_request("idempotency key must be visible ASCII"))?
                .trim();
            if key.is_empty() || key.len() > 255 {
                return Err(ApiError::bad_request("idempotency key must be 1-255 characters"));
            }
            Ok(Some(key.to_owned()))
        }
    }
}

fn replay(c: &Cached) -> Response {
    let mut r = (c.status, c.body.clone()).into_response();
    if let Some(ct) = &c.content_type {
        r.headers_mut().insert(axum::http::header::CONTENT_TYPE, ct.clone());
    }
    r.headers_mut().insert(REPLAYED_HEADER, HeaderValue::from_static("true"));
    r
}

/// Middleware making keyed mutations safe to retry.
///
/// The first request with a key runs and its response is remembered;
/// retries with the same key get the same status and body back (with
/// `Idempotent-Replayed: true`) without running again. Concurrent retries
/// wait for the first. If the response was lost to a restart but the
/// journal already holds the key, the retry gets 409 `already_applied`.
pub async fn idempotency(State(state): State<AppState>, req: Request, next: Next) -> Response {
    if matches!(*req.method(), Method::GET | Method::HEAD | Method::OPTIONS) {
        return next.run(req).await;
    }
    let key = match idempotency_key(req.headers()) {
        Ok(Some(k)) => k,
        Ok(None) => return next.run(req).await,
        Err(e) => return e.into_response(),
    };
    let fingerprint = format!("{} {}", req.method(), req.uri());
    let slot = state.idempotency.lock().slot(&key);
    let mut guard = slot.lock().await;
    if let Some(cached) = guard.as_ref() {
        if cached.fingerprint != fingerprint {
            return ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "key_reused",
                format!("idempotency key {key:?} was used for {}", cached.fingerprint),
            )
            .into_response();
        }
        return replay(cached);
    }
    let applied = state.engine.project().record_for_key(&key);
    if let Some(seq) = applied {
        return ApiError::new(
            StatusCode::CONFLICT,
            "already_applied",
            format!("a request with idempotency key {key:?} was applied as journal record {seq}"),
        )
        .into_response();
    }
    let response = next.run(req).await;
    let (parts, body) = response.into_parts();
    let body = match axum::body::to_bytes(body, MAX_CACHED_BODY).await {
        Ok(b) => b,
        Err(e) => return ApiError::internal(e.to_string()).into_response(),
    };
    if !parts.status.is_server_error() {
        *guard = Some(Cached {
            fingerprint,
            status: parts.status,
            content_type: parts.headers.get(axum::http::header::CONTENT_TYPE).cloned(),
            body: body.clone(),
        });
    }
    Response::from_parts(parts, Body::from(body))
}
