//! HTTP routes. Bodies are JSON unless noted; errors follow
//! [`crate::error::ErrorBody`].

use std::convert::Infallible;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{FromRequest, Multipart, Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use futures::stream::{Stream, StreamExt};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio_stream::wrappers::errors::BroadcastStreamRecvError;
use tokio_stream::wrappers::{BroadcastStream, UnboundedReceiverStream};

use easel_core::asset::{Asset, CanvasItem};
use easel_core::document::{Page, Placement, SavedEasel};
use easel_core::easel::graph::WorkflowGraph;
use easel_core::easel::quick::QuickOpKind;
use easel_core::easel::{compile, EaselSpec, MapKind};
use easel_core::engine::{Engine, QuickOutcome, Settled, Submission};
use easel_core::gateway::{GenerationJob, JobStatus};
use easel_core::ids::{AssetId, CollectionId, EaselId, EntryId, ItemId, JobId, NodeId, PageId, Vec2};
use easel_core::media::AssetKind;
use easel_core::organization::Collection;
use easel_core::project::{Generated, DEFAULT_ITEM_EXTENT, OUTPUT_SPACING};
use easel_core::provenance::{CollageLayer, Snapshot};
use easel_core::raster::{Rect, Stroke};

use crate::error::{ApiError, ApiResult};
use crate::state::{idempotency, AppState, Key, ServerEvent};

/// The complete router over `state`.
pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/document", get(document))
        .route("/events", get(events))
        .route("/pages", get(list_pages).post(create_page))
        .route("/pages/{id}/items", get(page_items))
        .route("/assets", get(list_assets).post(upload_asset))
        .route("/assets/{id}", get(get_asset))
        .route("/assets/{id}/content", get(asset_content))
        .route("/assets/{id}/maps/{kind}", get(asset_map))
        .route("/assets/{id}/preprocess", post(preprocess))
        .route("/assets/{id}/caption", put(set_caption))
        .route("/items", get(list_items).post(place_item))
        .route("/items/{id}", get(get_item).patch(move_item))
        .route("/items/{id}/node", get(item_node))
        .route("/items/{id}/touch", post(touch_item))
        .route("/items/{id}/emphasis", put(set_emphasis))
        .route("/nodes/{id}", get(get_node).delete(delete_node))
        .route("/nodes/{id}/restore", post(restore_node))
        .route("/nodes/{id}/lineage", get(lineage))
        .route("/nodes/{id}/recreate", get(recreate))
        .route("/history", get(history))
        .route("/trails", get(trails))
        .route("/heatmap", get(heatmap))
        .route("/timeline", get(timeline))
        .route("/dag", get(dag))
        .route("/compile", post(compile_spec))
        .route("/generate", post(generate))
        .route("/easels", get(list_easels).post(create_easel))
        .route("/easels/{id}", get(get_easel).put(update_easel).delete(delete_easel))
        .route("/easels/{id}/generate", post(generate_easel))
        .route("/quick-ops/{op}", post(quick_op))
        .route("/jobs", get(list_jobs))
        .route("/jobs/{id}", get(get_job))
        .route("/jobs/{id}/events", get(watch_job))
        .route("/jobs/{id}/cancel", post(cancel_job))
        .route("/jobs/{id}/outputs", get(job_outputs))
        .route("/collage", post(collage))
        .route("/sketch", post(sketch))
        .route("/collections", get(list_collections).post(create_collection))
        .route("/collections/{id}", get(get_collection).delete(delete_collection))
        .route("/collections/{id}/members", post(extend_collection))
        .route("/collections/{id}/instantiate", post(instantiate))
        .route("/pack", post(pack))
        .route("/exhibit", get(exhibit).post(exhibit_add))
        .route("/exhibit/manifest", get(exhibit_manifest))
        .route("/exhibit/{id}", axum::routing::patch(exhibit_update).delete(exhibit_remove))
        .route("/search", get(search))
        .layer(axum::middleware::from_fn_with_state(state.clone(), idempotency))
        .with_state(state)
}

fn created<T: Serialize>(value: T) -> Response {
    (StatusCode::CREATED, Json(value)).into_response()
}

fn accepted<T: Serialize>(value: T) -> Response {
    (StatusCode::ACCEPTED, Json(value)).into_response()
}

/// JSON body extractor whose rejections use the API error format.
pub struct Body<T>(pub T);

impl<S: Send + Sync, T: serde::de::DeserializeOwned> FromRequest<S> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(Body(v)),
            Err(e) => Err(ApiError::new(e.status(), "malformed_body", e.body_text())),
        }
    }
}

// ---------------------------------------------------------------------
// Document, pages, events

async fn health(State(s): State<AppState>) -> Json<Value> {
    let seq = s.engine.project().seq();
    Json(json!({
        "status": "ok",
        "backend": s.engine.gateway().driver_name(),
        "seq": seq,
        "max_inflight": s.engine.gateway().max_inflight(),
    }))
}

async fn document(State(s): State<AppState>) -> ApiResult<Json<Value>> {
    s.query(|e| {
        let p = e.project();
        Ok(Json(json!({ "seq": p.seq(), "document": p.document() })))
    })
    .await
}

fn sse_frame(ev: &ServerEvent) -> SseEvent {
    SseEvent::default()
        .event(ev.name())
        .json_data(ev)
        .unwrap_or_else(|_| SseEvent::default().comment("unserializable event"))
}

/// Every committed record and job change, in commit order. A consumer that
/// falls more than `event_buffer` events behind gets a `resync` frame.
async fn events(State(s): State<AppState>) -> Sse<impl Stream<Item = Result<SseEvent, Infallible>>> {
    let engine = s.engine.clone();
    let stream = BroadcastStream::new(s.events.subscribe()).map(move |item| {
        let ev = match item {
            Ok(ev) => ev,
            Err(BroadcastStreamRecvError::Lagged(missed)) => ServerEvent::Resync {
                missed,
                seq: engine.project().seq(),
            },
        };
        Ok(sse_frame(&ev))
    });
    Sse::new(stream).keep_alive(KeepAlive::new().interval(Duration::from_secs(15)))
}

async fn list_pages(State(s): State<AppState>) -> ApiResult<Json<Vec<Page>>> {
    s.query(|e| Ok(Json(e.project().document().pages.values().cloned().collect()))).await
}

#[derive(Deserialize)]
struct NewPage {
    name: String,
}

async fn create_page(State(s): State<AppState>, key: Key, Body(b): Body<NewPage>) -> ApiResult<Response> {
    s.mutate(key, move |e| Ok(created(e.project().create_page(&b.name)?))).await
}

async fn page_items(State(s): State<AppState>, Path(id): Path<PageId>) -> ApiResult<Json<Vec<CanvasItem>>> {
    s.query(move |e| {
        let p = e.project();
        if !p.document().pages.contains_key(&id) {
            return Err(ApiError::not_found(format!("unknown page {id}")));
        }
        Ok(Json(
            p.document().items.values().filter(|i| i.page_id == id && !i.hidden).cloned().collect(),
        ))
    })
    .await
}

// ---------------------------------------------------------------------
// Assets

async fn list_assets(State(s): State<AppState>) -> ApiResult<Json<Vec<Asset>>> {
    s.query(|e| Ok(Json(e.project().document().assets.values().cloned().collect()))).await
}

/// Upload options: the asset kind, and optionally where to place it (a
/// drag-and-drop import places in the same request).
#[derive(Deserialize, Default)]
struct UploadQuery {
    kind: Option<AssetKind>,
    page: Option<PageId>,
    #[serde(default)]
    x: f64,
    #[serde(default)]
    y: f64,
}

#[derive(Serialize)]
struct Uploaded {
    #[serde(flatten)]
    asset: Asset,
    #[serde(skip_serializing_if = "Option::is_none")]
    item: Option<CanvasItem>,
}

/// Asset kind for a media type, for uploads that do not name one.
pub fn kind_for_content_type(ct: &str) -> Option<AssetKind> {
    let essence = ct.split(';').next().unwrap_or_default().trim().to_ascii_lowercase();
    let (top, sub) = essence.split_once('/')?;
    match (top, sub) {
        ("image", _) => Some(AssetKind::Image),
        ("video", _) => Some(AssetKind::Video),
        ("audio", _) => Some(AssetKind::Audio),
        ("text", _) => Some(AssetKind::Text),
        ("model", _) => Some(AssetKind::Model3d),
        _ => None,
    }
}

fn resolve_kind(explicit: Option<AssetKind>, content_type: Option<&str>) -> ApiResult<AssetKind> {
    explicit
        .or_else(|| content_type.and_then(kind_for_content_type))
        .ok_or_else(|| ApiError::bad_request("asset kind unknown: pass ?kind= or a media Content-Type"))
}

/// Raw bytes (`?kind=` or a media `Content-Type`) or `multipart/form-data`
/// with a `file` part and an optional `kind` field. `?page=&x=&y=` also
/// places the new asset.
async fn upload_asset(
    State(s): State<AppState>,
    key: Key,
    Query(q): Query<UploadQuery>,
    req: Request,
) -> ApiResult<Response> {
    let content_type = req
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .map(str::to_owned);
    let (kind, bytes) = if content_type.as_deref().is_some_and(|c| c.starts_with("multipart/form-data")) {
        let mut mp = Multipart::from_request(req, &())
            .await
            .map_err(|e| ApiError::bad_request(e.body_text()))?;
        let mut kind = q.kind;
        let mut file: Option<(Option<String>, Bytes)> = None;
        while let Some(field) = mp.next_field().await.map_err(|e| ApiError::bad_request(e.body_text()))? {
            match field.name() {
                Some("kind") => {
                    let text = field.text().await.map_err(|e| ApiError::bad_request(e.body_text()))?;
                    kind = Some(
                        serde_json::from_value(Value::String(text.trim().to_owned()))
                            .map_err(|_| ApiError::bad_request(format!("unknown asset kind {text:?}")))?,
                    );
                }
                Some("file") => {
                    let ct = field.content_type().map(str::to_owned);
                    let data = field.bytes().await.map_err(|e| ApiError::bad_request(e.body_text()))?;
                    file = Some((ct, data));
                }
                _ => {}
            }
        }
        let (ct, data) = file.ok_or_else(|| ApiError::bad_request("multipart upload needs a `file` part"))?;
        (resolve_kind(kind, ct.as_deref())?, data)
    } else {
        let kind = resolve_kind(q.kind, content_type.as_deref())?;
        let data = axum::body::to_bytes(req.into_body(), usize::MAX)
            .await
            .map_err(|e| ApiError::bad_request(e.to_string()))?;
        (kind, data)
    };
    s.mutate(key, move |e| {
        let asset = e.ingest(&bytes, kind)?;
        let item = match &q.page {
            Some(page) => {
                let mut p = e.project();
                let size = p.default_size(&asset);
                Some(p.place_item(&asset.asset_id, page, Vec2::new(q.x, q.y), size)?)
            }
            None => None,
        };
        Ok(created(Uploaded { asset, item }))
    })
    .await
}

async fn get_asset(State(s): State<AppState>, Path(id): Path<AssetId>) -> ApiResult<Json<Asset>> {
    s.query(move |e| Ok(Json(e.project().asset(&id)?.clone()))).await
}

fn bytes_response(mime: &str, bytes: Vec<u8>) -> Response {
    let mut headers = HeaderMap::new();
    headers.insert(
        header::CONTENT_TYPE,
        mime.parse().unwrap_or(header::HeaderValue::from_static("application/octet-stream")),
    );
    (headers, bytes).into_response()
}

async fn asset_content(State(s): State<AppState>, Path(id): Path<AssetId>) -> ApiResult<Response> {
    s.query(move |e| {
        let p = e.project();
        let mime = p.asset(&id)?.mime.clone();
        Ok(bytes_response(&mime, p.asset_bytes(&id)?))
    })
    .await
}

async fn asset_map(State(s): State<AppState>, Path((id, kind)): Path<(AssetId, String)>) -> ApiResult<Response> {
    let kind: MapKind = kind
        .parse()
        .map_err(|_| ApiError::not_found(format!("unknown control map kind {kind:?}")))?;
    s.query(move |e| {
        let p = e.project();
        let hash = p
            .asset(&id)?
            .control_maps
            .get(&kind)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("{id} has no {} map yet", kind.as_str())))?;
        let bytes = p.blobs().get(&hash).map_err(|e| ApiError::internal(e.to_string()))?;
        Ok(bytes_response("image/png", bytes))
    })
    .await
}

async fn preprocess(State(s): State<AppState>, key: Key, Path(id): Path<AssetId>) -> ApiResult<Json<Asset>> {
    s.mutate(key, move |e| Ok(Json(e.preprocess(&id)?))).await
}

#[derive(Deserialize)]
struct CaptionBody {
    caption: String,
}

async fn set_caption(
    State(s): State<AppState>,
    key: Key,
    Path(id): Path<AssetId>,
    Body(b): Body<CaptionBody>,
) -> ApiResult<Json<Asset>> {
    s.mutate(key, move |e| Ok(Json(e.project().set_caption(&id, &b.caption)?))).await
}

// ---------------------------------------------------------------------
// Items and nodes

#[derive(Deserialize, Default)]
struct ItemFilter {
    page: Option<PageId>,
    #[serde(default)]
    include_hidden: bool,
}

async fn list_items(State(s): State<AppState>, Query(f): Query<ItemFilter>) -> ApiResult<Json<Vec<CanvasItem>>> {
    s.query(move |e| {
        Ok(Json(
            e.project()
                .document()
                .items
                .values()
                .filter(|i| f.page.as_ref().is_none_or(|p| *p == i.page_id))
                .filter(|i| f.include_hidden || !i.hidden)
                .cloned()
                .collect(),
        ))
    })
    .await
}

#[derive(Deserialize)]
struct PlaceBody {
    asset_id: AssetId,
    page_id: PageId,
    position: Vec2,
    size: Option<Vec2>,
}

async fn place_item(State(s): State<AppState>, key: Key, Body(b): Body<PlaceBody>) -> ApiResult<Response> {
    s.mutate(key, move |e| {
        let mut p = e.project();
        let size = match b.size {
            Some(s) => s,
            None => p.default_size(p.asset(&b.asset_id)?),
        };
        Ok(created(p.place_item(&b.asset_id, &b.page_id, b.position, size)?))
    })
    .await
}

async fn get_item(State(s): State<AppState>, Path(id): Path<ItemId>) -> ApiResult<Json<CanvasItem>> {
    s.query(move |e| Ok(Json(e.project().item(&id)?.clone()))).await
}

#[derive(Deserialize)]
struct MoveBody {
    position: Option<Vec2>,
    size: Option<Vec2>,
    z_order: Option<i64>,
}

async fn move_item(
    State(s): State<AppState>,
    key: Key,
    Path(id): Path<ItemId>,
    Body(b): Body<MoveBody>,
) -> ApiResult<Json<CanvasItem>> {
    s.mutate(key, move |e| Ok(Json(e.project().move_item(&id, b.position, b.size, b.z_order)?)))
        .await
}

async fn item_node(State(s): State<AppState>, Path(id): Path<ItemId>) -> ApiResult<Json<Value>> {
    s.query(move |e| Ok(Json(json!(e.project().node_of_item(&id)?)))).await
}

async fn touch_item(State(s): State<AppState>, key: Key, Path(id): Path<ItemId>) -> ApiResult<Json<CanvasItem>> {
    s.mutate(key, move |e| Ok(Json(e.project().touch_item(&id)?))).await
}

#[derive(Deserialize)]
struct EmphasisBody {
    level: f64,
}

async fn set_emphasis(
    State(s): State<AppState>,
    key: Key,
    Path(id): Path<ItemId>,
    Body(b): Body<EmphasisBody>,
) -> ApiResult<Json<CanvasItem>> {
    s.mutate(key, move |e| Ok(Json(e.project().set_emphasis(&id, b.level)?))).await
}

async fn get_node(State(s): State<AppState>, Path(id): Path<NodeId>) -> ApiResult<Json<Value>> {
    s.query(move |e| Ok(Json(json!(e.project().node(&id)?)))).await
}

async fn delete_node(State(s): State<AppState>, key: Key, Path(id): Path<NodeId>) -> ApiResult<Json<Value>> {
    s.mutate(key, move |e| Ok(Json(json!(e.project().soft_delete(&id)?)))).await
}

async fn restore_node(State(s): State<AppState>, key: Key, Path(id): Path<NodeId>) -> ApiResult<Json<Value>> {
    s.mutate(key, move |e| Ok(Json(json!(e.project().restore(&id)?)))).await
}

async fn lineage(State(s): State<AppState>, Path(id): Path<NodeId>) -> ApiResult<Json<Value>> {
    s.query(move |e| Ok(Json(json!(e.project().lineage(&id)?)))).await
}

#[derive(Serialize)]
struct Recreated {
    snapshot: Snapshot,
    /// Populated easel for easel-made nodes.
    easel_spec: Option<EaselSpec>,
    /// What the stored parameters compile to today.
    graph: Option<WorkflowGraph>,
}

async fn recreate(State(s): State<AppState>, Path(id): Path<NodeId>) -> ApiResult<Json<Recreated>> {
    s.query(move |e| {
        let (snapshot, easel_spec) = {
            let p = e.project();
            (p.recreate(&id)?, p.recreate_easel_spec(&id).ok())
        };
        Ok(Json(Recreated {
            snapshot,
            easel_spec,
            graph: e.recompile(&id)?,
        }))
    })
    .await
}

// ---------------------------------------------------------------------
// Provenance projections

#[derive(Deserialize)]
struct CursorQuery {
    #[serde(default)]
    cursor: usize,
}

async fn history(State(s): State<AppState>, Query(q): Query<CursorQuery>) -> ApiResult<Json<Value>> {
    s.query(move |e| Ok(Json(json!(e.project().history_window(q.cursor)?)))).await
}

#[derive(Deserialize)]
struct BucketQuery {
    bucket_ms: Option<i64>,
}

async fn trails(State(s): State<AppState>, Query(q): Query<BucketQuery>) -> ApiResult<Json<Value>> {
    let bucket = q.bucket_ms.unwrap_or(s.config.trail_bucket_ms);
    s.query(move |e| Ok(Json(json!(e.project().trail_path(bucket)?)))).await
}

async fn heatmap(State(s): State<AppState>) -> ApiResult<Json<Value>> {
    s.query(|e| Ok(Json(json!(e.project().activity_heatmap())))).await
}

#[derive(Deserialize)]
struct WidthQuery {
    width: Option<f64>,
}

async fn timeline(State(s): State<AppState>, Query(q): Query<WidthQuery>) -> ApiResult<Json<Value>> {
    s.query(move |e| Ok(Json(json!(e.project().timeline_layout(q.width.unwrap_or(1000.0))?))))
        .await
}

async fn dag(State(s): State<AppState>) -> ApiResult<Json<Value>> {
    s.query(|e| Ok(Json(json!(e.project().export_dag())))).await
}

// ---------------------------------------------------------------------
// Easels, generation, jobs

async fn compile_spec(Body(spec): Body<EaselSpec>) -> ApiResult<Json<WorkflowGraph>> {
    Ok(Json(compile(&spec)?))
}

/// A generation request; with `wait` the call blocks until the outputs are
/// recorded and returns them.
#[derive(Deserialize)]
struct GenerateBody {
    spec: EaselSpec,
    placement: Option<Placement>,
    #[serde(default)]
    wait: bool,
}

#[derive(Serialize)]
struct GenerateResponse {
    submission: Submission,
    #[serde(skip_serializing_if = "Option::is_none")]
    outputs: Option<Vec<Generated>>,
}

fn finish(e: &Engine, submission: Submission, wait: bool) -> ApiResult<Response> {
    if !wait {
        return Ok(accepted(GenerateResponse {
            submission,
            outputs: None,
        }));
    }
    let outputs = e.complete(&submission)?;
    Ok(created(GenerateResponse {
        submission,
        outputs: Some(outputs),
    }))
}

async fn generate(State(s): State<AppState>, key: Key, Body(b): Body<GenerateBody>) -> ApiResult<Response> {
    s.mutate(key, move |e| {
        let sub = e.submit_easel(b.spec, b.placement)?;
        finish(e, sub, b.wait)
    })
    .await
}

async fn list_easels(State(s): State<AppState>) -> ApiResult<Json<Vec<SavedEasel>>> {
    s.query(|e| Ok(Json(e.project().document().easels.values().cloned().collect()))).await
}

#[derive(Deserialize)]
struct EaselBody {
    page_id: PageId,
    position: Vec2,
    spec: EaselSpec,
}

async fn create_easel(State(s): State<AppState>, key: Key, Body(b): Body<EaselBody>) -> ApiResult<Response> {
    s.mutate(key, move |e| Ok(created(e.project().save_easel(None, &b.page_id, b.position, b.spec)?)))
        .await
}

async fn get_easel(State(s): State<AppState>, Path(id): Path<EaselId>) -> ApiResult<Json<SavedEasel>> {
    s.query(move |e| Ok(Json(e.project().easel(&id)?.clone()))).await
}

async fn update_easel(
    State(s): State<AppState>,
    key: Key,
    Path(id): Path<EaselId>,
    Body(b): Body<EaselBody>,
) -> ApiResult<Json<SavedEasel>> {
    s.mutate(key, move |e| Ok(Json(e.project().save_easel(Some(&id), &b.page_id, b.position, b.spec)?)))
        .await
}

async fn delete_easel(State(s): State<AppState>, key: Key, Path(id): Path<EaselId>) -> ApiResult<StatusCode> {
    s.mutate(key, move |e| {
        e.project().delete_easel(&id)?;
        Ok(StatusCode::NO_CONTENT)
    })
    .await
}

#[derive(Deserialize, Default)]
#[serde(default)]
struct RunEaselBody {
    wait: bool,
}

/// Runs a saved easel; outputs land to the right of it.
async fn generate_easel(
    State(s): State<AppState>,
    key: Key,
    Path(id): Path<EaselId>,
    body: Option<Json<RunEaselBody>>,
) -> ApiResult<Response> {
    let wait = body.map(|Json(b)| b.wait).unwrap_or_default();
    s.mutate(key, move |e| {
        let easel = e.project().easel(&id)?.clone();
        let placement = Placement {
            page_id: easel.page_id.clone(),
            position: Vec2::new(easel.position.x + DEFAULT_ITEM_EXTENT + OUTPUT_SPACING, easel.position.y),
        };
        let sub = e.submit_easel(easel.spec, Some(placement))?;
        finish(e, sub, wait)
    })
    .await
}

#[derive(Deserialize)]
struct QuickOpBody {
    asset_id: AssetId,
    prompt: Option<String>,
    seed: Option<u64>,
    placement: Option<Placement>,
    #[serde(default)]
    wait: bool,
}

async fn quick_op(
    State(s): State<AppState>,
    key: Key,
    Path(op): Path<String>,
    Body(b): Body<QuickOpBody>,
) -> ApiResult<Response> {
    let op: QuickOpKind = op
        .parse()
        .map_err(|_| ApiError::not_found(format!("unknown quick operation {op:?}")))?;
    s.mutate(key, move |e| match e.quick_op(op, &b.asset_id, b.prompt.as_deref(), b.seed, b.placement)? {
        QuickOutcome::Local(l) => Ok(Json(json!({ "mode": "local", "result": l })).into_response()),
        QuickOutcome::Job(sub) => finish(e, sub, b.wait),
    })
    .await
}

async fn list_jobs(State(s): State<AppState>) -> Json<Vec<GenerationJob>> {
    let mut jobs = s.engine.gateway().jobs();
    jobs.sort_by_key(|j| j.submitted_at);
    Json(jobs)
}

async fn get_job(State(s): State<AppState>, Path(id): Path<JobId>) -> ApiResult<Json<GenerationJob>> {
    Ok(Json(s.engine.gateway().job(&id)?))
}

/// The job's status changes (past ones first), ending with the terminal one.
async fn watch_job(
    State(s): State<AppState>,
    Path(id): Path<JobId>,
) -> ApiResult<Sse<impl Stream<Item = Result<SseEvent, Infallible>>>> {
    let watch = s.engine.gateway().watch(&id)?;
    let (tx, rx) = tokio::sync::mpsc::unbounded_channel();
    tokio::task::spawn_blocking(move || {
        for ev in watch {
            if tx.send(ev).is_err() {
                break;
            }
        }
    });
    let stream = UnboundedReceiverStream::new(rx).map(|ev| {
        Ok(SseEvent::default()
            .event(ev.status.name())
            .json_data(&ev)
            .unwrap_or_else(|_| SseEvent::default().comment("unserializable event")))
    });
    Ok(Sse::new(stream))
}

async fn cancel_job(State(s): State<AppState>, key: Key, Path(id): Path<JobId>) -> ApiResult<Json<JobStatus>> {
    s.mutate(key, move |e| Ok(Json(e.gateway().cancel(&id)?))).await
}

/// Records (idempotently) and returns the outputs of a finished job.
async fn job_outputs(State(s): State<AppState>, Path(id): Path<JobId>) -> ApiResult<Json<Vec<Generated>>> {
    s.mutate(Key::default(), move |e| match e.settle(&id)? {
        Settled::Done(g) => Ok(Json(g)),
        Settled::Failed(reason) => Err(ApiError::conflict(format!("job {id} failed: {reason}"))),
        Settled::Cancelled => Err(ApiError::conflict(format!("job {id} was cancelled"))),
    })
    .await
}

// ---------------------------------------------------------------------
// Local generations

#[derive(Deserialize)]
struct CollageBody {
    layers: Vec<CollageLayer>,
    rect: Rect,
    placement: Option<Placement>,
}

async fn collage(State(s): State<AppState>, key: Key, Body(b): Body<CollageBody>) -> ApiResult<Response> {
    s.mutate(key, move |e| Ok(created(e.flatten_collage(&b.layers, b.rect, b.placement)?)))
        .await
}

#[derive(Deserialize)]
struct SketchBody {
    strokes: Vec<Stroke>,
    rect: Rect,
    placement: Option<Placement>,
}

async fn sketch(State(s): State<AppState>, key: Key, Body(b): Body<SketchBody>) -> ApiResult<Response> {
    s.mutate(key, move |e| Ok(created(e.rasterize_strokes(&b.strokes, b.rect, b.placement)?)))
        .await
}

// ---------------------------------------------------------------------
// Collections, layout, exhibit, search

async fn list_collections(State(s): State<AppState>) -> ApiResult<Json<Vec<Collection>>> {
    s.query(|e| Ok(Json(e.project().document().collections.values().cloned().collect())))
        .await
}

#[derive(Deserialize)]
struct CollectionBody {
    name: String,
    #[serde(default)]
    members: Vec<AssetId>,
    #[serde(default)]
    tags: Vec<String>,
}

async fn create_collection(State(s): State<AppState>, key: Key, Body(b): Body<CollectionBody>) -> ApiResult<Response> {
    s.mutate(key, move |e| Ok(created(e.project().create_collection(&b.name, &b.members, &b.tags)?)))
        .await
}

async fn get_collection(State(s): State<AppState>, Path(id): Path<CollectionId>) -> ApiResult<Json<Collection>> {
    s.query(move |e| Ok(Json(e.project().collection(&id)?.clone()))).await
}

async fn delete_collection(State(s): State<AppState>, key: Key, Path(id): Path<CollectionId>) -> ApiResult<StatusCode> {
    s.mutate(key, move |e| {
        e.project().delete_collection(&id)?;
        Ok(StatusCode::NO_CONTENT)
    })
    .await
}

#[derive(Deserialize)]
struct MembersBody {
    #[serde(default)]
    members: Vec<AssetId>,
    #[serde(default)]
    tags: Vec<String>,
}

async fn extend_collection(
    State(s): State<AppState>,
    key: Key,
    Path(id): Path<CollectionId>,
    Body(b): Body<MembersBody>,
) -> ApiResult<Json<Collection>> {
    s.mutate(key, move |e| Ok(Json(e.project().extend_collection(&id, &b.members, &b.tags)?)))
        .await
}

#[derive(Deserialize)]
struct InstantiateBody {
    asset_id: AssetId,
    page_id: PageId,
    position: Vec2,
}

/// Pulls a member onto a page; the new item is a copy in provenance.
async fn instantiate(
    State(s): State<AppState>,
    key: Key,
    Path(id): Path<CollectionId>,
    Body(b): Body<InstantiateBody>,
) -> ApiResult<Response> {
    s.mutate(key, move |e| {
        let mut p = e.project();
        let item = p.instantiate_from_collection(&id, &b.asset_id, &b.page_id, b.position)?;
        let node = p.node_of_item(&item.item_id)?.clone();
        Ok(created(json!({ "item": item, "node": node })))
    })
    .await
}

#[derive(Deserialize)]
struct PackBody {
    items: Vec<ItemId>,
    #[serde(default)]
    gap: f64,
}

#[derive(Serialize)]
struct Packed {
    item_id: ItemId,
    position: Vec2,
}

async fn pack(State(s): State<AppState>, key: Key, Body(b): Body<PackBody>) -> ApiResult<Json<Vec<Packed>>> {
    s.mutate(key, move |e| {
        Ok(Json(
            e.project()
                .pack_grid(&b.items, b.gap)?
                .into_iter()
                .map(|(item_id, position)| Packed { item_id, position })
                .collect(),
        ))
    })
    .await
}

async fn exhibit(State(s): State<AppState>) -> ApiResult<Json<Value>> {
    s.query(|e| Ok(Json(json!(e.project().document().exhibit)))).await
}

async fn exhibit_manifest(State(s): State<AppState>) -> ApiResult<Json<Value>> {
    s.query(|e| Ok(Json(json!(e.project().exhibit_manifest())))).await
}

#[derive(Deserialize)]
struct ExhibitAddBody {
    asset_id: AssetId,
    #[serde(default)]
    caption: String,
}

async fn exhibit_add(State(s): State<AppState>, key: Key, Body(b): Body<ExhibitAddBody>) -> ApiResult<Response> {
    s.mutate(key, move |e| {
        let entry_id = e.project().exhibit_add(&b.asset_id, &b.caption)?;
        Ok(created(json!({ "entry_id": entry_id })))
    })
    .await
}

#[derive(Deserialize)]
struct ExhibitUpdateBody {
    caption: Option<String>,
    index: Option<usize>,
}

async fn exhibit_update(
    State(s): State<AppState>,
    key: Key,
    Path(id): Path<EntryId>,
    Body(b): Body<ExhibitUpdateBody>,
) -> ApiResult<Json<Value>> {
    s.mutate(key, move |e| {
        let mut p = e.project();
        if let Some(c) = &b.caption {
            p.exhibit_caption(&id, c)?;
        }
        if let Some(i) = b.index {
            p.exhibit_reorder(&id, i)?;
        }
        Ok(Json(json!(p.document().exhibit)))
    })
    .await
}

async fn exhibit_remove(State(s): State<AppState>, key: Key, Path(id): Path<EntryId>) -> ApiResult<StatusCode> {
    s.mutate(key, move |e| {
        e.project().exhibit_remove(&id)?;
        Ok(StatusCode::NO_CONTENT)
    })
    .await
}

#[derive(Deserialize)]
struct SearchQuery {
    q: String,
}

async fn search(State(s): State<AppState>, Query(q): Query<SearchQuery>) -> ApiResult<Json<Value>> {
    s.query(move |e| Ok(Json(json!(e.project().search(&q.q))))).await
}
