//! The engine: one project, one job gateway and one preprocessor.
//!
//! Generation requests flow compile → begin run (journaled) → submit →
//! watch → fetch outputs → record generation (journaled). Input files the
//! graph names (`<asset>.png`, `<asset>.<map>.png`, the inactive-slot
//! placeholder) are resolved to bytes here and handed to the backend as
//! uploads. Every raster output is preprocessed so that search and
//! structure slots work on it immediately.

use std::collections::BTreeMap;
use std::sync::mpsc::RecvTimeoutError;
use std::sync::{Arc, Weak};
use std::time::Duration;

use image::RgbaImage;
use parking_lot::{Mutex, MutexGuard, ReentrantMutex};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::asset::{Asset, Origin};
use crate::clock::Clock;
use crate::document::{Placement, RunStatus};
use crate::easel::compile::{CompileError, INACTIVE_IMAGE};
use crate::easel::graph::WorkflowGraph;
use crate::easel::quick::{compile_quick_op, LocalResult, QuickOpError, QuickOpKind, QuickPlan, Recipe};
use crate::easel::spec::{EaselSpec, MapKind};
use crate::easel::template::{Params, TemplateSet};
use crate::gateway::mock::MockDriver;
use crate::gateway::{Gateway, GatewayConfig, GatewayError, JobStatus, Upload};
use crate::ids::{AssetId, JobId, NodeId, RunId};
use crate::media::{self, AssetKind};
use crate::metadata::{map_kind_for_prefix, Metadata, MetadataError, MockPreprocessor, Preprocessor};
use crate::project::{Generated, OutputPayload, Project, ProjectError};
use crate::provenance::CollageLayer;
use crate::raster::{Rect, Stroke};

/// Side of the transparent placeholder uploaded for inactive image slots.
pub const PLACEHOLDER_SIZE: u32 = 64;
/// Template that captions an image and computes its four control maps.
pub const PREPROCESS_TEMPLATE: &str = "preprocess_metadata";

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Project(#[from] ProjectError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Metadata(#[from] MetadataError),
    #[error(transparent)]
    QuickOp(#[from] QuickOpError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error("graph refers to {0}, which is neither an asset nor a control map")]
    UnknownUpload(String),
    #[error("job {job} failed: {reason}")]
    JobFailed { job: JobId, reason: String },
    #[error("job {0} was cancelled")]
    JobCancelled(JobId),
}

pub type Result<T, E = EngineError> = std::result::Result<T, E>;

/// A run handed to the gateway.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submission {
    pub run_id: RunId,
    pub job_id: JobId,
    pub graph_hash: String,
}

/// What a quick operation turned into.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum QuickOutcome {
    Job(Submission),
    Local(LocalResult),
}

/// Terminal state of a job after its outputs were recorded.
#[derive(Debug, Clone, PartialEq)]
pub enum Settled {
    Done(Vec<Generated>),
    Failed(String),
    Cancelled,
}

pub struct Engine {
    project: Mutex<Project>,
    gateway: Gateway,
    preprocessor: Arc<dyn Preprocessor>,
    /// Serializes multi-step mutations so an idempotency key lands on the
    /// request's own record.
    writer: ReentrantMutex<()>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine").field("gateway", &self.gateway).finish_non_exhaustive()
    }
}

/// Placeholder for inactive image slots: a small transparent PNG.
pub fn placeholder_png() -> Vec<u8> {
    media::encode_png(&RgbaImage::new(PLACEHOLDER_SIZE, PLACEHOLDER_SIZE), &[])
}

/// Seed for a quick operation invoked without one: stable per (op, asset).
pub fn derived_seed(op: QuickOpKind, asset: &AssetId) -> u64 {
    let h = Sha256::digest(format!("{op}/{asset}").as_bytes());
    u64::from_be_bytes(h[..8].try_into().expect("8 bytes")) >> 16
}

/// Files a graph loads by name, in node order.
pub fn referenced_files(graph: &WorkflowGraph) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for node in graph.nodes.values() {
        if matches!(node.class_type.as_str(), "LoadImage" | "LoadImageMask") {
            if let Some(name) = node.literal("image").and_then(|v| v.as_str()) {
                if !names.iter().any(|n| n == name) {
                    names.push(name.to_owned());
                }
            }
        }
    }
    names
}

/// Splits `asset-000001.depth.png` into the asset and map kind.
fn parse_file_name(name: &str) -> Option<(AssetId, Option<MapKind>)> {
    let stem = name.strip_suffix(".png")?;
    match stem.split_once('.') {
        Some((asset, map)) => Some((AssetId::from(asset), Some(map.parse().ok()?))),
        None => Some((AssetId::from(stem), None)),
    }
}

fn preprocessing_done(asset: &Asset) -> bool {
    match asset.kind {
        AssetKind::Video => asset.caption.is_some(),
        _ => asset.metadata_complete(),
    }
}

impl Engine {
    pub fn new(project: Project, gateway: Gateway, preprocessor: Arc<dyn Preprocessor>) -> Self {
        Self {
            project: Mutex::new(project),
            gateway,
            preprocessor,
            writer: ReentrantMutex::new(()),
        }
    }

    /// Runs `f` as one client request: no other request or background
    /// settlement commits meanwhile, and `key` (if any) is journaled with
    /// the first record `f` commits.
    pub fn with_key<T>(&self, key: Option<String>, f: impl FnOnce(&Self) -> T) -> T {
        let _writer = self.writer.lock();
        self.project().set_next_key(key);
        let out = f(self);
        self.project().set_next_key(None);
        out
    }

    /// An in-memory engine on the mock backend with mock preprocessing.
    pub fn mock(clock: Arc<dyn Clock>) -> Self {
        let gateway = Gateway::new(Arc::new(MockDriver::default()), clock.clone(), GatewayConfig::default());
        Self::new(Project::in_memory(clock), gateway, Arc::new(MockPreprocessor))
    }

    /// Exclusive access to the project for queries and direct mutations.
    pub fn project(&self) -> MutexGuard<'_, Project> {
        self.project.lock()
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    // -----------------------------------------------------------------
    // Ingest and metadata

    /// Ingests an imported payload and precomputes its metadata.
    pub fn ingest(&self, bytes: &[u8], kind: AssetKind) -> Result<Asset> {
        let asset = self.project().ingest(bytes, kind, Origin::Imported)?;
        self.after_ingest(asset)
    }

    fn after_ingest(&self, asset: Asset) -> Result<Asset> {
        if asset.kind.is_raster() || asset.kind == AssetKind::Video {
            self.preprocess(&asset.asset_id)
        } else {
            Ok(asset)
        }
    }

    /// Captions an image and stores its four control maps. Assets that are
    /// already complete are returned unchanged.
    pub fn preprocess(&self, id: &AssetId) -> Result<Asset> {
        let (asset, bytes) = {
            let p = self.project();
            let asset = p.asset(id)?.clone();
            if !(asset.kind.is_raster() || asset.kind == AssetKind::Video) {
                return Err(MetadataError::WrongAssetKind(asset.kind.as_str()).into());
            }
            if preprocessing_done(&asset) {
                return Ok(asset);
            }
            let bytes = p.asset_bytes(id)?;
            (asset, bytes)
        };
        let meta = self.preprocessor.preprocess(&asset, &bytes)?;
        Ok(self.project().apply_metadata(id, meta)?)
    }

    // -----------------------------------------------------------------
    // Generation

    /// Bytes for every file `graph` loads.
    pub fn uploads_for(&self, graph: &WorkflowGraph) -> Result<Vec<Upload>> {
        let mut out = Vec::new();
        for name in referenced_files(graph) {
            if name == INACTIVE_IMAGE {
                out.push(Upload {
                    name,
                    bytes: placeholder_png(),
                });
                continue;
            }
            let (asset, map) = parse_file_name(&name).ok_or_else(|| EngineError::UnknownUpload(name.clone()))?;
            let bytes = match map {
                None => self
                    .project()
                    .asset_bytes(&asset)
                    .map_err(|_| EngineError::UnknownUpload(name.clone()))?,
                Some(kind) => {
                    let mut hash = self.project().asset(&asset)?.control_maps.get(&kind).cloned();
                    if hash.is_none() {
                        hash = self.preprocess(&asset)?.control_maps.get(&kind).cloned();
                    }
                    let hash = hash.ok_or_else(|| EngineError::UnknownUpload(name.clone()))?;
                    self.project().blobs().get(&hash).map_err(ProjectError::from)?
                }
            };
            out.push(Upload { name, bytes });
        }
        Ok(out)
    }

    /// Journals a run for `recipe` and queues its graph.
    pub fn submit(
        &self,
        recipe: Recipe,
        placement: Option<Placement>,
        quick_op: Option<(QuickOpKind, AssetId)>,
    ) -> Result<Submission> {
        let graph = recipe.compile()?;
        let uploads = self.uploads_for(&graph)?;
        let run = self.project().begin_run(&recipe, &graph, quick_op, placement)?;
        let graph_hash = graph.hash();
        match self.gateway.submit(graph, run.run_id.clone(), uploads) {
            Ok(job_id) => Ok(Submission {
                run_id: run.run_id,
                job_id,
                graph_hash,
            }),
            Err(e) => {
                self.project().fail_run(&run.run_id, &e.to_string())?;
                Err(e.into())
            }
        }
    }

    pub fn submit_easel(&self, spec: EaselSpec, placement: Option<Placement>) -> Result<Submission> {
        self.submit(Recipe::Easel(spec), placement, None)
    }

    /// Runs quick operation `op` on `asset`: local ops return immediately,
    /// the rest are queued like any other generation.
    pub fn quick_op(
        &self,
        op: QuickOpKind,
        asset: &AssetId,
        prompt: Option<&str>,
        seed: Option<u64>,
        placement: Option<Placement>,
    ) -> Result<QuickOutcome> {
        let seed = seed.unwrap_or_else(|| derived_seed(op, asset));
        let mut a = self.project().asset(asset)?.clone();
        if op == QuickOpKind::Stencil && op.accepts(a.kind) && !a.metadata_complete() {
            a = self.preprocess(asset)?;
        }
        let plan = {
            let p = self.project();
            compile_quick_op(op, &a, prompt, seed, p.blobs())?
        };
        match plan {
            QuickPlan::Local(result) => Ok(QuickOutcome::Local(result)),
            QuickPlan::Generate { recipe, .. } => Ok(QuickOutcome::Job(self.submit(
                recipe,
                placement,
                Some((op, asset.clone())),
            )?)),
        }
    }

    /// Blocks until the job is terminal (pumping the queue when no
    /// background dispatcher runs).
    pub fn wait(&self, job: &JobId) -> Result<JobStatus> {
        Ok(self.gateway.wait(job)?)
    }

    /// Ingests the outputs of a done job and records the generation.
    /// Calling it again returns the same assets.
    pub fn fetch_outputs(&self, job: &JobId) -> Result<Vec<Generated>> {
        let run_id = self.gateway.job(job)?.run_id;
        let outputs = self.gateway.fetch_outputs(job)?;
        let payloads: Vec<OutputPayload> = outputs
            .into_iter()
            .map(|o| OutputPayload {
                kind: o.kind,
                bytes: o.bytes,
            })
            .collect();
        let generated = self.project().record_generation(&run_id, &payloads)?;
        for g in &generated {
            if g.asset.kind.is_raster() || g.asset.kind == AssetKind::Video {
                self.preprocess(&g.asset.asset_id)?;
            }
        }
        generated
            .iter()
            .map(|g| {
                let p = self.project();
                Ok(Generated {
                    asset: p.asset(&g.asset.asset_id)?.clone(),
                    node: g.node.clone(),
                    item: g.item.as_ref().map(|i| p.item(&i.item_id).cloned()).transpose()?,
                })
            })
            .collect()
    }

    /// Records the outcome of a terminal job in the project.
    pub fn settle(&self, job: &JobId) -> Result<Settled> {
        let _writer = self.writer.lock();
        let j = self.gateway.job(job)?;
        match j.status {
            JobStatus::Done { .. } => Ok(Settled::Done(self.fetch_outputs(job)?)),
            JobStatus::Failed { reason } => {
                self.fail_if_pending(&j.run_id, &reason)?;
                Ok(Settled::Failed(reason))
            }
            JobStatus::Cancelled => {
                self.fail_if_pending(&j.run_id, "cancelled")?;
                Ok(Settled::Cancelled)
            }
            s => Err(GatewayError::NotDone {
                job: job.clone(),
                state: s.name(),
            }
            .into()),
        }
    }

    fn fail_if_pending(&self, run: &RunId, reason: &str) -> Result<()> {
        let mut p = self.project();
        if p.document().runs.get(run).is_some_and(|r| r.status == RunStatus::Submitted) {
            p.fail_run(run, reason)?;
        }
        Ok(())
    }

    /// Waits for `submission` and records its outputs.
    pub fn complete(&self, submission: &Submission) -> Result<Vec<Generated>> {
        self.wait(&submission.job_id)?;
        match self.settle(&submission.job_id)? {
            Settled::Done(g) => Ok(g),
            Settled::Failed(reason) => Err(EngineError::JobFailed {
                job: submission.job_id.clone(),
                reason,
            }),
            Settled::Cancelled => Err(EngineError::JobCancelled(submission.job_id.clone())),
        }
    }

    /// Compiles, submits, waits and records in one call.
    pub fn generate(&self, spec: EaselSpec, placement: Option<Placement>) -> Result<Vec<Generated>> {
        let s = self.submit_easel(spec, placement)?;
        self.complete(&s)
    }

    /// Quick operation run to completion; local results come back as-is.
    pub fn run_quick_op(
        &self,
        op: QuickOpKind,
        asset: &AssetId,
        prompt: Option<&str>,
        placement: Option<Placement>,
    ) -> Result<Result<Vec<Generated>, LocalResult>> {
        match self.quick_op(op, asset, prompt, None, placement)? {
            QuickOutcome::Job(s) => Ok(Ok(self.complete(&s)?)),
            QuickOutcome::Local(l) => Ok(Err(l)),
        }
    }

    /// Flattens collage layers into a new image (computed in-process).
    pub fn flatten_collage(&self, layers: &[CollageLayer], rect: Rect, placement: Option<Placement>) -> Result<Generated> {
        let g = self.project().flatten_collage(layers, rect, placement)?;
        self.refresh(g)
    }

    /// Rasterizes strokes into a new image (computed in-process).
    pub fn rasterize_strokes(&self, strokes: &[Stroke], rect: Rect, placement: Option<Placement>) -> Result<Generated> {
        let g = self.project().rasterize_strokes(strokes, rect, placement)?;
        self.refresh(g)
    }

    fn refresh(&self, g: Generated) -> Result<Generated> {
        let asset = self.preprocess(&g.asset.asset_id)?;
        Ok(Generated { asset, ..g })
    }

    /// The graph the stored recipe of `node` compiles to today.
    pub fn recompile(&self, node: &NodeId) -> Result<Option<WorkflowGraph>> {
        match self.project().recreate(node)? {
            crate::provenance::Snapshot::Recipe(r) => Ok(Some(r.compile()?)),
            _ => Ok(None),
        }
    }

    /// Starts a background thread that settles every job as soon as it
    /// reaches a terminal status, so outputs land on the canvas without a
    /// client calling [`Engine::fetch_outputs`].
    pub fn spawn_settler(self: &Arc<Self>) {
        let rx = self.gateway.subscribe();
        let weak: Weak<Self> = Arc::downgrade(self);
        std::thread::Builder::new()
            .name("engine-settler".into())
            .spawn(move || loop {
                match rx.recv_timeout(Duration::from_millis(200)) {
                    Ok(ev) if ev.status.is_terminal() => {
                        let Some(engine) = weak.upgrade() else { return };
                        // Jobs without a journaled run (metadata extraction
                        // on the same gateway) are collected by their caller.
                        if !engine.project().document().runs.contains_key(&ev.run_id) {
                            continue;
                        }
                        if let Err(e) = engine.settle(&ev.job_id) {
                            log::error!("settling {}: {e}", ev.job_id);
                        }
                    }
                    Ok(_) => {}
                    Err(RecvTimeoutError::Timeout) => {
                        if weak.strong_count() == 0 {
                            return;
                        }
                    }
                    Err(RecvTimeoutError::Disconnected) => return,
                }
            })
            .expect("spawn settler thread");
    }
}

/// Preprocessing on the generation backend: runs the metadata template
/// through the gateway and reads the caption and maps from its outputs.
pub struct GatewayPreprocessor {
    gateway: Gateway,
}

impl GatewayPreprocessor {
    pub fn new(gateway: Gateway) -> Self {
        Self { gateway }
    }

    pub fn graph_for(asset: &AssetId) -> WorkflowGraph {
        let mut p = Params::new();
        p.set("input_image.file", crate::easel::compile::input_file(asset));
        TemplateSet::builtin()
            .get(PREPROCESS_TEMPLATE)
            .and_then(|t| t.instantiate(&p))
            .expect("the builtin preprocessing template instantiates")
    }
}

impl Preprocessor for GatewayPreprocessor {
    fn preprocess(&self, asset: &Asset, bytes: &[u8]) -> Result<Metadata, MetadataError> {
        if asset.kind == AssetKind::Video {
            // Control maps need pixels; captioning video frames is not
            // wired to a backend template, so fall back to the stand-in.
            return MockPreprocessor.preprocess(asset, bytes);
        }
        if !asset.kind.is_raster() {
            return Err(MetadataError::WrongAssetKind(asset.kind.as_str()));
        }
        let graph = Self::graph_for(&asset.asset_id);
        let uploads = vec![Upload {
            name: crate::easel::compile::input_file(&asset.asset_id),
            bytes: bytes.to_vec(),
        }];
        let unavailable = |e: GatewayError| MetadataError::BackendUnavailable(e.to_string());
        let job = self
            .gateway
            .submit(graph.clone(), RunId::from(format!("metadata-{}", asset.asset_id)), uploads)
            .map_err(unavailable)?;
        match self.gateway.wait(&job).map_err(unavailable)? {
            JobStatus::Done { .. } => {}
            JobStatus::Failed { reason } => return Err(MetadataError::BackendUnavailable(reason)),
            s => return Err(MetadataError::BackendUnavailable(format!("metadata job {}", s.name()))),
        }
        let mut caption = None;
        let mut maps = BTreeMap::new();
        for out in self.gateway.fetch_outputs(&job).map_err(unavailable)? {
            match out.kind {
                AssetKind::Text => caption = Some(String::from_utf8_lossy(&out.bytes).trim().to_owned()),
                _ => {
                    let prefix = graph.nodes[&out.node]
                        .literal("filename_prefix")
                        .and_then(|v| v.as_str())
                        .unwrap_or_default();
                    if let Some(kind) = map_kind_for_prefix(prefix) {
                        maps.insert(kind, out.bytes);
                    }
                }
            }
        }
        Ok(Metadata {
            caption: caption.ok_or_else(|| MetadataError::BackendUnavailable("backend returned no caption".into()))?,
            maps,
        })
    }
}
