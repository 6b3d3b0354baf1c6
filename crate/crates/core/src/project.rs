//! The single-writer facade over one canvas project.
//!
//! Every public mutation validates its inputs, turns itself into one
//! [`Record`] (a batch of events), appends that record to the journal and
//! only then applies it to the in-memory [`Document`]. A mutation that
//! returns `Ok` is therefore durable; one that fails leaves no trace.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::asset::{Asset, CanvasItem, Origin};
use crate::blob::{BlobError, BlobStore};
use crate::clock::{Clock, SystemClock};
use crate::document::{Document, Event, Page, Placement, RunRecord, RunStatus, SavedEasel};
use crate::easel::compile::CompileError;
use crate::easel::graph::WorkflowGraph;
use crate::easel::quick::{QuickOpKind, Recipe};
use crate::easel::spec::{EaselSpec, SlotRole};
use crate::ids::{AssetId, CollectionId, EaselId, EntryId, ItemId, NodeId, PageId, RunId, Timestamp, Vec2};
use crate::journal::{self, DocumentSnapshot, Journal, JournalError, Record};
use crate::media::{self, AssetKind, ProbeError};
use crate::metadata::{Metadata, SearchHit, SearchIndex};
use crate::organization::{pack_grid, Collection, ExhibitError, ExhibitManifest, ManifestEntry, PackError, PackInput};
use crate::provenance::{
    self, CollageLayer, DagExport, HistoryEntry, Lineage, NodeKind, Parent, ProjectionError, ProvenanceError,
    ProvenanceNode, Snapshot, TimelineEntry, TrailPoint,
};
use crate::raster::{self, Layer, Rect, Stroke};

/// Longest side, in canvas units, of an item placed without an explicit
/// size.
pub const DEFAULT_ITEM_EXTENT: f64 = 256.0;
/// Gap between outputs dropped next to each other.
pub const OUTPUT_SPACING: f64 = 16.0;

#[derive(Debug, thiserror::Error)]
pub enum ProjectError {
    #[error("payload is empty")]
    EmptyPayload,
    #[error("payload does not decode as {kind}: {reason}")]
    UndecodablePayload { kind: &'static str, reason: String },
    #[error("unsupported asset kind {0:?}")]
    UnsupportedKind(String),
    #[error("unknown asset {0}")]
    UnknownAsset(AssetId),
    #[error("unknown item {0}")]
    UnknownItem(ItemId),
    #[error("unknown run {0}")]
    UnknownRun(RunId),
    #[error("unknown easel {0}")]
    UnknownEasel(EaselId),
    #[error("unknown collection {0}")]
    UnknownCollection(CollectionId),
    #[error("asset {asset} is not in collection {collection}")]
    NotAMember { collection: CollectionId, asset: AssetId },
    #[error("input asset {0} does not exist")]
    UnknownInputAsset(AssetId),
    #[error("size components must be positive (got {0}x{1})")]
    NonPositiveSize(f64, f64),
    #[error("{field} = {value} is outside [0, 1]")]
    OutOfRange { field: &'static str, value: f64 },
    #[error("layer asset {0} is not an image")]
    NonImageLayer(AssetId),
    #[error("a collage needs at least one layer")]
    EmptyLayerList,
    #[error("canvas rect must have positive width and height")]
    NonPositiveRect,
    #[error("run {0} produced no outputs")]
    NoOutputs(RunId),
    #[error("{0} is not produced by any easel")]
    NotRecreatable(NodeId),
    #[error(transparent)]
    Provenance(#[from] ProvenanceError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error(transparent)]
    Exhibit(#[from] ExhibitError),
    #[error(transparent)]
    Pack(#[from] PackError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Blob(#[from] BlobError),
    #[error(transparent)]
    Journal(#[from] JournalError),
    #[error("export failed: {0}")]
    Export(#[from] std::io::Error),
}

impl From<ProbeError> for ProjectError {
    fn from(e: ProbeError) -> Self {
        match e {
            ProbeError::Empty => ProjectError::EmptyPayload,
            ProbeError::Undecodable(kind, reason) => ProjectError::UndecodablePayload { kind, reason },
        }
    }
}

pub type Result<T, E = ProjectError> = std::result::Result<T, E>;

/// Output of one generation, ready to ingest.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputPayload {
    pub kind: AssetKind,
    pub bytes: Vec<u8>,
}

/// An asset produced by a run, with its provenance node and (if the run had
/// a placement) the item showing it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generated {
    pub asset: Asset,
    pub node: ProvenanceNode,
    pub item: Option<CanvasItem>,
}

#[derive(Debug, Clone)]
pub struct ProjectOptions {
    /// `fsync` after every journal append.
    pub sync: bool,
    /// Write a snapshot every this many records (0 disables).
    pub snapshot_every: u64,
}

impl Default for ProjectOptions {
    fn default() -> Self {
        Self {
            sync: false,
            snapshot_every: 500,
        }
    }
}

type Listener = Box<dyn Fn(&Record) + Send + Sync>;

pub struct Project {
    doc: Document,
    seq: u64,
    keys: BTreeMap<String, u64>,
    /// Idempotency key attached to the next committed record.
    next_key: Option<String>,
    index: SearchIndex,
    blobs: Arc<BlobStore>,
    journal: Journal,
    dir: Option<PathBuf>,
    clock: Arc<dyn Clock>,
    options: ProjectOptions,
    listeners: Vec<Listener>,
}

impl std::fmt::Debug for Project {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Project")
            .field("seq", &self.seq)
            .field("dir", &self.dir)
            .finish_non_exhaustive()
    }
}

fn check_unit(field: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(ProjectError::OutOfRange { field, value })
    }
}

fn check_size(size: Vec2) -> Result<()> {
    if size.x > 0.0 && size.y > 0.0 && size.x.is_finite() && size.y.is_finite() {
        Ok(())
    } else {
        Err(ProjectError::NonPositiveSize(size.x, size.y))
    }
}

impl Project {
    /// A project that lives only in memory.
    pub fn in_memory(clock: Arc<dyn Clock>) -> Self {
        Self {
            doc: Document::new(),
            seq: 0,
            keys: BTreeMap::new(),
            next_key: None,
            index: SearchIndex::new(),
            blobs: Arc::new(BlobStore::in_memory()),
            journal: Journal::in_memory(),
            dir: None,
            clock,
            options: ProjectOptions {
                snapshot_every: 0,
                ..ProjectOptions::default()
            },
            listeners: Vec::new(),
        }
    }

    /// Opens or creates a project in `dir`: blobs under `dir/blobs`, the
    /// journal and snapshot at the top level.
    pub fn open(dir: impl AsRef<Path>, clock: Arc<dyn Clock>, options: ProjectOptions) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let blobs = Arc::new(BlobStore::open(dir.join("blobs"))?);
        let (journal, loaded) = Journal::open(&dir, options.sync)?;
        let (mut doc, mut seq) = match loaded.snapshot {
            Some(s) => (s.document, s.seq),
            None => (Document::new(), 0),
        };
        let mut keys = BTreeMap::new();
        for rec in &loaded.records {
            apply_record(&mut doc, &mut keys, rec);
            seq = rec.seq;
        }
        let mut project = Self {
            doc,
            seq,
            keys,
            next_key: None,
            index: SearchIndex::new(),
            blobs,
            journal,
            dir: Some(dir),
            clock,
            options,
            listeners: Vec::new(),
        };
        project.keys.extend(project.doc_keys_from_snapshot());
        project.rebuild_index();
        Ok(project)
    }

    /// Opens with the system clock and default options.
    pub fn open_default(dir: impl AsRef<Path>) -> Result<Self> {
        Self::open(dir, Arc::new(SystemClock), ProjectOptions::default())
    }

    fn doc_keys_from_snapshot(&self) -> BTreeMap<String, u64> {
        // Keys of records folded into a snapshot live in the journal only.
        match &self.dir {
            Some(dir) => journal::read_all_records(dir)
                .map(|rs| rs.into_iter().filter_map(|r| r.key.map(|k| (k, r.seq))).collect())
                .unwrap_or_default(),
            None => BTreeMap::new(),
        }
    }

    fn rebuild_index(&mut self) {
        let ids: Vec<AssetId> = self.doc.assets.keys().cloned().collect();
        for id in ids {
            self.index.index(&id, self.doc.indexed_texts(&id));
        }
    }

    pub fn document(&self) -> &Document {
        &self.doc
    }

    pub fn blobs(&self) -> &Arc<BlobStore> {
        &self.blobs
    }

    pub fn seq(&self) -> u64 {
        self.seq
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn journal_mut(&mut self) -> &mut Journal {
        &mut self.journal
    }

    /// Sequence number of the record that used idempotency key `key`.
    pub fn record_for_key(&self, key: &str) -> Option<u64> {
        self.keys.get(key).copied()
    }

    /// Attaches `key` to the next committed record (for callers that reach
    /// the project through helpers without a key parameter).
    pub fn set_next_key(&mut self, key: Option<String>) {
        self.next_key = key;
    }

    /// Registers a callback run after every committed record, in order.
    pub fn subscribe(&mut self, listener: impl Fn(&Record) + Send + Sync + 'static) {
        self.listeners.push(Box::new(listener));
    }

    /// Strictly increasing: never earlier than the last record.
    fn tick(&self) -> Timestamp {
        Timestamp(self.clock.now().0.max(self.doc.last_at.0 + 1))
    }

    fn commit(&mut self, at: Timestamp, key: Option<String>, events: Vec<Event>) -> Result<u64> {
        let rec = Record {
            seq: self.seq + 1,
            at,
            key: key.or_else(|| self.next_key.take()),
            events,
        };
        self.journal.append(&rec)?;
        self.seq = rec.seq;
        apply_record(&mut self.doc, &mut self.keys, &rec);
        let touched: BTreeSet<AssetId> = rec.events.iter().filter_map(indexed_asset).collect();
        for a in touched {
            self.index.index(&a, self.doc.indexed_texts(&a));
        }
        for l in &self.listeners {
            l(&rec);
        }
        if self.options.snapshot_every > 0 && self.seq % self.options.snapshot_every == 0 {
            self.snapshot()?;
        }
        Ok(rec.seq)
    }

    /// Writes a snapshot of the current state (file-backed projects only).
    pub fn snapshot(&self) -> Result<()> {
        if let Some(dir) = &self.dir {
            journal::write_snapshot(
                dir,
                &DocumentSnapshot {
                    seq: self.seq,
                    document: self.doc.clone(),
                },
            )?;
        }
        Ok(())
    }

    // -----------------------------------------------------------------
    // Lookups

    pub fn asset(&self, id: &AssetId) -> Result<&Asset> {
        self.doc.assets.get(id).ok_or_else(|| ProjectError::UnknownAsset(id.clone()))
    }

    pub fn item(&self, id: &ItemId) -> Result<&CanvasItem> {
        self.doc.items.get(id).ok_or_else(|| ProjectError::UnknownItem(id.clone()))
    }

    pub fn node(&self, id: &NodeId) -> Result<&ProvenanceNode> {
        Ok(self.doc.provenance.get(id)?)
    }

    pub fn node_of_item(&self, id: &ItemId) -> Result<&ProvenanceNode> {
        self.item(id)?;
        self.doc
            .node_of_item(id)
            .ok_or_else(|| ProjectError::UnknownItem(id.clone()))
    }

    pub fn run(&self, id: &RunId) -> Result<&RunRecord> {
        self.doc.runs.get(id).ok_or_else(|| ProjectError::UnknownRun(id.clone()))
    }

    pub fn asset_bytes(&self, id: &AssetId) -> Result<Vec<u8>> {
        Ok(self.blobs.get(&self.asset(id)?.blob)?)
    }

    // -----------------------------------------------------------------
    // Pages and assets

    pub fn create_page(&mut self, name: &str) -> Result<Page> {
        let at = self.tick();
        let page = Page {
            page_id: PageId::from_seq(self.doc.counters.page + 1),
            name: name.to_owned(),
            created_at: at,
        };
        self.commit(at, None, vec![Event::PageCreated { page: page.clone() }])?;
        Ok(page)
    }

    fn page_event(&self, page: &PageId, at: Timestamp) -> Option<Event> {
        (!self.doc.pages.contains_key(page)).then(|| Event::PageCreated {
            page: Page {
                page_id: page.clone(),
                name: page.to_string(),
                created_at: at,
            },
        })
    }

    fn new_asset(&self, bytes: &[u8], kind: AssetKind, origin: Origin, at: Timestamp, offset: u64) -> Result<Asset> {
        let probe = media::probe(kind, bytes)?;
        let (blob, _) = self.blobs.put(bytes)?;
        Ok(Asset {
            asset_id: AssetId::from_seq(self.doc.counters.asset + 1 + offset),
            kind,
            blob,
            mime: probe.mime.to_owned(),
            dims: probe.dims,
            duration: probe.duration,
            caption: probe.text,
            control_maps: BTreeMap::new(),
            origin,
            created_at: at,
        })
    }

    /// Stores `bytes` once (content-addressed) and registers a new asset.
    pub fn ingest(&mut self, bytes: &[u8], kind: AssetKind, origin: Origin) -> Result<Asset> {
        self.ingest_keyed(bytes, kind, origin, None)
    }

    pub fn ingest_keyed(&mut self, bytes: &[u8], kind: AssetKind, origin: Origin, key: Option<String>) -> Result<Asset> {
        if let Origin::QuickOp { parent, .. } = &origin {
            self.asset(parent)?;
        }
        let at = self.tick();
        let asset = self.new_asset(bytes, kind, origin, at, 0)?;
        self.commit(at, key, vec![Event::AssetIngested { asset: asset.clone() }])?;
        Ok(asset)
    }

    /// Stores precomputed caption and control maps. A no-op when the asset
    /// already has complete metadata.
    pub fn apply_metadata(&mut self, id: &AssetId, meta: Metadata) -> Result<Asset> {
        let asset = self.asset(id)?;
        if asset.metadata_complete() {
            return Ok(asset.clone());
        }
        let mut maps = BTreeMap::new();
        for (kind, png) in &meta.maps {
            maps.insert(*kind, self.blobs.put(png)?.0);
        }
        let at = self.tick();
        self.commit(
            at,
            None,
            vec![Event::AssetMetadataUpdated {
                asset_id: id.clone(),
                caption: Some(meta.caption),
                control_maps: maps,
            }],
        )?;
        Ok(self.asset(id)?.clone())
    }

    /// Replaces an asset's caption (and reindexes it).
    pub fn set_caption(&mut self, id: &AssetId, caption: &str) -> Result<Asset> {
        self.asset(id)?;
        let at = self.tick();
        self.commit(
            at,
            None,
            vec![Event::AssetMetadataUpdated {
                asset_id: id.clone(),
                caption: Some(caption.to_owned()),
                control_maps: BTreeMap::new(),
            }],
        )?;
        Ok(self.asset(id)?.clone())
    }

    // -----------------------------------------------------------------
    // Canvas items

    /// Size that fits an asset into a `DEFAULT_ITEM_EXTENT` square.
    pub fn default_size(&self, asset: &Asset) -> Vec2 {
        match asset.dims {
            Some(d) if d.width > 0 && d.height > 0 => {
                let s = DEFAULT_ITEM_EXTENT / d.width.max(d.height) as f64;
                Vec2::new(d.width as f64 * s, d.height as f64 * s)
            }
            _ => Vec2::new(DEFAULT_ITEM_EXTENT, DEFAULT_ITEM_EXTENT),
        }
    }

    fn top_z(&self, page: &PageId) -> i64 {
        self.doc
            .items
            .values()
            .filter(|i| &i.page_id == page)
            .map(|i| i.z_order)
            .max()
            .unwrap_or(0)
    }

    /// Events placing `asset` as a new item. `pending` covers nodes created
    /// earlier in the same batch.
    fn place_events(
        &self,
        asset_id: &AssetId,
        page: &PageId,
        position: Vec2,
        size: Vec2,
        at: Timestamp,
        batch: &mut Batch,
    ) -> CanvasItem {
        let item = CanvasItem {
            item_id: ItemId::from_seq(self.doc.counters.item + 1 + batch.items),
            page_id: page.clone(),
            asset_id: Some(asset_id.clone()),
            position,
            size,
            z_order: self.top_z(page).max(batch.top_z.get(page).copied().unwrap_or(0)) + 1,
            emphasis: 1.0,
            click_count: 0,
            last_interaction_at: at,
            created_at: at,
            hidden: false,
        };
        batch.items += 1;
        batch.top_z.insert(page.clone(), item.z_order);
        if let Some(e) = self.page_event(page, at) {
            if batch.pages.insert(page.clone()) {
                batch.events.push(e);
            }
        }
        batch.events.push(Event::ItemPlaced { item: item.clone() });

        let primary = batch
            .primary(asset_id)
            .or_else(|| self.doc.provenance.primary_node(asset_id).cloned());
        match primary {
            Some(n) if n.item_id.is_none() && !batch.bound.contains(&n.node_id) => {
                batch.bound.insert(n.node_id.clone());
                batch.events.push(Event::NodeBound {
                    node_id: n.node_id,
                    item_id: item.item_id.clone(),
                });
            }
            Some(original) => {
                let node = ProvenanceNode {
                    node_id: self.next_node_id(batch),
                    item_id: Some(item.item_id.clone()),
                    asset_id: asset_id.clone(),
                    kind: NodeKind::Copy {
                        of: original.node_id.clone(),
                    },
                    parents: vec![Parent {
                        node: original.node_id.clone(),
                        role: SlotRole::Source,
                    }],
                    params: original.params.clone(),
                    deleted: false,
                    created_at: at,
                    last_interaction_at: at,
                    click_count: 0,
                };
                batch.push_node(node);
            }
            None => {
                let node = ProvenanceNode {
                    node_id: self.next_node_id(batch),
                    item_id: Some(item.item_id.clone()),
                    asset_id: asset_id.clone(),
                    kind: NodeKind::Original,
                    parents: Vec::new(),
                    params: None,
                    deleted: false,
                    created_at: at,
                    last_interaction_at: at,
                    click_count: 0,
                };
                batch.push_node(node);
            }
        }
        item
    }

    fn next_node_id(&self, batch: &Batch) -> NodeId {
        NodeId::from_seq(self.doc.counters.node + 1 + batch.nodes.len() as u64)
    }

    /// Primary node for an input asset, creating an unplaced original node
    /// if the asset was never put on a canvas.
    fn input_node(&self, asset: &AssetId, at: Timestamp, batch: &mut Batch) -> NodeId {
        if let Some(n) = batch.primary(asset) {
            return n.node_id;
        }
        if let Some(n) = self.doc.provenance.primary_node(asset) {
            return n.node_id.clone();
        }
        let node = ProvenanceNode {
            node_id: self.next_node_id(batch),
            item_id: None,
            asset_id: asset.clone(),
            kind: NodeKind::Original,
            parents: Vec::new(),
            params: None,
            deleted: false,
            created_at: at,
            last_interaction_at: at,
            click_count: 0,
        };
        let id = node.node_id.clone();
        batch.push_node(node);
        id
    }

    /// Engagement events for every visible item showing an input asset.
    fn use_as_input(&self, assets: &[AssetId], at: Timestamp, batch: &mut Batch) {
        let unique: BTreeSet<&AssetId> = assets.iter().collect();
        for a in unique {
            if let Some(n) = self.doc.provenance.primary_node(a) {
                if let Some(item) = n.item_id.as_ref().and_then(|i| self.doc.items.get(i)) {
                    if !item.hidden {
                        batch.events.push(Event::ItemTouched {
                            item_id: item.item_id.clone(),
                            at,
                        });
                    }
                }
            }
        }
    }

    pub fn place_item(&mut self, asset: &AssetId, page: &PageId, position: Vec2, size: Vec2) -> Result<CanvasItem> {
        self.place_item_keyed(asset, page, position, size, None)
    }

    pub fn place_item_keyed(
        &mut self,
        asset: &AssetId,
        page: &PageId,
        position: Vec2,
        size: Vec2,
        key: Option<String>,
    ) -> Result<CanvasItem> {
        self.asset(asset)?;
        check_size(size)?;
        let at = self.tick();
        let mut batch = Batch::default();
        let item = self.place_events(asset, page, position, size, at, &mut batch);
        self.commit(at, key, batch.events)?;
        Ok(self.item(&item.item_id)?.clone())
    }

    /// Records one engagement click.
    pub fn touch_item(&mut self, id: &ItemId) -> Result<CanvasItem> {
        self.item(id)?;
        let at = self.tick();
        self.commit(at, None, vec![Event::ItemTouched { item_id: id.clone(), at }])?;
        Ok(self.item(id)?.clone())
    }

    pub fn set_emphasis(&mut self, id: &ItemId, level: f64) -> Result<CanvasItem> {
        self.item(id)?;
        check_unit("emphasis", level)?;
        let at = self.tick();
        self.commit(
            at,
            None,
            vec![Event::EmphasisSet {
                item_id: id.clone(),
                level,
            }],
        )?;
        Ok(self.item(id)?.clone())
    }

    /// Moves, resizes or re-stacks an item; `None` keeps the current value.
    pub fn move_item(
        &mut self,
        id: &ItemId,
        position: Option<Vec2>,
        size: Option<Vec2>,
        z_order: Option<i64>,
    ) -> Result<CanvasItem> {
        let item = self.item(id)?.clone();
        if let Some(s) = size {
            check_size(s)?;
        }
        let at = self.tick();
        self.commit(
            at,
            None,
            vec![Event::ItemMoved {
                item_id: id.clone(),
                position: position.unwrap_or(item.position),
                size: size.unwrap_or(item.size),
                z_order: z_order.unwrap_or(item.z_order),
            }],
        )?;
        Ok(self.item(id)?.clone())
    }

    /// Hides a node's item; the node and all edges stay queryable.
    /// Deleting an already deleted node is a no-op.
    pub fn soft_delete(&mut self, node: &NodeId) -> Result<ProvenanceNode> {
        let n = self.node(node)?;
        if !n.deleted {
            let at = self.tick();
            self.commit(at, None, vec![Event::NodeDeleted { node_id: node.clone() }])?;
        }
        Ok(self.node(node)?.clone())
    }

    /// Brings a deleted node's item back at its stored page and position.
    pub fn restore(&mut self, node: &NodeId) -> Result<ProvenanceNode> {
        let n = self.node(node)?;
        if n.deleted {
            let at = self.tick();
            self.commit(at, None, vec![Event::NodeRestored { node_id: node.clone() }])?;
        }
        Ok(self.node(node)?.clone())
    }

    // -----------------------------------------------------------------
    // Local generations: collage and sketch

    fn run_id(&self) -> RunId {
        RunId::from_seq(self.doc.counters.run + 1)
    }

    fn place_output(&self, asset: &Asset, placement: Option<&Placement>, index: usize, at: Timestamp, batch: &mut Batch) -> Option<CanvasItem> {
        let p = placement?;
        let size = self.default_size(asset);
        let pos = Vec2::new(p.position.x + index as f64 * (size.x + OUTPUT_SPACING), p.position.y);
        Some(self.place_events(&asset.asset_id, &p.page_id, pos, size, at, batch))
    }

    fn local_generation(
        &mut self,
        png: Vec<u8>,
        snapshot: Snapshot,
        inputs: Vec<(AssetId, SlotRole)>,
        placement: Option<Placement>,
    ) -> Result<Generated> {
        let at = self.tick();
        let run_id = self.run_id();
        let asset = self.new_asset(
            &png,
            AssetKind::Image,
            Origin::Generated { run_id: run_id.clone() },
            at,
            0,
        )?;
        let mut batch = Batch::default();
        batch.events.push(Event::RunSubmitted {
            run: RunRecord {
                run_id: run_id.clone(),
                snapshot: snapshot.clone(),
                graph: None,
                graph_hash: None,
                quick_op: None,
                placement: placement.clone(),
                status: RunStatus::Completed {
                    outputs: vec![asset.asset_id.clone()],
                },
                submitted_at: at,
            },
        });
        let input_ids: Vec<AssetId> = inputs.iter().map(|(a, _)| a.clone()).collect();
        self.use_as_input(&input_ids, at, &mut batch);
        let parents = inputs
            .iter()
            .map(|(a, role)| Parent {
                node: self.input_node(a, at, &mut batch),
                role: *role,
            })
            .collect();
        batch.events.push(Event::AssetIngested { asset: asset.clone() });
        let node = ProvenanceNode {
            node_id: self.next_node_id(&batch),
            item_id: None,
            asset_id: asset.asset_id.clone(),
            kind: NodeKind::Generated { run_id },
            parents,
            params: Some(snapshot),
            deleted: false,
            created_at: at,
            last_interaction_at: at,
            click_count: 0,
        };
        let node_id = node.node_id.clone();
        batch.push_node(node);
        let item = self.place_output(&asset, placement.as_ref(), 0, at, &mut batch);
        self.commit(at, None, batch.events)?;
        Ok(Generated {
            asset: self.asset(&asset.asset_id)?.clone(),
            node: self.node(&node_id)?.clone(),
            item: item.map(|i| self.doc.items[&i.item_id].clone()),
        })
    }

    /// Glues image layers into one new image asset. Layers are composited in
    /// ascending `z` with source-over blending; every layer becomes a parent
    /// with role `collage_layer`.
    pub fn flatten_collage(&mut self, layers: &[CollageLayer], rect: Rect, placement: Option<Placement>) -> Result<Generated> {
        if layers.is_empty() {
            return Err(ProjectError::EmptyLayerList);
        }
        if !rect.is_positive() {
            return Err(ProjectError::NonPositiveRect);
        }
        let mut images = Vec::with_capacity(layers.len());
        for l in layers {
            let a = self.asset(&l.asset)?;
            if !a.kind.is_raster() {
                return Err(ProjectError::NonImageLayer(l.asset.clone()));
            }
            images.push(media::decode_rgba(&self.blobs.get(&a.blob)?)?);
        }
        let ordered: Vec<Layer<'_>> = layers
            .iter()
            .zip(&images)
            .map(|(l, img)| Layer {
                key: l.asset.as_str(),
                image: img,
                transform: l.transform,
            })
            .collect();
        let png = media::encode_png(&raster::composite(&ordered, rect), &[]);
        let inputs = layers.iter().map(|l| (l.asset.clone(), SlotRole::CollageLayer)).collect();
        self.local_generation(
            png,
            Snapshot::Collage {
                layers: layers.to_vec(),
                rect,
            },
            inputs,
            placement,
        )
    }

    /// Rasterizes freehand strokes into a new image asset.
    pub fn rasterize_strokes(&mut self, strokes: &[Stroke], rect: Rect, placement: Option<Placement>) -> Result<Generated> {
        if !rect.is_positive() {
            return Err(ProjectError::NonPositiveRect);
        }
        let png = media::encode_png(&raster::rasterize(strokes, rect), &[]);
        self.local_generation(
            png,
            Snapshot::Sketch {
                strokes: strokes.to_vec(),
                rect,
            },
            Vec::new(),
            placement,
        )
    }

    // -----------------------------------------------------------------
    // Backend generations

    /// Records that `graph`, compiled from `recipe`, is about to be
    /// submitted. Every input asset must exist.
    pub fn begin_run(
        &mut self,
        recipe: &Recipe,
        graph: &WorkflowGraph,
        quick_op: Option<(QuickOpKind, AssetId)>,
        placement: Option<Placement>,
    ) -> Result<RunRecord> {
        self.begin_run_keyed(recipe, graph, quick_op, placement, None)
    }

    pub fn begin_run_keyed(
        &mut self,
        recipe: &Recipe,
        graph: &WorkflowGraph,
        quick_op: Option<(QuickOpKind, AssetId)>,
        placement: Option<Placement>,
        key: Option<String>,
    ) -> Result<RunRecord> {
        let mut inputs: Vec<AssetId> = recipe.inputs().into_iter().map(|(a, _)| a).collect();
        if let Some((_, a)) = &quick_op {
            inputs.push(a.clone());
        }
        for a in &inputs {
            if !self.doc.assets.contains_key(a) {
                return Err(ProjectError::UnknownInputAsset(a.clone()));
            }
        }
        let at = self.tick();
        let run = RunRecord {
            run_id: self.run_id(),
            snapshot: Snapshot::Recipe(recipe.clone()),
            graph: Some(graph.to_value()),
            graph_hash: Some(graph.hash()),
            quick_op,
            placement,
            status: RunStatus::Submitted,
            submitted_at: at,
        };
        let mut batch = Batch::default();
        batch.events.push(Event::RunSubmitted { run: run.clone() });
        self.use_as_input(&inputs, at, &mut batch);
        self.commit(at, key, batch.events)?;
        Ok(run)
    }

    /// Ingests a finished run's outputs, creates one provenance node per
    /// output with typed edges to every input, and drops the outputs at the
    /// run's placement. Calling it again for a completed run returns the
    /// existing outputs.
    pub fn record_generation(&mut self, run_id: &RunId, outputs: &[OutputPayload]) -> Result<Vec<Generated>> {
        let run = self.run(run_id)?.clone();
        if let RunStatus::Completed { outputs: done } = &run.status {
            return done.iter().map(|a| self.generated_view(a)).collect();
        }
        if outputs.is_empty() {
            return Err(ProjectError::NoOutputs(run_id.clone()));
        }
        let Snapshot::Recipe(recipe) = &run.snapshot else {
            return Err(ProjectError::NotRecreatable(NodeId::from(run_id.as_str())));
        };
        let mut inputs = recipe.inputs();
        if let Some((_, a)) = &run.quick_op {
            if !inputs.iter().any(|(i, _)| i == a) {
                inputs.push((a.clone(), SlotRole::Source));
            }
        }
        for (a, _) in &inputs {
            if !self.doc.assets.contains_key(a) {
                return Err(ProjectError::UnknownInputAsset(a.clone()));
            }
        }
        let at = self.tick();
        let mut batch = Batch::default();
        let parents: Vec<Parent> = inputs
            .iter()
            .map(|(a, role)| Parent {
                node: self.input_node(a, at, &mut batch),
                role: *role,
            })
            .collect();
        let mut assets = Vec::new();
        for (i, out) in outputs.iter().enumerate() {
            let origin = match &run.quick_op {
                Some((op, parent)) => Origin::QuickOp {
                    op: *op,
                    parent: parent.clone(),
                },
                None => Origin::Generated {
                    run_id: run_id.clone(),
                },
            };
            let asset = self.new_asset(&out.bytes, out.kind, origin, at, i as u64)?;
            batch.events.push(Event::AssetIngested { asset: asset.clone() });
            let kind = match &run.quick_op {
                Some((op, _)) => NodeKind::QuickOp {
                    op: *op,
                    run_id: run_id.clone(),
                },
                None => NodeKind::Generated {
                    run_id: run_id.clone(),
                },
            };
            batch.push_node(ProvenanceNode {
                node_id: self.next_node_id(&batch),
                item_id: None,
                asset_id: asset.asset_id.clone(),
                kind,
                parents: parents.clone(),
                params: Some(run.snapshot.clone()),
                deleted: false,
                created_at: at,
                last_interaction_at: at,
                click_count: 0,
            });
            assets.push(asset);
        }
        for (i, asset) in assets.iter().enumerate() {
            self.place_output(asset, run.placement.as_ref(), i, at, &mut batch);
        }
        batch.events.push(Event::RunFinished {
            run_id: run_id.clone(),
            status: RunStatus::Completed {
                outputs: assets.iter().map(|a| a.asset_id.clone()).collect(),
            },
        });
        self.commit(at, None, batch.events)?;
        assets.iter().map(|a| self.generated_view(&a.asset_id)).collect()
    }

    fn generated_view(&self, asset: &AssetId) -> Result<Generated> {
        let node = self
            .doc
            .provenance
            .primary_node(asset)
            .ok_or_else(|| ProjectError::UnknownAsset(asset.clone()))?
            .clone();
        let item = node.item_id.as_ref().and_then(|i| self.doc.items.get(i)).cloned();
        Ok(Generated {
            asset: self.asset(asset)?.clone(),
            node,
            item,
        })
    }

    pub fn fail_run(&mut self, run_id: &RunId, reason: &str) -> Result<()> {
        self.run(run_id)?;
        let at = self.tick();
        self.commit(
            at,
            None,
            vec![Event::RunFinished {
                run_id: run_id.clone(),
                status: RunStatus::Failed {
                    reason: reason.to_owned(),
                },
            }],
        )?;
        Ok(())
    }

    // -----------------------------------------------------------------
    // Provenance queries

    pub fn lineage(&self, node: &NodeId) -> Result<Lineage> {
        Ok(self.doc.provenance.lineage(node)?)
    }

    /// The frozen parameters that produced `node` (copies resolve to their
    /// original).
    pub fn recreate(&self, node: &NodeId) -> Result<Snapshot> {
        Ok(self.doc.provenance.recreate(node)?.clone())
    }

    /// The easel spec behind `node`, for re-instantiating an easel widget.
    pub fn recreate_easel_spec(&self, node: &NodeId) -> Result<EaselSpec> {
        match self.recreate(node)? {
            Snapshot::Recipe(Recipe::Easel(spec)) => Ok(spec),
            _ => Err(ProjectError::NotRecreatable(node.clone())),
        }
    }

    /// The graph originally submitted for the run that produced `node`.
    pub fn submitted_graph(&self, node: &NodeId) -> Result<Option<WorkflowGraph>> {
        let mut n = self.node(node)?;
        while let NodeKind::Copy { of } = &n.kind {
            n = self.node(of)?;
        }
        let run = match &n.kind {
            NodeKind::Generated { run_id } | NodeKind::QuickOp { run_id, .. } => self.run(run_id)?,
            _ => return Err(ProvenanceError::NotAGeneratedNode(node.clone()).into()),
        };
        Ok(run
            .graph
            .clone()
            .map(|v| WorkflowGraph::from_value(v).expect("stored graphs were valid when submitted")))
    }

    pub fn history_window(&self, cursor: usize) -> Result<Vec<HistoryEntry>> {
        let entries = self
            .doc
            .visible_items()
            .map(|i| HistoryEntry {
                item_id: i.item_id.clone(),
                asset_id: i.asset_id.clone(),
                created_at: i.created_at,
                position: i.position,
            })
            .collect();
        Ok(provenance::history_window(entries, cursor)?)
    }

    /// Engagement log as `(time, item centre)` pairs.
    pub fn interaction_log(&self) -> Vec<(Timestamp, Vec2)> {
        self.doc
            .interactions
            .iter()
            .filter_map(|(at, id)| self.doc.items.get(id).map(|i| (*at, i.center())))
            .collect()
    }

    pub fn trail_path(&self, bucket_ms: i64) -> Result<Vec<TrailPoint>> {
        Ok(provenance::trail_path(&self.interaction_log(), bucket_ms)?)
    }

    pub fn activity_heatmap(&self) -> BTreeMap<ItemId, f64> {
        provenance::activity_heatmap(self.doc.visible_items().map(|i| (&i.item_id, i.click_count)))
    }

    pub fn timeline_layout(&self, axis_width: f64) -> Result<Vec<TimelineEntry>> {
        let items: Vec<(ItemId, NodeId, Timestamp)> = self
            .doc
            .visible_items()
            .filter_map(|i| {
                self.doc
                    .item_nodes
                    .get(&i.item_id)
                    .map(|n| (i.item_id.clone(), n.clone(), i.created_at))
            })
            .collect();
        Ok(provenance::timeline_layout(&self.doc.provenance, &items, axis_width)?)
    }

    pub fn export_dag(&self) -> DagExport {
        self.doc.provenance.export()
    }

    pub fn search(&self, query: &str) -> Vec<SearchHit> {
        self.index.search(query)
    }

    /// Indexed tokens of an asset (for soundness checks).
    pub fn search_tokens(&self, asset: &AssetId) -> Vec<String> {
        self.index
            .tokens(asset)
            .map(|t| t.keys().cloned().collect())
            .unwrap_or_default()
    }

    // -----------------------------------------------------------------
    // Organization

    pub fn create_collection(&mut self, name: &str, members: &[AssetId], tags: &[String]) -> Result<Collection> {
        for a in members {
            self.asset(a)?;
        }
        let collection = Collection {
            collection_id: CollectionId::from_seq(self.doc.counters.collection + 1),
            name: name.to_owned(),
            tags: tags.to_vec(),
            members: dedup(members),
        };
        let at = self.tick();
        self.commit(at, None, vec![Event::CollectionSaved { collection: collection.clone() }])?;
        Ok(collection)
    }

    pub fn collection(&self, id: &CollectionId) -> Result<&Collection> {
        self.doc
            .collections
            .get(id)
            .ok_or_else(|| ProjectError::UnknownCollection(id.clone()))
    }

    /// Adds members and tags; existing entries are kept.
    pub fn extend_collection(&mut self, id: &CollectionId, members: &[AssetId], tags: &[String]) -> Result<Collection> {
        let mut c = self.collection(id)?.clone();
        for a in members {
            self.asset(a)?;
        }
        c.members.extend(members.iter().cloned());
        c.members = dedup(&c.members);
        for t in tags {
            if !c.tags.contains(t) {
                c.tags.push(t.clone());
            }
        }
        let at = self.tick();
        self.commit(at, None, vec![Event::CollectionSaved { collection: c.clone() }])?;
        Ok(c)
    }

    pub fn delete_collection(&mut self, id: &CollectionId) -> Result<()> {
        self.collection(id)?;
        let at = self.tick();
        self.commit(
            at,
            None,
            vec![Event::CollectionDeleted {
                collection_id: id.clone(),
            }],
        )?;
        Ok(())
    }

    /// Places a copy of a collection member on a page.
    pub fn instantiate_from_collection(
        &mut self,
        id: &CollectionId,
        asset: &AssetId,
        page: &PageId,
        position: Vec2,
    ) -> Result<CanvasItem> {
        let c = self.collection(id)?;
        if !c.members.contains(asset) {
            return Err(ProjectError::NotAMember {
                collection: id.clone(),
                asset: asset.clone(),
            });
        }
        let size = self.default_size(self.asset(asset)?);
        self.place_item(asset, page, position, size)
    }

    /// Packs items into a grid and returns their new positions.
    pub fn pack_grid(&mut self, items: &[ItemId], gap: f64) -> Result<Vec<(ItemId, Vec2)>> {
        let inputs = items
            .iter()
            .map(|id| {
                let i = self.item(id)?;
                Ok(PackInput {
                    item_id: id.clone(),
                    position: i.position,
                    size: i.size,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let placed = pack_grid(&inputs, gap)?;
        let events: Vec<Event> = placed
            .iter()
            .map(|(id, pos)| {
                let i = &self.doc.items[id];
                Event::ItemMoved {
                    item_id: id.clone(),
                    position: *pos,
                    size: i.size,
                    z_order: i.z_order,
                }
            })
            .collect();
        if !events.is_empty() {
            let at = self.tick();
            self.commit(at, None, events)?;
        }
        Ok(placed)
    }

    pub fn exhibit_add(&mut self, asset: &AssetId, caption: &str) -> Result<EntryId> {
        self.asset(asset)?;
        let entry_id = EntryId::from_seq(self.doc.counters.entry + 1);
        let at = self.tick();
        self.commit(
            at,
            None,
            vec![Event::ExhibitAdded {
                entry_id: entry_id.clone(),
                asset_id: asset.clone(),
                caption: caption.to_owned(),
            }],
        )?;
        Ok(entry_id)
    }

    pub fn exhibit_reorder(&mut self, entry: &EntryId, to: usize) -> Result<()> {
        self.doc.exhibit.check_reorder(entry, to)?;
        let at = self.tick();
        self.commit(
            at,
            None,
            vec![Event::ExhibitReordered {
                entry_id: entry.clone(),
                to,
            }],
        )?;
        Ok(())
    }

    pub fn exhibit_caption(&mut self, entry: &EntryId, caption: &str) -> Result<()> {
        self.doc.exhibit.get(entry)?;
        let at = self.tick();
        self.commit(
            at,
            None,
            vec![Event::ExhibitCaptioned {
                entry_id: entry.clone(),
                caption: caption.to_owned(),
            }],
        )?;
        Ok(())
    }

    pub fn exhibit_remove(&mut self, entry: &EntryId) -> Result<()> {
        self.doc.exhibit.get(entry)?;
        let at = self.tick();
        self.commit(at, None, vec![Event::ExhibitRemoved { entry_id: entry.clone() }])?;
        Ok(())
    }

    /// The ordered gallery manifest; file names are `NN-<asset>.<ext>`.
    pub fn exhibit_manifest(&self) -> ExhibitManifest {
        ExhibitManifest {
            entries: self
                .doc
                .exhibit
                .entries()
                .iter()
                .map(|e| {
                    let mime = self
                        .doc
                        .assets
                        .get(&e.asset_id)
                        .map(|a| a.mime.clone())
                        .unwrap_or_default();
                    ManifestEntry {
                        order: e.order,
                        asset_id: e.asset_id.clone(),
                        caption: e.caption.clone(),
                        file: format!("{:02}-{}.{}", e.order, e.asset_id, extension(&mime)),
                        mime,
                    }
                })
                .collect(),
        }
    }

    /// Writes `manifest.json` plus every exhibited file into `dir`.
    pub fn export_exhibit(&self, dir: &Path) -> Result<ExhibitManifest> {
        std::fs::create_dir_all(dir)?;
        let manifest = self.exhibit_manifest();
        for e in &manifest.entries {
            std::fs::write(dir.join(&e.file), self.asset_bytes(&e.asset_id)?)?;
        }
        let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        std::fs::write(dir.join("manifest.json"), json)?;
        Ok(manifest)
    }

    // -----------------------------------------------------------------
    // Saved easels

    /// Creates (`id = None`) or replaces a saved easel.
    pub fn save_easel(&mut self, id: Option<&EaselId>, page: &PageId, position: Vec2, spec: EaselSpec) -> Result<SavedEasel> {
        let easel_id = match id {
            Some(id) => {
                if !self.doc.easels.contains_key(id) {
                    return Err(ProjectError::UnknownEasel(id.clone()));
                }
                id.clone()
            }
            None => EaselId::from_seq(self.doc.counters.easel + 1),
        };
        let easel = SavedEasel {
            easel_id,
            page_id: page.clone(),
            position,
            spec,
        };
        let at = self.tick();
        let mut events: Vec<Event> = self.page_event(page, at).into_iter().collect();
        events.push(Event::EaselSaved { easel: easel.clone() });
        self.commit(at, None, events)?;
        Ok(easel)
    }

    pub fn easel(&self, id: &EaselId) -> Result<&SavedEasel> {
        self.doc.easels.get(id).ok_or_else(|| ProjectError::UnknownEasel(id.clone()))
    }

    pub fn delete_easel(&mut self, id: &EaselId) -> Result<()> {
        self.easel(id)?;
        let at = self.tick();
        self.commit(at, None, vec![Event::EaselDeleted { easel_id: id.clone() }])?;
        Ok(())
    }
}

fn dedup(ids: &[AssetId]) -> Vec<AssetId> {
    let mut seen = BTreeSet::new();
    ids.iter().filter(|a| seen.insert((*a).clone())).cloned().collect()
}

fn extension(mime: &str) -> &'static str {
    match mime {
        "image/png" => "png",
        "image/jpeg" => "jpg",
        "image/webp" => "webp",
        "video/mp4" => "mp4",
        "model/gltf-binary" => "glb",
        "text/plain; charset=utf-8" | "text/plain" => "txt",
        _ => "bin",
    }
}

/// Asset whose search text an event may change.
fn indexed_asset(e: &Event) -> Option<AssetId> {
    match e {
        Event::AssetIngested { asset } => Some(asset.asset_id.clone()),
        Event::AssetMetadataUpdated { asset_id, .. } => Some(asset_id.clone()),
        Event::NodeCreated { node } if node.params.is_some() => Some(node.asset_id.clone()),
        _ => None,
    }
}

/// Folds one record into a document.
pub fn apply_record(doc: &mut Document, keys: &mut BTreeMap<String, u64>, rec: &Record) {
    if let Some(k) = &rec.key {
        keys.insert(k.clone(), rec.seq);
    }
    for e in &rec.events {
        doc.apply(rec.at, e);
    }
}

/// Rebuilds a document from records alone.
pub fn replay<'a>(records: impl IntoIterator<Item = &'a Record>) -> Document {
    let mut doc = Document::new();
    let mut keys = BTreeMap::new();
    for r in records {
        apply_record(&mut doc, &mut keys, r);
    }
    doc
}

/// Events accumulated for one record, plus what they will allocate.
#[derive(Default)]
struct Batch {
    events: Vec<Event>,
    items: u64,
    nodes: Vec<ProvenanceNode>,
    bound: BTreeSet<NodeId>,
    pages: BTreeSet<PageId>,
    top_z: BTreeMap<PageId, i64>,
}

impl Batch {
    fn push_node(&mut self, node: ProvenanceNode) {
        self.events.push(Event::NodeCreated { node: node.clone() });
        self.nodes.push(node);
    }

    fn primary(&self, asset: &AssetId) -> Option<ProvenanceNode> {
        self.nodes.iter().find(|n| &n.asset_id == asset).cloned()
    }
}
