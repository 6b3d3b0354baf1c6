//! The canvas document as a fold over events.
//!
//! Every mutation is expressed as one or more [`Event`]s carrying all ids
//! and timestamps they need, so replaying the same events always yields the
//! same [`Document`]. Validation happens before events are created (in
//! [`crate::project`]); `apply` itself never fails.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::asset::{Asset, CanvasItem};
use crate::blob::BlobHash;
use crate::easel::quick::QuickOpKind;
use crate::easel::spec::{EaselSpec, MapKind};
use crate::ids::{AssetId, CollectionId, EaselId, EntryId, ItemId, NodeId, PageId, RunId, Timestamp, Vec2};
use crate::organization::{Collection, Exhibit};
use crate::provenance::{NodeKind, ProvenanceGraph, ProvenanceNode, Snapshot};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Page {
    pub page_id: PageId,
    pub name: String,
    pub created_at: Timestamp,
}

/// An easel widget persisted on a page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedEasel {
    pub easel_id: EaselId,
    pub page_id: PageId,
    pub position: Vec2,
    pub spec: EaselSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Submitted,
    Completed { outputs: Vec<AssetId> },
    Failed { reason: String },
}

/// Where the outputs of a run go on the canvas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub page_id: PageId,
    pub position: Vec2,
}

/// One generation request as submitted to a backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: RunId,
    pub snapshot: Snapshot,
    /// The exact graph that was submitted, if the run used a backend.
    pub graph: Option<serde_json::Value>,
    pub graph_hash: Option<String>,
    /// Set for quick operations: the op and the asset it was applied to.
    pub quick_op: Option<(QuickOpKind, AssetId)>,
    pub placement: Option<Placement>,
    pub status: RunStatus,
    pub submitted_at: Timestamp,
}

/// Counters for sequential id allocation; each counts ids handed out.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Counters {
    pub page: u64,
    pub asset: u64,
    pub item: u64,
    pub node: u64,
    pub run: u64,
    pub easel: u64,
    pub collection: u64,
    pub entry: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    PageCreated {
        page: Page,
    },
    AssetIngested {
        asset: Asset,
    },
    AssetMetadataUpdated {
        asset_id: AssetId,
        caption: Option<String>,
        control_maps: BTreeMap<MapKind, BlobHash>,
    },
    ItemPlaced {
        item: CanvasItem,
    },
    NodeCreated {
        node: ProvenanceNode,
    },
    /// Attaches an existing, not yet placed node to a new item.
    NodeBound {
        node_id: NodeId,
        item_id: ItemId,
    },
    /// An engagement event: a selection click or use as an easel input.
    ItemTouched {
        item_id: ItemId,
        at: Timestamp,
    },
    EmphasisSet {
        item_id: ItemId,
        level: f64,
    },
    ItemMoved {
        item_id: ItemId,
        position: Vec2,
        size: Vec2,
        z_order: i64,
    },
    NodeDeleted {
        node_id: NodeId,
    },
    NodeRestored {
        node_id: NodeId,
    },
    RunSubmitted {
        run: RunRecord,
    },
    RunFinished {
        run_id: RunId,
        status: RunStatus,
    },
    EaselSaved {
        easel: SavedEasel,
    },
    EaselDeleted {
        easel_id: EaselId,
    },
    CollectionSaved {
        collection: Collection,
    },
    CollectionDeleted {
        collection_id: CollectionId,
    },
    ExhibitAdded {
        entry_id: EntryId,
        asset_id: AssetId,
        caption: String,
    },
    ExhibitReordered {
        entry_id: EntryId,
        to: usize,
    },
    ExhibitCaptioned {
        entry_id: EntryId,
        caption: String,
    },
    ExhibitRemoved {
        entry_id: EntryId,
    },
}

/// The full state of one canvas project.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub pages: BTreeMap<PageId, Page>,
    pub assets: BTreeMap<AssetId, Asset>,
    pub items: BTreeMap<ItemId, CanvasItem>,
    pub item_nodes: BTreeMap<ItemId, NodeId>,
    pub provenance: ProvenanceGraph,
    pub runs: BTreeMap<RunId, RunRecord>,
    pub easels: BTreeMap<EaselId, SavedEasel>,
    pub collections: BTreeMap<CollectionId, Collection>,
    pub exhibit: Exhibit,
    /// Engagement log for trails, in journal order.
    pub interactions: Vec<(Timestamp, ItemId)>,
    pub counters: Counters,
    /// Latest timestamp seen in any applied record.
    pub last_at: Timestamp,
}

impl Document {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn apply(&mut self, at: Timestamp, event: &Event) {
        self.last_at = self.last_at.max(at);
        match event {
            Event::PageCreated { page } => {
                self.counters.page += 1;
                self.pages.insert(page.page_id.clone(), page.clone());
            }
            Event::AssetIngested { asset } => {
                self.counters.asset += 1;
                self.assets.insert(asset.asset_id.clone(), asset.clone());
            }
            Event::AssetMetadataUpdated {
                asset_id,
                caption,
                control_maps,
            } => {
                if let Some(a) = self.assets.get_mut(asset_id) {
                    if caption.is_some() {
                        a.caption = caption.clone();
                    }
                    a.control_maps.extend(control_maps.iter().map(|(k, v)| (*k, v.clone())));
                }
            }
            Event::ItemPlaced { item } => {
                self.counters.item += 1;
                self.items.insert(item.item_id.clone(), item.clone());
            }
            Event::NodeCreated { node } => {
                self.counters.node += 1;
                if let Some(item) = &node.item_id {
                    self.item_nodes.insert(item.clone(), node.node_id.clone());
                }
                // Parents were checked before the event was created.
                let _ = self.provenance.insert(node.clone());
            }
            Event::NodeBound { node_id, item_id } => {
                if let Ok(n) = self.provenance.get_mut(node_id) {
                    n.item_id = Some(item_id.clone());
                    self.item_nodes.insert(item_id.clone(), node_id.clone());
                }
            }
            Event::ItemTouched { item_id, at } => {
                if let Some(item) = self.items.get_mut(item_id) {
                    item.click_count += 1;
                    item.last_interaction_at = item.last_interaction_at.max(*at);
                    self.interactions.push((*at, item_id.clone()));
                }
                if let Some(n) = self.item_nodes.get(item_id).cloned() {
                    if let Ok(n) = self.provenance.get_mut(&n) {
                        n.click_count += 1;
                        n.last_interaction_at = n.last_interaction_at.max(*at);
                    }
                }
            }
            Event::EmphasisSet { item_id, level } => {
                if let Some(item) = self.items.get_mut(item_id) {
                    item.emphasis = *level;
                }
            }
            Event::ItemMoved {
                item_id,
                position,
                size,
                z_order,
            } => {
                if let Some(item) = self.items.get_mut(item_id) {
                    item.position = *position;
                    item.size = *size;
                    item.z_order = *z_order;
                }
            }
            Event::NodeDeleted { node_id } | Event::NodeRestored { node_id } => {
                let deleted = matches!(event, Event::NodeDeleted { .. });
                if let Ok(n) = self.provenance.get_mut(node_id) {
                    n.deleted = deleted;
                    if let Some(item) = n.item_id.clone().and_then(|i| self.items.get_mut(&i)) {
                        item.hidden = deleted;
                    }
                }
            }
            Event::RunSubmitted { run } => {
                self.counters.run += 1;
                self.runs.insert(run.run_id.clone(), run.clone());
            }
            Event::RunFinished { run_id, status } => {
                if let Some(r) = self.runs.get_mut(run_id) {
                    r.status = status.clone();
                }
            }
            Event::EaselSaved { easel } => {
                if !self.easels.contains_key(&easel.easel_id) {
                    self.counters.easel += 1;
                }
                self.easels.insert(easel.easel_id.clone(), easel.clone());
            }
            Event::EaselDeleted { easel_id } => {
                self.easels.remove(easel_id);
            }
            Event::CollectionSaved { collection } => {
                if !self.collections.contains_key(&collection.collection_id) {
                    self.counters.collection += 1;
                }
                self.collections
                    .insert(collection.collection_id.clone(), collection.clone());
            }
            Event::CollectionDeleted { collection_id } => {
                self.collections.remove(collection_id);
            }
            Event::ExhibitAdded {
                entry_id,
                asset_id,
                caption,
            } => {
                self.counters.entry += 1;
                self.exhibit.add(entry_id.clone(), asset_id.clone(), caption.clone());
            }
            Event::ExhibitReordered { entry_id, to } => {
                let _ = self.exhibit.reorder(entry_id, *to);
            }
            Event::ExhibitCaptioned { entry_id, caption } => {
                let _ = self.exhibit.caption(entry_id, caption.clone());
            }
            Event::ExhibitRemoved { entry_id } => {
                let _ = self.exhibit.remove(entry_id);
            }
        }
    }

    /// Node shadowing a canvas item.
    pub fn node_of_item(&self, item: &ItemId) -> Option<&ProvenanceNode> {
        self.item_nodes.get(item).and_then(|n| self.provenance.get(n).ok())
    }

    /// Visible items on every page.
    pub fn visible_items(&self) -> impl Iterator<Item = &CanvasItem> {
        self.items.values().filter(|i| !i.hidden)
    }

    /// Items currently showing `asset`.
    pub fn items_of_asset<'a>(&'a self, asset: &'a AssetId) -> impl Iterator<Item = &'a CanvasItem> + 'a {
        self.items
            .values()
            .filter(move |i| i.asset_id.as_ref() == Some(asset))
    }

    /// Text indexed for search: caption plus prompts of every generation
    /// that produced the asset.
    pub fn indexed_texts(&self, asset: &AssetId) -> Vec<&str> {
        let mut out = Vec::new();
        if let Some(c) = self.assets.get(asset).and_then(|a| a.caption.as_deref()) {
            out.push(c);
        }
        for n in self.provenance.nodes().filter(|n| &n.asset_id == asset) {
            if let (NodeKind::Generated { .. } | NodeKind::QuickOp { .. }, Some(Snapshot::Recipe(r))) =
                (&n.kind, &n.params)
            {
                out.extend(r.search_text());
            }
        }
        out
    }
}
