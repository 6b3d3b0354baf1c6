//! The provenance DAG and the sensemaking projections computed from it.
//!
//! Each canvas item is shadowed by one node. Edges point from a child to a
//! parent that already existed when the child was inserted, so the graph is
//! acyclic by construction. Nothing ever removes an edge: deleting a node
//! only flips its `deleted` flag.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::easel::quick::{QuickOpKind, Recipe};
use crate::easel::spec::SlotRole;
use crate::ids::{AssetId, ItemId, NodeId, RunId, Timestamp, Vec2};
use crate::raster::{LayerTransform, Rect, Stroke};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NodeKind {
    Original,
    Copy { of: NodeId },
    Generated { run_id: RunId },
    QuickOp { op: QuickOpKind, run_id: RunId },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollageLayer {
    pub asset: AssetId,
    pub transform: LayerTransform,
}

/// Frozen parameters that produced a node's asset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", content = "value", rename_all = "snake_case")]
pub enum Snapshot {
    /// A backend generation: easel or quick operation.
    Recipe(Recipe),
    Collage { layers: Vec<CollageLayer>, rect: Rect },
    Sketch { strokes: Vec<Stroke>, rect: Rect },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Parent {
    pub node: NodeId,
    pub role: SlotRole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceNode {
    pub node_id: NodeId,
    /// The canvas item this node shadows; `None` until an output is placed.
    pub item_id: Option<ItemId>,
    pub asset_id: AssetId,
    pub kind: NodeKind,
    pub parents: Vec<Parent>,
    pub params: Option<Snapshot>,
    pub deleted: bool,
    pub created_at: Timestamp,
    pub last_interaction_at: Timestamp,
    pub click_count: u64,
}

/// A typed edge `child -> parent`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub child: NodeId,
    pub parent: NodeId,
    pub role: SlotRole,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProvenanceError {
    #[error("unknown provenance node {0}")]
    UnknownNode(NodeId),
    #[error("node {0} already exists")]
    DuplicateNode(NodeId),
    #[error("node {child} names parent {parent}, which does not exist yet")]
    UnknownParent { child: NodeId, parent: NodeId },
    #[error("node {0} was not produced by a generation")]
    NotAGeneratedNode(NodeId),
}

/// The DAG. Serializes as the plain list of nodes; adjacency indexes are
/// rebuilt on load.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<ProvenanceNode>", into = "Vec<ProvenanceNode>")]
pub struct ProvenanceGraph {
    nodes: BTreeMap<NodeId, ProvenanceNode>,
    /// Insertion order, which is also `(created_at, node_id)` order.
    order: Vec<NodeId>,
    children: BTreeMap<NodeId, Vec<Parent>>,
    /// First node created for each asset.
    primary: BTreeMap<AssetId, NodeId>,
}

impl From<Vec<ProvenanceNode>> for ProvenanceGraph {
    fn from(nodes: Vec<ProvenanceNode>) -> Self {
        let mut g = ProvenanceGraph::default();
        for n in nodes {
            g.insert(n).expect("persisted provenance graph is well-formed");
        }
        g
    }
}

impl From<ProvenanceGraph> for Vec<ProvenanceNode> {
    fn from(g: ProvenanceGraph) -> Self {
        let ProvenanceGraph { mut nodes, order, .. } = g;
        order.iter().filter_map(|id| nodes.remove(id)).collect()
    }
}

/// A node in a lineage answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineageEntry {
    pub node_id: NodeId,
    pub asset_id: AssetId,
    pub item_id: Option<ItemId>,
    pub deleted: bool,
    pub created_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lineage {
    pub node_id: NodeId,
    pub ancestors: Vec<LineageEntry>,
    pub descendants: Vec<LineageEntry>,
    /// Every edge between members of the ancestor closure (and the node).
    pub ancestor_edges: Vec<Edge>,
    pub descendant_edges: Vec<Edge>,
}

/// JSON adjacency document for the timeline and lineage panels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DagExport {
    pub nodes: Vec<ProvenanceNode>,
    pub edges: Vec<Edge>,
}

impl ProvenanceGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.nodes.values().map(|n| n.parents.len()).sum()
    }

    /// Inserts a node whose parents must already be present.
    pub fn insert(&mut self, node: ProvenanceNode) -> Result<(), ProvenanceError> {
        if self.nodes.contains_key(&node.node_id) {
            return Err(ProvenanceError::DuplicateNode(node.node_id));
        }
        for p in &node.parents {
            if !self.nodes.contains_key(&p.node) {
                return Err(ProvenanceError::UnknownParent {
                    child: node.node_id.clone(),
                    parent: p.node.clone(),
                });
            }
        }
        for p in &node.parents {
            self.children.entry(p.node.clone()).or_default().push(Parent {
                node: node.node_id.clone(),
                role: p.role,
            });
        }
        self.primary
            .entry(node.asset_id.clone())
            .or_insert_with(|| node.node_id.clone());
        self.order.push(node.node_id.clone());
        self.nodes.insert(node.node_id.clone(), node);
        Ok(())
    }

    pub fn get(&self, id: &NodeId) -> Result<&ProvenanceNode, ProvenanceError> {
        self.nodes
            .get(id)
            .ok_or_else(|| ProvenanceError::UnknownNode(id.clone()))
    }

    pub fn get_mut(&mut self, id: &NodeId) -> Result<&mut ProvenanceNode, ProvenanceError> {
        self.nodes
            .get_mut(id)
            .ok_or_else(|| ProvenanceError::UnknownNode(id.clone()))
    }

    /// Nodes in creation order.
    pub fn nodes(&self) -> impl Iterator<Item = &ProvenanceNode> {
        self.order.iter().map(|id| &self.nodes[id])
    }

    /// The first node ever created for `asset`; copies point back to it.
    pub fn primary_node(&self, asset: &AssetId) -> Option<&ProvenanceNode> {
        self.primary.get(asset).map(|id| &self.nodes[id])
    }

    pub fn children_of(&self, id: &NodeId) -> &[Parent] {
        self.children.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn edges(&self) -> Vec<Edge> {
        self.nodes()
            .flat_map(|n| {
                n.parents.iter().map(|p| Edge {
                    child: n.node_id.clone(),
                    parent: p.node.clone(),
                    role: p.role,
                })
            })
            .collect()
    }

    pub fn export(&self) -> DagExport {
        DagExport {
            nodes: self.nodes().cloned().collect(),
            edges: self.edges(),
        }
    }

    fn entry(&self, id: &NodeId) -> LineageEntry {
        let n = &self.nodes[id];
        LineageEntry {
            node_id: n.node_id.clone(),
            asset_id: n.asset_id.clone(),
            item_id: n.item_id.clone(),
            deleted: n.deleted,
            created_at: n.created_at,
        }
    }

    /// Closure over parent (`up`) or child edges, excluding the start node.
    fn closure(&self, start: &NodeId, up: bool) -> (Vec<LineageEntry>, Vec<Edge>) {
        let mut seen: BTreeSet<NodeId> = BTreeSet::new();
        let mut edges = BTreeSet::new();
        let mut queue = VecDeque::from([start.clone()]);
        while let Some(id) = queue.pop_front() {
            let next: Vec<Parent> = if up {
                self.nodes[&id].parents.clone()
            } else {
                self.children_of(&id).to_vec()
            };
            for p in next {
                let (child, parent) = if up {
                    (id.clone(), p.node.clone())
                } else {
                    (p.node.clone(), id.clone())
                };
                edges.insert(Edge {
                    child,
                    parent,
                    role: p.role,
                });
                if p.node != *start && seen.insert(p.node.clone()) {
                    queue.push_back(p.node);
                }
            }
        }
        let mut entries: Vec<LineageEntry> = seen.iter().map(|id| self.entry(id)).collect();
        entries.sort_by(|a, b| (a.created_at, &a.node_id).cmp(&(b.created_at, &b.node_id)));
        (entries, edges.into_iter().collect())
    }

    /// Transitive ancestors and descendants of `id`, deleted nodes included.
    pub fn lineage(&self, id: &NodeId) -> Result<Lineage, ProvenanceError> {
        self.get(id)?;
        let (ancestors, ancestor_edges) = self.closure(id, true);
        let (descendants, descendant_edges) = self.closure(id, false);
        Ok(Lineage {
            node_id: id.clone(),
            ancestors,
            descendants,
            ancestor_edges,
            descendant_edges,
        })
    }

    /// The parameter snapshot that reproduces `id`'s asset. Copies resolve
    /// to the node they copy.
    pub fn recreate(&self, id: &NodeId) -> Result<&Snapshot, ProvenanceError> {
        let mut node = self.get(id)?;
        while let NodeKind::Copy { of } = &node.kind {
            node = self.get(of)?;
        }
        match (&node.kind, &node.params) {
            (NodeKind::Generated { .. } | NodeKind::QuickOp { .. }, Some(s)) => Ok(s),
            _ => Err(ProvenanceError::NotAGeneratedNode(id.clone())),
        }
    }

    /// Kahn's algorithm over the stored edges; independent of insertion
    /// order so fuzz tests can use it as a check.
    pub fn is_acyclic(&self) -> bool {
        let mut indegree: BTreeMap<&NodeId, usize> = self.nodes.keys().map(|k| (k, 0)).collect();
        for n in self.nodes.values() {
            for p in &n.parents {
                *indegree.get_mut(&p.node).expect("parent exists") += 1;
            }
        }
        let mut ready: Vec<&NodeId> = indegree.iter().filter(|(_, d)| **d == 0).map(|(k, _)| *k).collect();
        let mut visited = 0;
        while let Some(id) = ready.pop() {
            visited += 1;
            for p in &self.nodes[id].parents {
                let d = indegree.get_mut(&p.node).expect("parent exists");
                *d -= 1;
                if *d == 0 {
                    ready.push(&p.node);
                }
            }
        }
        visited == self.nodes.len()
    }
}

// ---------------------------------------------------------------------------
// Projections. These are pure functions over plain inputs so each one can
// be checked against a brute-force oracle.

/// Number of items in one history window.
pub const HISTORY_WINDOW: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub item_id: ItemId,
    pub asset_id: Option<AssetId>,
    pub created_at: Timestamp,
    pub position: Vec2,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProjectionError {
    #[error("cursor {cursor} is outside 0..{len}")]
    CursorOutOfRange { cursor: usize, len: usize },
    #[error("the canvas has no items")]
    EmptyCanvas,
    #[error("bucket duration must be positive")]
    NonPositiveBucket,
}

/// Positions `[cursor, cursor + 5)` of the entries sorted by creation time.
pub fn history_window(mut entries: Vec<HistoryEntry>, cursor: usize) -> Result<Vec<HistoryEntry>, ProjectionError> {
    if cursor >= entries.len() {
        return Err(ProjectionError::CursorOutOfRange {
            cursor,
            len: entries.len(),
        });
    }
    entries.sort_by(|a, b| (a.created_at, &a.item_id).cmp(&(b.created_at, &b.item_id)));
    Ok(entries.into_iter().skip(cursor).take(HISTORY_WINDOW).collect())
}

/// Default trail bucket: one minute.
pub const DEFAULT_TRAIL_BUCKET_MS: i64 = 60_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrailPoint {
    /// Start of the bucket.
    pub at: Timestamp,
    pub centroid: Vec2,
    /// Interactions that fell into the bucket.
    pub weight: u64,
}

/// Groups interactions into consecutive `bucket_ms` windows measured from
/// the first interaction and returns one centroid per non-empty bucket.
pub fn trail_path(interactions: &[(Timestamp, Vec2)], bucket_ms: i64) -> Result<Vec<TrailPoint>, ProjectionError> {
    if bucket_ms <= 0 {
        return Err(ProjectionError::NonPositiveBucket);
    }
    let Some(t0) = interactions.iter().map(|(t, _)| *t).min() else {
        return Ok(Vec::new());
    };
    let mut buckets: BTreeMap<i64, (f64, f64, u64)> = BTreeMap::new();
    for (t, p) in interactions {
        let b = buckets.entry((t.0 - t0.0) / bucket_ms).or_default();
        b.0 += p.x;
        b.1 += p.y;
        b.2 += 1;
    }
    Ok(buckets
        .into_iter()
        .map(|(i, (sx, sy, n))| TrailPoint {
            at: Timestamp(t0.0 + i * bucket_ms),
            centroid: Vec2::new(sx / n as f64, sy / n as f64),
            weight: n,
        })
        .collect())
}

/// `click_count / max click_count`; all zeros when nothing was clicked.
pub fn activity_heatmap<'a>(items: impl IntoIterator<Item = (&'a ItemId, u64)>) -> BTreeMap<ItemId, f64> {
    let counts: Vec<(&ItemId, u64)> = items.into_iter().collect();
    let max = counts.iter().map(|(_, c)| *c).max().unwrap_or(0);
    counts
        .into_iter()
        .map(|(id, c)| {
            let w = if max == 0 { 0.0 } else { c as f64 / max as f64 };
            (id.clone(), w)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineEntry {
    pub item_id: ItemId,
    pub node_id: NodeId,
    pub created_at: Timestamp,
    pub x: f64,
    pub parents: Vec<ItemId>,
    pub children: Vec<ItemId>,
}

/// Maps creation times affinely onto `[0, axis_width]`. With a single
/// distinct timestamp every item sits at the centre.
pub fn timeline_layout(
    graph: &ProvenanceGraph,
    items: &[(ItemId, NodeId, Timestamp)],
    axis_width: f64,
) -> Result<Vec<TimelineEntry>, ProjectionError> {
    let lo = items.iter().map(|i| i.2).min().ok_or(ProjectionError::EmptyCanvas)?;
    let hi = items.iter().map(|i| i.2).max().expect("non-empty");
    let shown: BTreeSet<&NodeId> = items.iter().map(|i| &i.1).collect();
    let item_of = |n: &NodeId| -> Option<ItemId> {
        if !shown.contains(n) {
            return None;
        }
        graph.get(n).ok().and_then(|n| n.item_id.clone())
    };
    let mut out: Vec<TimelineEntry> = items
        .iter()
        .map(|(item, node, at)| {
            let x = if hi == lo {
                axis_width / 2.0
            } else {
                (at.0 - lo.0) as f64 / (hi.0 - lo.0) as f64 * axis_width
            };
            let mut parents: Vec<ItemId> = graph
                .get(node)
                .map(|n| n.parents.iter().filter_map(|p| item_of(&p.node)).collect())
                .unwrap_or_default();
            let mut children: Vec<ItemId> =
                graph.children_of(node).iter().filter_map(|c| item_of(&c.node)).collect();
            parents.sort();
            parents.dedup();
            children.sort();
            children.dedup();
            TimelineEntry {
                item_id: item.clone(),
                node_id: node.clone(),
                created_at: *at,
                x,
                parents,
                children,
            }
        })
        .collect();
    out.sort_by(|a, b| (a.created_at, &a.item_id).cmp(&(b.created_at, &b.item_id)));
    Ok(out)
}
