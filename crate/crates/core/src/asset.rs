//! Asset and canvas-item records.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::blob::BlobHash;
use crate::easel::quick::QuickOpKind;
use crate::easel::spec::MapKind;
use crate::ids::{AssetId, ItemId, PageId, RunId, Timestamp, Vec2};
use crate::media::{AssetKind, Dims};

/// Where an asset came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Origin {
    Imported,
    Generated { run_id: RunId },
    QuickOp { op: QuickOpKind, parent: AssetId },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Asset {
    pub asset_id: AssetId,
    pub kind: AssetKind,
    pub blob: BlobHash,
    pub mime: String,
    pub dims: Option<Dims>,
    /// Seconds, for video and audio.
    pub duration: Option<f64>,
    pub caption: Option<String>,
    pub control_maps: BTreeMap<MapKind, BlobHash>,
    pub origin: Origin,
    pub created_at: Timestamp,
}

impl Asset {
    /// Caption plus all four control maps are present.
    pub fn metadata_complete(&self) -> bool {
        self.caption.is_some() && self.control_maps.len() == MapKind::ALL.len()
    }
}

/// A spatial instance of an asset on a canvas page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanvasItem {
    pub item_id: ItemId,
    pub page_id: PageId,
    pub asset_id: Option<AssetId>,
    pub position: Vec2,
    pub size: Vec2,
    pub z_order: i64,
    /// 1 is fully opaque; the UI renders this as opacity.
    pub emphasis: f64,
    pub click_count: u64,
    pub last_interaction_at: Timestamp,
    pub created_at: Timestamp,
    pub hidden: bool,
}

impl CanvasItem {
    pub fn center(&self) -> Vec2 {
        Vec2::new(
            self.position.x + self.size.x / 2.0,
            self.position.y + self.size.y / 2.0,
        )
    }
}
