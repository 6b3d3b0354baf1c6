//! Collections, the Exhibit gallery and grid packing.

use serde::{Deserialize, Serialize};

use crate::ids::{AssetId, CollectionId, EntryId, ItemId, Vec2};

/// A project-wide, taggable set of assets. Membership is by asset, so
/// deleting canvas items never empties a collection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Collection {
    pub collection_id: CollectionId,
    pub name: String,
    pub tags: Vec<String>,
    pub members: Vec<AssetId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExhibitEntry {
    pub entry_id: EntryId,
    pub asset_id: AssetId,
    pub caption: String,
    pub order: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExhibitError {
    #[error("unknown exhibit entry {0}")]
    UnknownEntry(EntryId),
    #[error("index {index} is outside 0..{len}")]
    BadIndex { index: usize, len: usize },
}

/// The curated, ordered gallery. Entries are stored in display order and
/// `order` always equals the entry's position.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Exhibit {
    entries: Vec<ExhibitEntry>,
}

impl Exhibit {
    pub fn entries(&self) -> &[ExhibitEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn position(&self, id: &EntryId) -> Result<usize, ExhibitError> {
        self.entries
            .iter()
            .position(|e| &e.entry_id == id)
            .ok_or_else(|| ExhibitError::UnknownEntry(id.clone()))
    }

    fn renumber(&mut self) {
        for (i, e) in self.entries.iter_mut().enumerate() {
            e.order = i;
        }
    }

    pub fn get(&self, id: &EntryId) -> Result<&ExhibitEntry, ExhibitError> {
        Ok(&self.entries[self.position(id)?])
    }

    pub fn add(&mut self, entry_id: EntryId, asset_id: AssetId, caption: String) -> &ExhibitEntry {
        let order = self.entries.len();
        self.entries.push(ExhibitEntry {
            entry_id,
            asset_id,
            caption,
            order,
        });
        &self.entries[order]
    }

    /// Checks a reorder without applying it.
    pub fn check_reorder(&self, id: &EntryId, to: usize) -> Result<(), ExhibitError> {
        self.position(id)?;
        if to >= self.entries.len() {
            return Err(ExhibitError::BadIndex {
                index: to,
                len: self.entries.len(),
            });
        }
        Ok(())
    }

    /// Moves an entry to index `to`, shifting the others.
    pub fn reorder(&mut self, id: &EntryId, to: usize) -> Result<(), ExhibitError> {
        self.check_reorder(id, to)?;
        let from = self.position(id)?;
        let e = self.entries.remove(from);
        self.entries.insert(to, e);
        self.renumber();
        Ok(())
    }

    pub fn caption(&mut self, id: &EntryId, caption: String) -> Result<(), ExhibitError> {
        let i = self.position(id)?;
        self.entries[i].caption = caption;
        Ok(())
    }

    pub fn remove(&mut self, id: &EntryId) -> Result<ExhibitEntry, ExhibitError> {
        let i = self.position(id)?;
        let e = self.entries.remove(i);
        self.renumber();
        Ok(e)
    }

    /// True when the order indices are exactly `0..n` in storage order.
    pub fn is_permutation(&self) -> bool {
        self.entries.iter().enumerate().all(|(i, e)| e.order == i)
    }
}

/// One line of the exported gallery manifest. `file` is the name the image
/// is written under next to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub order: usize,
    pub asset_id: AssetId,
    pub caption: String,
    pub file: String,
    pub mime: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExhibitManifest {
    pub entries: Vec<ManifestEntry>,
}

/// Current geometry of an item to be packed.
#[derive(Debug, Clone, PartialEq)]
pub struct PackInput {
    pub item_id: ItemId,
    pub position: Vec2,
    pub size: Vec2,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PackError {
    #[error("cell gap must be non-negative and finite (got {0})")]
    BadGap(f64),
}

/// Arranges items row-major into `ceil(sqrt(n))` columns of uniform cells
/// sized to the largest item. Items keep their reading order by current
/// `(y, x)`; the grid starts at the top-left of their current bounding box.
/// A single item is left where it is.
pub fn pack_grid(items: &[PackInput], gap: f64) -> Result<Vec<(ItemId, Vec2)>, PackError> {
    if !(gap.is_finite() && gap >= 0.0) {
        return Err(PackError::BadGap(gap));
    }
    if items.len() <= 1 {
        return Ok(items.iter().map(|i| (i.item_id.clone(), i.position)).collect());
    }
    let mut sorted: Vec<&PackInput> = items.iter().collect();
    sorted.sort_by(|a, b| {
        a.position
            .y
            .total_cmp(&b.position.y)
            .then(a.position.x.total_cmp(&b.position.x))
            .then(a.item_id.cmp(&b.item_id))
    });
    let cols = (items.len() as f64).sqrt().ceil() as usize;
    let cell_w = items.iter().map(|i| i.size.x).fold(0.0, f64::max);
    let cell_h = items.iter().map(|i| i.size.y).fold(0.0, f64::max);
    let ox = items.iter().map(|i| i.position.x).fold(f64::INFINITY, f64::min);
    let oy = items.iter().map(|i| i.position.y).fold(f64::INFINITY, f64::min);
    Ok(sorted
        .into_iter()
        .enumerate()
        .map(|(i, item)| {
            let (row, col) = (i / cols, i % cols);
            (
                item.item_id.clone(),
                Vec2::new(ox + col as f64 * (cell_w + gap), oy + row as f64 * (cell_h + gap)),
            )
        })
        .collect())
}
