//! A small, fully deterministic fixture document: one page with a few
//! procedurally drawn reference images, a text note and a "Warrior"
//! collection. Used by `engine demo-seed`, the runnable examples and the
//! end-to-end tests.

use image::{Rgba, RgbaImage};
use serde::{Deserialize, Serialize};

use crate::asset::{Asset, CanvasItem};
use crate::engine::{Engine, Result};
use crate::ids::{CollectionId, PageId, Vec2};
use crate::media::{self, AssetKind};

pub const DEMO_PAGE: &str = "Demo";
pub const DEMO_SIZE: u32 = 256;
pub const WARRIOR_NOTE: &str = "female warrior wearing a cape, standing on a cliff at dawn";

/// Ids of everything the seed created.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoSeed {
    pub page: PageId,
    pub warrior: Asset,
    pub forest: Asset,
    pub dragon: Asset,
    pub texture: Asset,
    pub note: Asset,
    pub items: Vec<CanvasItem>,
    pub collection: CollectionId,
}

/// Vertical two-color gradient with a filled disc.
pub fn sample_image(size: u32, top: [u8; 3], bottom: [u8; 3], disc: [u8; 3], centre: (f64, f64), radius: f64) -> RgbaImage {
    RgbaImage::from_fn(size, size, |x, y| {
        let (dx, dy) = (x as f64 + 0.5 - centre.0, y as f64 + 0.5 - centre.1);
        if dx * dx + dy * dy <= radius * radius {
            return Rgba([disc[0], disc[1], disc[2], 255]);
        }
        let t = y as f64 / (size - 1).max(1) as f64;
        let mix = |a: u8, b: u8| (a as f64 + (b as f64 - a as f64) * t).round() as u8;
        Rgba([mix(top[0], bottom[0]), mix(top[1], bottom[1]), mix(top[2], bottom[2]), 255])
    })
}

/// Diagonal stripes, for a texture-like reference.
pub fn stripes(size: u32, a: [u8; 3], b: [u8; 3], period: u32) -> RgbaImage {
    RgbaImage::from_fn(size, size, |x, y| {
        let c = if ((x + y) / period.max(1)) % 2 == 0 { a } else { b };
        Rgba([c[0], c[1], c[2], 255])
    })
}

fn png(img: &RgbaImage) -> Vec<u8> {
    media::encode_png(img, &[])
}

/// Seeds `engine` with the demo document.
pub fn seed(engine: &Engine) -> Result<DemoSeed> {
    let s = DEMO_SIZE;
    let half = s as f64 / 2.0;
    let warrior = engine.ingest(
        &png(&sample_image(s, [250, 200, 150], [120, 40, 40], [30, 30, 60], (half, half * 0.8), s as f64 * 0.2)),
        AssetKind::Image,
    )?;
    let forest = engine.ingest(
        &png(&sample_image(s, [170, 210, 240], [20, 90, 40], [240, 230, 180], (s as f64 * 0.75, s as f64 * 0.25), s as f64 * 0.1)),
        AssetKind::Image,
    )?;
    let dragon = engine.ingest(
        &png(&sample_image(s, [60, 20, 20], [10, 10, 10], [200, 40, 20], (half, half), s as f64 * 0.35)),
        AssetKind::Image,
    )?;
    let texture = engine.ingest(&png(&stripes(s, [180, 150, 90], [110, 80, 40], 16)), AssetKind::Image)?;
    let note = engine.ingest(WARRIOR_NOTE.as_bytes(), AssetKind::Text)?;

    let mut p = engine.project();
    let page = p.create_page(DEMO_PAGE)?.page_id;
    let mut items = Vec::new();
    for (i, a) in [&warrior, &forest, &dragon, &texture, &note].into_iter().enumerate() {
        let size = p.default_size(a);
        items.push(p.place_item(&a.asset_id, &page, Vec2::new(i as f64 * 300.0, 0.0), size)?);
    }
    let collection = p
        .create_collection("Warrior", &[warrior.asset_id.clone()], &["character".to_owned()])?
        .collection_id;
    Ok(DemoSeed {
        page,
        warrior,
        forest,
        dragon,
        texture,
        note,
        items,
        collection,
    })
}
