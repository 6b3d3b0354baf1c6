//! A project on disk: every mutation is journaled before it is
//! acknowledged, and reopening replays the journal.
//!
//! Run with `cargo run -p easel-core --example durable_project [dir]`.

use std::sync::Arc;

use easel_core::asset::Origin;
use easel_core::clock::SystemClock;
use easel_core::demo;
use easel_core::ids::Vec2;
use easel_core::media::{encode_png, AssetKind};
use easel_core::project::{Project, ProjectOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("easel-durable-example"));
    let _ = std::fs::remove_dir_all(&dir);
    let options = ProjectOptions {
        sync: true,
        snapshot_every: 4,
    };
    let (doc, seq) = {
        let mut p = Project::open(&dir, Arc::new(SystemClock), options.clone())?;
        let page = p.create_page("Moodboard")?.page_id;
        for i in 0..6u8 {
            let img = demo::sample_image(32, [200, 40 * i, 90], [20, 20, 20], [250, 250, 250], (16.0, 16.0), 6.0);
            let asset = p.ingest(&encode_png(&img, &[]), AssetKind::Image, Origin::Imported)?;
            p.place_item(&asset.asset_id, &page, Vec2::new(i as f64 * 64.0, 0.0), Vec2::new(48.0, 48.0))?;
        }
        (p.document().clone(), p.seq())
    };
    let reopened = Project::open(&dir, Arc::new(SystemClock), options)?;
    println!("journal at {}: {seq} records", dir.display());
    println!("reopened at record {}; identical state: {}", reopened.seq(), reopened.document() == &doc);
    Ok(())
}
