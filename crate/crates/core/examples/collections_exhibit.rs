//! Collections, pulling copies back onto the canvas, grid packing and an
//! exported exhibit.
//!
//! Run with `cargo run -p easel-core --example collections_exhibit`.

use std::sync::Arc;

use easel_core::clock::SystemClock;
use easel_core::demo;
use easel_core::engine::Engine;
use easel_core::ids::Vec2;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let engine = Engine::mock(Arc::new(SystemClock));
    let seed = demo::seed(&engine)?;
    let mut p = engine.project();

    let heroes = p
        .create_collection("Heroes", &[seed.warrior.asset_id.clone(), seed.dragon.asset_id.clone()], &["characters".into()])?
        .collection_id;
    let pulled = p.instantiate_from_collection(&heroes, &seed.warrior.asset_id, &seed.page, Vec2::new(0.0, 900.0))?;
    let node = p.node_of_item(&pulled.item_id)?;
    println!("pulled {} as {:?}", pulled.item_id, node.kind);

    let ids: Vec<_> = seed.items.iter().map(|i| i.item_id.clone()).collect();
    for (item, pos) in p.pack_grid(&ids, 24.0)? {
        println!("packed {item} at ({}, {})", pos.x, pos.y);
    }

    for asset in [&seed.dragon.asset_id, &seed.forest.asset_id, &seed.warrior.asset_id] {
        p.exhibit_add(asset, "")?;
    }
    let first = p.exhibit_manifest().entries[0].clone();
    println!("exhibit opens with {}", first.asset_id);
    let dir = std::env::temp_dir().join("easel-exhibit-example");
    let manifest = p.export_exhibit(&dir)?;
    println!("wrote {} entries to {}", manifest.entries.len(), dir.display());
    Ok(())
}
