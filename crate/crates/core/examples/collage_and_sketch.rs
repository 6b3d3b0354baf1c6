//! Local generation without a backend: flattening a collage and
//! rasterizing pen strokes, both recorded in provenance.
//!
//! Run with `cargo run -p easel-core --example collage_and_sketch`.

use std::sync::Arc;

use easel_core::clock::SystemClock;
use easel_core::demo;
use easel_core::engine::Engine;
use easel_core::provenance::CollageLayer;
use easel_core::raster::{LayerTransform, Rect, Stroke};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let engine = Engine::mock(Arc::new(SystemClock));
    let seed = demo::seed(&engine)?;
    let layers = [
        CollageLayer {
            asset: seed.forest.asset_id.clone(),
            transform: LayerTransform { x: 0.0, y: 0.0, scale: 0.5, z: 0 },
        },
        CollageLayer {
            asset: seed.dragon.asset_id.clone(),
            transform: LayerTransform { x: 120.0, y: 80.0, scale: 0.25, z: 1 },
        },
    ];
    let collage = engine.flatten_collage(&layers, Rect::new(0.0, 0.0, 512.0, 512.0), None)?;
    println!("collage {} with parents {:?}", collage.asset.asset_id, collage.node.parents);

    let strokes = [Stroke {
        points: vec![(10.0, 10.0), (200.0, 60.0), (120.0, 220.0)],
        width: 6.0,
        color: [20, 20, 20, 255],
    }];
    let sketch = engine.rasterize_strokes(&strokes, Rect::new(0.0, 0.0, 256.0, 256.0), None)?;
    println!("sketch {} ({:?})", sketch.asset.asset_id, sketch.node.kind);
    Ok(())
}
