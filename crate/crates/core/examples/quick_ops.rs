//! Runs one-click operations on the demo assets: some become generation
//! jobs, others (like the palette) run locally.
//!
//! Run with `cargo run -p easel-core --example quick_ops`.

use std::sync::Arc;

use easel_core::clock::SystemClock;
use easel_core::demo;
use easel_core::easel::QuickOpKind;
use easel_core::engine::Engine;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let engine = Engine::mock(Arc::new(SystemClock));
    let seed = demo::seed(&engine)?;
    let runs = [
        (QuickOpKind::QuickSketch, &seed.note.asset_id, None),
        (QuickOpKind::Upscale, &seed.warrior.asset_id, None),
        (QuickOpKind::RemoveBackground, &seed.dragon.asset_id, None),
        (QuickOpKind::Revision, &seed.forest.asset_id, Some("add falling snow")),
        (QuickOpKind::Palette, &seed.forest.asset_id, None),
    ];
    for (op, asset, prompt) in runs {
        match engine.run_quick_op(op, asset, prompt, None)? {
            Ok(outputs) => {
                for g in outputs {
                    println!("{op}: {} -> {} ({:?})", asset, g.asset.asset_id, g.asset.kind);
                }
            }
            Err(local) => println!("{op}: {asset} -> {}", serde_json::to_string(&local)?),
        }
    }
    Ok(())
}
