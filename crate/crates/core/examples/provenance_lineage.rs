//! Builds a short chain of generations and prints the lineage of the last
//! one, then exports the whole provenance DAG as JSON.
//!
//! Run with `cargo run -p easel-core --example provenance_lineage`.

use std::sync::Arc;

use easel_core::clock::SystemClock;
use easel_core::demo;
use easel_core::easel::{BackendModel, EaselKind, EaselSpec};
use easel_core::engine::Engine;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let engine = Engine::mock(Arc::new(SystemClock));
    let seed = demo::seed(&engine)?;
    let paint = EaselSpec::new(EaselKind::Paint, BackendModel::Flux, "a warrior in a forest")
        .with_start_image(seed.warrior.asset_id.clone())
        .with_reference(seed.forest.asset_id.clone(), 0.6, None);
    let painted = engine.generate(paint, None)?.remove(0);
    let trace = EaselSpec::trace(BackendModel::Flux, painted.asset.asset_id.clone(), "a warrior in a forest", "an ink drawing of a warrior in a forest");
    let traced = engine.generate(trace, None)?.remove(0);

    let mut p = engine.project();
    // Deleting a node hides it from the canvas but keeps its history.
    p.soft_delete(&painted.node.node_id)?;
    let lineage = p.lineage(&traced.node.node_id)?;
    println!("ancestors of {}:", traced.node.node_id);
    for e in &lineage.ancestors {
        println!("  {} asset {}{}", e.node_id, e.asset_id, if e.deleted { " (deleted)" } else { "" });
    }
    for e in &lineage.ancestor_edges {
        println!("  {} <-{:?}- {}", e.child, e.role, e.parent);
    }
    println!("{}", serde_json::to_string_pretty(&p.export_dag())?);
    Ok(())
}
