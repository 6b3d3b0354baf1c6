//! Generates on the deterministic mock backend, places the result on a
//! page and recreates the exact spec from the provenance node.
//!
//! Run with `cargo run -p easel-core --example generate_mock`.

use std::sync::Arc;

use easel_core::clock::SystemClock;
use easel_core::document::Placement;
use easel_core::easel::{compile, BackendModel, EaselKind, EaselSpec};
use easel_core::engine::Engine;
use easel_core::ids::Vec2;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let engine = Engine::mock(Arc::new(SystemClock));
    let page = engine.project().create_page("Studio")?.page_id;
    let spec = EaselSpec::new(EaselKind::Draw, BackendModel::Flux, "a lighthouse in a storm").with_seed(7);
    let placement = Placement {
        page_id: page,
        position: Vec2::new(100.0, 100.0),
    };
    for g in engine.generate(spec.clone(), Some(placement))? {
        println!("asset {} ({:?}, {:?})", g.asset.asset_id, g.asset.kind, g.asset.dims);
        println!("caption: {:?}", g.asset.caption);
        println!("node {} placed as {:?}", g.node.node_id, g.item.map(|i| i.item_id));
        let p = engine.project();
        let recreated = p.recreate_easel_spec(&g.node.node_id)?;
        assert_eq!(recreated, spec);
        let same = compile(&recreated)?.canonical_json() == p.submitted_graph(&g.node.node_id)?.expect("stored").canonical_json();
        println!("recreated spec compiles to the submitted graph: {same}");
    }
    Ok(())
}
