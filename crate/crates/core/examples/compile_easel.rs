//! Compiles an easel spec into a backend workflow graph and shows which
//! optional paths are switched on.
//!
//! Run with `cargo run -p easel-core --example compile_easel`.

use easel_core::easel::compile::template_name;
use easel_core::easel::{compile, BackendModel, EaselKind, EaselSpec, MapKind, StylePreset};
use easel_core::ids::AssetId;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = EaselSpec::new(EaselKind::Paint, BackendModel::Flux, "a knight resting under an ancient oak")
        .with_negative("blurry, low detail")
        .with_style(StylePreset::ALL[0], 0.6)
        .with_start_image(AssetId::from_seq(1))
        .with_reference(AssetId::from_seq(2), 0.8, None)
        .with_structure(AssetId::from_seq(3), MapKind::Depth, 0.7)
        .with_seed(42);
    let graph = compile(&spec)?;
    println!("template: {}", template_name(&spec)?);
    println!("nodes:    {}", graph.nodes.len());
    println!("hash:     {}", graph.hash());
    for (id, node) in graph.nodes_of_class("ImpactSwitch") {
        println!("switch {id}: select = {}", node.literal("select").expect("switches carry a literal"));
    }
    println!("{}", String::from_utf8(graph.canonical_json())?);
    Ok(())
}
