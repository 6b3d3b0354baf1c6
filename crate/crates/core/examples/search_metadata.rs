//! Captions and prompts feed a keyword index; queries match word prefixes
//! case-insensitively.
//!
//! Run with `cargo run -p easel-core --example search_metadata -- dragon`.

use std::sync::Arc;

use easel_core::clock::SystemClock;
use easel_core::demo;
use easel_core::easel::{BackendModel, EaselKind, EaselSpec};
use easel_core::engine::Engine;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let engine = Engine::mock(Arc::new(SystemClock));
    let seed = demo::seed(&engine)?;
    engine.generate(
        EaselSpec::new(EaselKind::Draw, BackendModel::Sdxl, "a dragon sleeping on a hoard of gold"),
        None,
    )?;
    engine.project().set_caption(&seed.forest.asset_id, "misty pine forest at dawn")?;
    let query: Vec<String> = std::env::args().skip(1).collect();
    let query = if query.is_empty() { "dragon forest".to_owned() } else { query.join(" ") };
    let p = engine.project();
    for hit in p.search(&query) {
        let asset = p.asset(&hit.asset_id)?;
        println!("{} score {} matched {:?}: {:?}", hit.asset_id, hit.score, hit.matched, asset.caption);
    }
    Ok(())
}
