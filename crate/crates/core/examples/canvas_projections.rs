//! The read-side views a canvas needs: history window, activity heatmap,
//! interaction trail and timeline layout.
//!
//! Run with `cargo run -p easel-core --example canvas_projections`.

use std::sync::Arc;

use easel_core::clock::{Clock, ManualClock};
use easel_core::demo;
use easel_core::engine::Engine;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let clock = Arc::new(ManualClock::starting_at(1_700_000_000_000));
    let engine = Engine::mock(clock.clone());
    let seed = demo::seed(&engine)?;
    let mut p = engine.project();
    for (i, item) in seed.items.iter().enumerate() {
        for _ in 0..=i {
            clock.advance(45_000);
            p.touch_item(&item.item_id)?;
        }
    }
    println!("now: {:?}", clock.now());
    for cursor in [0, 5] {
        match p.history_window(cursor) {
            Ok(window) => {
                let ids: Vec<String> = window.iter().map(|e| e.item_id.to_string()).collect();
                println!("history from {cursor}: {}", ids.join(", "));
            }
            Err(e) => println!("history from {cursor}: {e}"),
        }
    }
    for (item, heat) in p.activity_heatmap() {
        println!("heat {item}: {heat:.3}");
    }
    for point in p.trail_path(60_000)? {
        println!("trail at {:?}: ({:.1}, {:.1}) x{}", point.at, point.centroid.x, point.centroid.y, point.weight);
    }
    for entry in p.timeline_layout(1_000.0)? {
        println!("timeline {:?}", entry);
    }
    Ok(())
}
