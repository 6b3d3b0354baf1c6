//! Prints how the easel sliders map onto sampler parameters.
//!
//! Run with `cargo run -p easel-core --example slider_maps`.

use easel_core::easel::maps::{default_steps, map_adherence, map_details, map_preserve, map_structure_end, NAG_SCALE_FLUX, NAG_SCALE_WAN};
use easel_core::easel::{BackendModel, EaselKind, MapKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("{:>6} {:>10} {:>10} {:>10}", "slider", "details", "preserve", "flux cfg");
    for i in 0..=10 {
        let v = i as f64 / 10.0;
        println!(
            "{v:>6.1} {:>10.4} {:>10.4} {:>10.4}",
            map_details(v)?,
            map_preserve(v)?,
            map_adherence(BackendModel::Flux, v)?
        );
    }
    println!();
    for kind in MapKind::ALL {
        println!("{:<8} structure ends at {:.0}% of sampling", kind.as_str(), map_structure_end(kind) * 100.0);
    }
    println!();
    for model in [BackendModel::Flux, BackendModel::Sdxl, BackendModel::Wan22] {
        if let Some(steps) = default_steps(EaselKind::Draw, model) {
            println!("{model:?}: {steps} draw steps");
        }
    }
    println!("NAG scale: flux {NAG_SCALE_FLUX}, wan {NAG_SCALE_WAN}");
    Ok(())
}
