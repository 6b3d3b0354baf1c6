//! Runs a draw on a real ComfyUI server and records every HTTP exchange,
//! producing fixtures in the same format the conformance tests replay.
//!
//! Run with
//! `cargo run -p easel-core --example remote_backend -- http://127.0.0.1:8188 /tmp/recording`.

use std::sync::Arc;

use easel_core::clock::SystemClock;
use easel_core::easel::{BackendModel, EaselKind, EaselSpec};
use easel_core::engine::{Engine, GatewayPreprocessor};
use easel_core::gateway::remote::{HttpTransport, RemoteDriver};
use easel_core::gateway::wire::{RecordingTransport, Transport};
use easel_core::gateway::{Gateway, GatewayConfig};
use easel_core::project::Project;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let url = args.next().unwrap_or_else(|| "http://127.0.0.1:8188".into());
    let record = args.next();
    let clock = Arc::new(SystemClock);
    let http = HttpTransport::new(&url)?;
    let transport: Arc<dyn Transport> = match &record {
        Some(dir) => Arc::new(RecordingTransport::new(http, dir)?),
        None => Arc::new(http),
    };
    let driver = Arc::new(RemoteDriver::new(transport, "easel-example"));
    let gateway = Gateway::new(driver, clock.clone(), GatewayConfig::default());
    let preprocessor = Arc::new(GatewayPreprocessor::new(gateway.clone()));
    let engine = Engine::new(Project::in_memory(clock), gateway, preprocessor);

    let spec = EaselSpec::new(EaselKind::Draw, BackendModel::Flux, "a lighthouse in a storm").with_seed(1);
    match engine.generate(spec, None) {
        Ok(outputs) => {
            for g in outputs {
                println!("{} {:?} {:?}", g.asset.asset_id, g.asset.dims, g.asset.caption);
            }
        }
        Err(e) => eprintln!("generation on {url} failed: {e}"),
    }
    if let Some(dir) = record {
        println!("exchanges recorded under {dir}");
    }
    Ok(())
}
