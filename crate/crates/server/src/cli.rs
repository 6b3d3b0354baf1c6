//! The `engine` command line: `serve`, `compile` and `demo-seed`.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand};

use easel_core::clock::SystemClock;
use easel_core::easel::{compile, CompileError, EaselSpec};
use easel_core::engine::Engine;
use easel_core::gateway::mock::MockDriver;
use easel_core::gateway::{Gateway, GatewayConfig};
use easel_core::metadata::MockPreprocessor;
use easel_core::project::{Project, ProjectOptions};

use crate::config::Config;
use crate::state::{build_engine, AppState};

/// Exit status when a spec fails validation.
pub const EXIT_INVALID_SPEC: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "engine", about = "Canvas generation engine")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Compile an easel spec (JSON) into a backend workflow graph.
    Compile {
        spec: PathBuf,
        /// Write the graph here instead of stdout.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Load the demo document into a data directory.
    DemoSeed {
        /// Data directory (defaults to the config's, or `easel-data`).
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Seed even if the directory already holds a document.
        #[arg(long)]
        force: bool,
    },
}

/// Runs `cli`, returning the process exit status.
pub fn run(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::Serve { config } => {
            let config = Config::load(&config)?;
            serve(config)?;
            Ok(0)
        }
        Command::Compile { spec, out } => {
            let text = std::fs::read(&spec).with_context(|| format!("reading {}", spec.display()))?;
            let (code, bytes) = compile_command(&text);
            match (code, out) {
                (0, Some(path)) => std::fs::write(&path, &bytes).with_context(|| format!("writing {}", path.display()))?,
                (0, None) => std::io::stdout().write_all(&bytes)?,
                _ => std::io::stderr().write_all(&bytes)?,
            }
            Ok(code)
        }
        Command::DemoSeed { data_dir, config, force } => {
            let dir = match (data_dir, config) {
                (Some(d), _) => d,
                (None, Some(c)) => Config::load(&c)?.data_dir,
                (None, None) => Config::default().data_dir,
            };
            let summary = demo_seed(&dir, force)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(0)
        }
    }
}

/// Compiles spec JSON. Returns `(0, canonical graph)` or a non-zero status
/// and a JSON error body (with the violation list for invalid specs).
pub fn compile_command(spec_json: &[u8]) -> (i32, Vec<u8>) {
    let spec: EaselSpec = match serde_json::from_slice(spec_json) {
        Ok(s) => s,
        Err(e) => {
            let body = serde_json::json!({ "error": "malformed_spec", "message": e.to_string() });
            return (1, format!("{body:#}\n").into_bytes());
        }
    };
    match compile(&spec) {
        Ok(graph) => (0, graph.canonical_json()),
        Err(CompileError::Validation(v)) => {
            let body = serde_json::json!({ "error": "invalid_spec", "violations": v });
            (EXIT_INVALID_SPEC, format!("{body:#}\n").into_bytes())
        }
        Err(e) => {
            let body = serde_json::json!({ "error": "compile_failed", "message": e.to_string() });
            (1, format!("{body:#}\n").into_bytes())
        }
    }
}

/// Seeds the demo document into `dir` (mock preprocessing; no backend
/// needed) and returns what was created.
pub fn demo_seed(dir: &Path, force: bool) -> anyhow::Result<easel_core::demo::DemoSeed> {
    let clock = Arc::new(SystemClock);
    let project = Project::open(dir, clock.clone(), ProjectOptions::default())?;
    if project.seq() > 0 && !force {
        anyhow::bail!(
            "{} already holds a document ({} records); pass --force to add the demo anyway",
            dir.display(),
            project.seq()
        );
    }
    let gateway = Gateway::new(Arc::new(MockDriver::default()), clock, GatewayConfig::default());
    let engine = Engine::new(project, gateway, Arc::new(MockPreprocessor));
    let seed = easel_core::demo::seed(&engine)?;
    engine.project().snapshot()?;
    Ok(seed)
}

/// Runs the server until Ctrl-C.
pub fn serve(config: Config) -> anyhow::Result<()> {
    let engine = build_engine(&config)?;
    let listen = config.listen.clone();
    let state = AppState::new(engine, config);
    let app = crate::api::router(state.clone());
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&listen)
            .await
            .with_context(|| format!("binding {listen}"))?;
        log::info!("listening on {}", listener.local_addr()?);
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        anyhow::Ok(())
    })?;
    state.shutdown();
    Ok(())
}
