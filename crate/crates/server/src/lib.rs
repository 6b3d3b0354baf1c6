//! HTTP service over the easel engine: document persistence, asset
//! transfer, generation jobs, provenance queries and a server-sent event
//! stream of every mutation. The `engine` binary wraps [`cli`].

pub mod api;
pub mod cli;
pub mod config;
pub mod error;
pub mod state;

pub use api::router;
pub use config::Config;
pub use state::{build_engine, AppState, ServerEvent};
