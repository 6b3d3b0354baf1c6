//! Deterministic in-process backend.
//!
//! Every output is a pure function of the canonical graph bytes: images are
//! solid-color PNGs whose color is the first three bytes of the graph hash,
//! with the hash and the declared output size stamped into `tEXt` chunks.
//! Videos and meshes are minimal valid containers carrying the same stamp,
//! and text outputs (captions) name the hash. Output sizes come from the
//! graph's `width`/`height` literals.

use image::{Rgba, RgbaImage};

use super::{Driver, DriverError, Execution, JobOutput, Step, Upload};
use crate::easel::graph::WorkflowGraph;
use crate::ids::JobId;
use crate::media::{self, AssetKind, Dims};

/// Size used when a graph declares none (image-to-image workflows).
pub const DEFAULT_DIMS: Dims = Dims::new(1024, 1024);
/// Frame rate the `length` literal of video graphs is interpreted at.
pub const VIDEO_FPS: u32 = 16;
/// Duration of a mock video whose graph declares no frame count.
pub const DEFAULT_VIDEO_MS: u32 = 5_000;

pub const HASH_KEY: &str = "easel:graph_hash";
pub const DIMS_KEY: &str = "easel:dims";

fn literal_u64(node: &crate::easel::graph::Node, name: &str) -> Option<u64> {
    node.literal(name).and_then(|v| v.as_u64())
}

/// The output size a graph declares: the first node (in numeric id order)
/// with integer `width` and `height` literals.
pub fn declared_dims(graph: &WorkflowGraph) -> Dims {
    let mut ids: Vec<&String> = graph.nodes.keys().collect();
    ids.sort_by_key(|id| (id.parse::<u64>().unwrap_or(u64::MAX), id.as_str()));
    ids.into_iter()
        .filter_map(|id| {
            let n = &graph.nodes[id];
            Some(Dims::new(literal_u64(n, "width")? as u32, literal_u64(n, "height")? as u32))
        })
        .next()
        .unwrap_or(DEFAULT_DIMS)
}

/// Video duration from the first `length` (frame count) literal.
pub fn declared_duration_ms(graph: &WorkflowGraph) -> u32 {
    graph
        .nodes
        .values()
        .filter_map(|n| literal_u64(n, "length"))
        .find(|&frames| frames > 1)
        .map(|frames| (frames * 1000 / VIDEO_FPS as u64) as u32)
        .unwrap_or(DEFAULT_VIDEO_MS)
}

/// The color a mock image for `hash` is filled with.
pub fn mock_color(hash: &str) -> [u8; 3] {
    let b = hex::decode(&hash[..6]).expect("graph hashes are hex");
    [b[0], b[1], b[2]]
}

/// Renders every output of `graph`.
pub fn render_outputs(graph: &WorkflowGraph) -> Vec<JobOutput> {
    let hash = graph.hash();
    let dims = declared_dims(graph);
    let dims_text = format!("{}x{}", dims.width, dims.height);
    let [r, g, b] = mock_color(&hash);
    graph
        .output_nodes()
        .into_iter()
        .enumerate()
        .map(|(i, (node, kind))| {
            let prefix = graph.nodes[node]
                .literal("filename_prefix")
                .and_then(|v| v.as_str())
                .unwrap_or("easel");
            let (ext, bytes) = match kind {
                AssetKind::Video => (
                    "mp4",
                    media::write_stub_mp4(dims, declared_duration_ms(graph), &format!("{HASH_KEY}={hash}")),
                ),
                AssetKind::Model3d => (
                    "glb",
                    media::write_stub_glb(&serde_json::json!({ HASH_KEY: hash, DIMS_KEY: dims_text })),
                ),
                AssetKind::Text => ("txt", format!("mock output {}", &hash[..8]).into_bytes()),
                _ => (
                    "png",
                    media::encode_png(
                        &RgbaImage::from_pixel(dims.width, dims.height, Rgba([r, g, b, 255])),
                        &[(HASH_KEY, &hash), (DIMS_KEY, &dims_text)],
                    ),
                ),
            };
            JobOutput {
                node: node.to_owned(),
                kind,
                filename: format!("{prefix}_{:05}_.{ext}", i + 1),
                bytes,
            }
        })
        .collect()
}

/// Backend that finishes every job after a fixed number of progress ticks.
#[derive(Debug, Clone)]
pub struct MockDriver {
    ticks: u32,
    failure: Option<String>,
}

impl Default for MockDriver {
    fn default() -> Self {
        Self::with_ticks(4)
    }
}

impl MockDriver {
    pub fn with_ticks(ticks: u32) -> Self {
        Self { ticks, failure: None }
    }

    /// A backend on which every generation fails with `reason`.
    pub fn failing(reason: impl Into<String>) -> Self {
        Self {
            ticks: 1,
            failure: Some(reason.into()),
        }
    }
}

impl Driver for MockDriver {
    fn name(&self) -> &'static str {
        "mock"
    }

    fn start(&self, _job: &JobId, graph: &WorkflowGraph, _uploads: &[Upload]) -> Result<Box<dyn Execution>, DriverError> {
        Ok(Box::new(MockExecution {
            graph: graph.clone(),
            ticks: self.ticks,
            done: 0,
            failure: self.failure.clone(),
        }))
    }
}

struct MockExecution {
    graph: WorkflowGraph,
    ticks: u32,
    done: u32,
    failure: Option<String>,
}

impl Execution for MockExecution {
    fn poll(&mut self) -> Result<Step, DriverError> {
        if self.done < self.ticks {
            self.done += 1;
            return Ok(Step::Progress(self.done as f64 / (self.ticks + 1) as f64));
        }
        Ok(match &self.failure {
            Some(reason) => Step::Failed(reason.clone()),
            None => Step::Done(render_outputs(&self.graph)),
        })
    }

    fn cancel(&mut self) -> Result<(), DriverError> {
        Ok(())
    }
}
