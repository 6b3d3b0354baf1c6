//! One-click operations on a single asset.
//!
//! Several quick operations are pared-down easels (Quick Sketch is Draw,
//! Revision/View/Blend are Modify, Quick Animate is Animate); those produce a
//! [`Recipe::Easel`] so that recreating them reopens a full easel. The rest
//! run small dedicated templates, and Palette (plus Stencil when the control
//! maps are already cached) never reaches a backend at all.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::compile::{compile_with, input_file, CompileError};
use super::graph::WorkflowGraph;
use super::palette::{extract_palette, Swatch, DEFAULT_PALETTE_SIZE};
use super::pills::{BLEND_PILL, VIEW_PILL};
use super::spec::{BackendModel, EaselKind, EaselSpec, MapKind, SlotRole};
use super::template::{Params, TemplateSet};
use crate::asset::Asset;
use crate::blob::{BlobHash, BlobStore};
use crate::ids::AssetId;
use crate::media::{decode_rgba, AssetKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuickOpKind {
    QuickSketch,
    RemoveBackground,
    ExtractElement,
    Palette,
    Stencil,
    Revision,
    Upscale,
    Blend,
    Extend,
    View,
    QuickAnimate,
    Sculpt,
}

impl QuickOpKind {
    pub const ALL: [QuickOpKind; 12] = [
        QuickOpKind::QuickSketch,
        QuickOpKind::RemoveBackground,
        QuickOpKind::ExtractElement,
        QuickOpKind::Palette,
        QuickOpKind::Stencil,
        QuickOpKind::Revision,
        QuickOpKind::Upscale,
        QuickOpKind::Blend,
        QuickOpKind::Extend,
        QuickOpKind::View,
        QuickOpKind::QuickAnimate,
        QuickOpKind::Sculpt,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QuickOpKind::QuickSketch => "quick_sketch",
            QuickOpKind::RemoveBackground => "remove_background",
            QuickOpKind::ExtractElement => "extract_element",
            QuickOpKind::Palette => "palette",
            QuickOpKind::Stencil => "stencil",
            QuickOpKind::Revision => "revision",
            QuickOpKind::Upscale => "upscale",
            QuickOpKind::Blend => "blend",
            QuickOpKind::Extend => "extend",
            QuickOpKind::View => "view",
            QuickOpKind::QuickAnimate => "quick_animate",
            QuickOpKind::Sculpt => "sculpt",
        }
    }

    pub fn requires_prompt(self) -> bool {
        matches!(self, QuickOpKind::ExtractElement | QuickOpKind::Revision)
    }

    /// Name of the dedicated template, for ops that are not easels.
    pub fn template(self) -> Option<&'static str> {
        Some(match self {
            QuickOpKind::RemoveBackground => "quick_remove_background",
            QuickOpKind::ExtractElement => "quick_extract_element",
            QuickOpKind::Stencil => "quick_stencil",
            QuickOpKind::Upscale => "quick_upscale",
            QuickOpKind::Extend => "quick_extend",
            QuickOpKind::Sculpt => "quick_sculpt",
            _ => return None,
        })
    }

    pub fn accepts(self, kind: AssetKind) -> bool {
        match self {
            QuickOpKind::QuickSketch => kind == AssetKind::Text,
            _ => kind.is_raster(),
        }
    }
}

impl fmt::Display for QuickOpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QuickOpKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        QuickOpKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown quick operation {s:?}"))
    }
}

/// Frozen description of a template-backed quick operation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuickOpSpec {
    pub op: QuickOpKind,
    pub asset: AssetId,
    #[serde(default)]
    pub prompt: String,
    #[serde(default)]
    pub seed: u64,
}

/// Everything needed to rebuild a submitted graph byte-for-byte. This is the
/// parameter snapshot stored on provenance nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Recipe {
    Easel(EaselSpec),
    QuickOp(QuickOpSpec),
}

impl Recipe {
    pub fn compile(&self) -> Result<WorkflowGraph, CompileError> {
        self.compile_with(TemplateSet::builtin())
    }

    pub fn compile_with(&self, templates: &TemplateSet) -> Result<WorkflowGraph, CompileError> {
        match self {
            Recipe::Easel(spec) => compile_with(templates, spec),
            Recipe::QuickOp(q) => compile_template_op(templates, q),
        }
    }

    /// Input assets with the slot each one filled.
    pub fn inputs(&self) -> Vec<(AssetId, SlotRole)> {
        match self {
            Recipe::Easel(spec) => spec.inputs(),
            Recipe::QuickOp(q) => vec![(q.asset.clone(), SlotRole::InputImage)],
        }
    }

    /// Free text worth indexing for search.
    pub fn search_text(&self) -> Vec<&str> {
        match self {
            Recipe::Easel(s) => {
                let mut out = vec![
                    s.prompt.as_str(),
                    s.negative_prompt.as_str(),
                    s.trace_source_prompt.as_str(),
                    s.trace_target_prompt.as_str(),
                ];
                out.extend(s.prompt_pills.iter().map(String::as_str));
                out.retain(|t| !t.is_empty());
                out
            }
            Recipe::QuickOp(q) if !q.prompt.is_empty() => vec![q.prompt.as_str()],
            Recipe::QuickOp(_) => Vec::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Recipe::Easel(s) => s.seed,
            Recipe::QuickOp(q) => q.seed,
        }
    }
}

fn compile_template_op(templates: &TemplateSet, q: &QuickOpSpec) -> Result<WorkflowGraph, CompileError> {
    let name = q.op.template().ok_or(CompileError::UnsupportedQuickOp(q.op))?;
    let mut p = Params::new();
    p.set("input_image.file", input_file(&q.asset));
    match q.op {
        QuickOpKind::ExtractElement => {
            p.set("prompt", q.prompt.as_str());
        }
        QuickOpKind::Extend => {
            p.set("prompt", q.prompt.as_str()).set("seed", q.seed);
        }
        QuickOpKind::Sculpt => {
            p.set("seed", q.seed);
        }
        _ => {}
    }
    Ok(templates.get(name)?.instantiate(&p)?)
}

/// Result of a quick operation that runs in-process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LocalResult {
    Palette { colors: Vec<Swatch> },
    ControlMaps { maps: BTreeMap<MapKind, BlobHash> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum QuickPlan {
    /// Submit `graph` to a backend; store `recipe` on the output's node.
    Generate { recipe: Recipe, graph: WorkflowGraph },
    Local(LocalResult),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QuickOpError {
    #[error("{0} needs a prompt")]
    MissingPrompt(QuickOpKind),
    #[error("{op} does not apply to {kind} assets")]
    WrongAssetKind { op: QuickOpKind, kind: &'static str },
    #[error("cannot read asset pixels: {0}")]
    Unreadable(String),
    #[error(transparent)]
    Compile(#[from] CompileError),
}

/// Plans quick operation `op` on `asset`.
///
/// `blobs` is only read for Palette, which decodes the asset locally.
pub fn compile_quick_op(
    op: QuickOpKind,
    asset: &Asset,
    prompt: Option<&str>,
    seed: u64,
    blobs: &BlobStore,
) -> Result<QuickPlan, QuickOpError> {
    if !op.accepts(asset.kind) {
        return Err(QuickOpError::WrongAssetKind {
            op,
            kind: asset.kind.as_str(),
        });
    }
    let prompt = prompt.map(str::trim).unwrap_or_default();
    if op.requires_prompt() && prompt.is_empty() {
        return Err(QuickOpError::MissingPrompt(op));
    }
    let id = asset.asset_id.clone();
    let modify = |pill: Option<&str>| {
        let mut spec = EaselSpec::new(EaselKind::Modify, BackendModel::Flux, prompt)
            .with_start_image(id.clone())
            .with_seed(seed);
        if let Some(p) = pill {
            spec = spec.with_pill(p);
        }
        Recipe::Easel(spec)
    };
    let recipe = match op {
        QuickOpKind::Palette => {
            let bytes = blobs
                .get(&asset.blob)
                .map_err(|e| QuickOpError::Unreadable(e.to_string()))?;
            let img = decode_rgba(&bytes).map_err(|e| QuickOpError::Unreadable(e.to_string()))?;
            return Ok(QuickPlan::Local(LocalResult::Palette {
                colors: extract_palette(&img, DEFAULT_PALETTE_SIZE),
            }));
        }
        QuickOpKind::Stencil if asset.control_maps.len() == MapKind::ALL.len() => {
            return Ok(QuickPlan::Local(LocalResult::ControlMaps {
                maps: asset.control_maps.clone(),
            }));
        }
        QuickOpKind::QuickSketch => {
            let text = asset.caption.as_deref().unwrap_or_default();
            Recipe::Easel(EaselSpec::new(EaselKind::Draw, BackendModel::Flux, text.trim()).with_seed(seed))
        }
        QuickOpKind::Revision => modify(None),
        QuickOpKind::Blend => modify(Some(BLEND_PILL)),
        QuickOpKind::View => modify(Some(VIEW_PILL)),
        QuickOpKind::QuickAnimate => {
            let mut spec = EaselSpec::new(EaselKind::Animate, BackendModel::Wan22, prompt).with_seed(seed);
            spec.first_frame = Some(id);
            Recipe::Easel(spec)
        }
        _ => Recipe::QuickOp(QuickOpSpec {
            op,
            asset: id,
            prompt: prompt.to_owned(),
            seed,
        }),
    };
    let graph = recipe.compile()?;
    Ok(QuickPlan::Generate { recipe, graph })
}
