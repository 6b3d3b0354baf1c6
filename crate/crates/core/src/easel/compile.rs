//! EaselSpec to WorkflowGraph compilation.
//!
//! Every easel kind maps onto a fixed template. Optional slots never rewire
//! the graph: an absent input flips its switch to `1` (inactive path), a
//! present input flips it to `2`, and reference slots without an image run
//! at weight 0. Adding or removing an optional input therefore only changes
//! literal values.

use super::graph::WorkflowGraph;
use super::maps::{self, MapError};
use super::pills::{self, PillGroup};
use super::spec::{BackendModel, EaselKind, EaselSpec, MapKind, StylePreset, DEFAULT_RETRACE_RANGE};
use super::template::{Params, TemplateError, TemplateSet};
use super::validate::{validate, Violation};
use crate::ids::AssetId;

/// File name the backend sees for an inactive image slot. The file is a
/// 1x1 transparent PNG uploaded once per backend.
pub const INACTIVE_IMAGE: &str = "easel_inactive.png";

/// Backend file name for an asset's payload.
pub fn input_file(asset: &AssetId) -> String {
    format!("{asset}.png")
}

/// Backend file name for one of an asset's precomputed control maps.
pub fn control_map_file(asset: &AssetId, kind: MapKind) -> String {
    format!("{asset}.{}.png", kind.as_str())
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CompileError {
    #[error("invalid easel spec: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Validation(Vec<Violation>),
    #[error("no template for {kind:?} on {backend:?}{}", if *.style_reference { " with a style reference" } else { "" })]
    UnknownTemplate {
        kind: EaselKind,
        backend: BackendModel,
        style_reference: bool,
    },
    #[error("template {template} has no {slot} slot")]
    UnsupportedSlot {
        template: &'static str,
        slot: &'static str,
    },
    #[error("{0} is not a template-backed quick operation")]
    UnsupportedQuickOp(super::quick::QuickOpKind),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

/// Picks the template for a spec from `(kind, backend, style reference?)`.
pub fn template_name(spec: &EaselSpec) -> Result<&'static str, CompileError> {
    use BackendModel::*;
    use EaselKind::*;
    let uso = spec.style_reference.is_some();
    let name = match (spec.kind, spec.backend_model, uso) {
        (Draw, Flux, false) => "draw_flux",
        (Draw, Sdxl, false) => "draw_sdxl",
        (Draw, Wan22, false) => "draw_wan22",
        (Paint, Flux, false) => "paint_flux",
        (Paint, Flux, true) => "paint_flux_uso",
        (Trace, Flux, false) => "trace_flux",
        (Trace, Flux, true) => "trace_flux_uso",
        (Trace, Wan22, false) => "trace_wan22",
        (Modify, Flux, false) => "modify_flux_kontext",
        (Animate, Wan22, false) => "animate_wan22",
        _ => {
            return Err(CompileError::UnknownTemplate {
                kind: spec.kind,
                backend: spec.backend_model,
                style_reference: uso,
            })
        }
    };
    if name == "trace_wan22" && spec.structure.is_some() {
        return Err(CompileError::UnsupportedSlot {
            template: name,
            slot: "structure",
        });
    }
    Ok(name)
}

fn switch(active: bool) -> u32 {
    if active {
        2
    } else {
        1
    }
}

fn image_slot(p: &mut Params, slot: &str, asset: Option<&AssetId>) {
    p.set(
        format!("{slot}.file"),
        asset.map(input_file).unwrap_or_else(|| INACTIVE_IMAGE.to_owned()),
    );
    p.set(format!("switch.{slot}"), switch(asset.is_some()));
}

fn styles(p: &mut Params, spec: &EaselSpec) {
    for preset in StylePreset::ALL {
        p.set(
            format!("style.{}", preset.slug()),
            spec.styles.get(&preset).copied().unwrap_or(0.0),
        );
    }
}

fn structure(p: &mut Params, spec: &EaselSpec) {
    match &spec.structure {
        Some(s) => {
            p.set("structure.file", control_map_file(&s.asset, s.map_kind))
                .set("structure.union_type", s.map_kind.union_type())
                .set("structure.strength", s.strength)
                .set("structure.end_percent", maps::map_structure_end(s.map_kind))
                .set("switch.structure", 2);
        }
        None => {
            p.set("structure.file", INACTIVE_IMAGE)
                .set("structure.union_type", "auto")
                .set("structure.strength", 0.0)
                .set("structure.end_percent", 0.0)
                .set("switch.structure", 1);
        }
    }
}

fn references(p: &mut Params, spec: &EaselSpec) {
    for i in 0..3 {
        let slot = spec.references.get(i);
        let n = i + 1;
        p.set(
            format!("ref{n}.file"),
            slot.map(|r| input_file(&r.asset))
                .unwrap_or_else(|| INACTIVE_IMAGE.to_owned()),
        );
        p.set(format!("ref{n}.strength"), slot.map(|r| r.strength).unwrap_or(0.0));
        let mask = slot.and_then(|r| r.mask.as_ref());
        p.set(
            format!("ref{n}.mask_file"),
            mask.map(input_file).unwrap_or_else(|| INACTIVE_IMAGE.to_owned()),
        );
        p.set(format!("switch.ref{n}_mask"), switch(mask.is_some()));
    }
}

/// Builds the parameter bindings for `template` from a validated spec.
fn params_for(template: &str, spec: &EaselSpec) -> Result<Params, CompileError> {
    let steps = spec
        .steps
        .or_else(|| maps::default_steps(spec.kind, spec.backend_model))
        .expect("template exists so a default step count exists");
    let mut p = Params::new();
    p.set("seed", spec.seed)
        .set("steps", steps)
        .set("negative_prompt", spec.negative_prompt.as_str())
        .set("details.dishonesty", maps::map_details(spec.details)?)
        .set("guidance", maps::map_adherence(spec.backend_model, spec.adherence)?);

    let denoise = |p: &mut Params, has_image: bool| -> Result<(), MapError> {
        let d = if has_image { maps::map_preserve(spec.preserve)? } else { 1.0 };
        p.set("denoise", d);
        Ok(())
    };

    match spec.kind {
        EaselKind::Draw => {
            p.set("prompt", spec.composed_prompt());
            styles(&mut p, spec);
            image_slot(&mut p, "start_image", spec.start_image.as_ref());
            denoise(&mut p, spec.start_image.is_some())?;
        }
        EaselKind::Paint => {
            p.set("prompt", spec.composed_prompt());
            styles(&mut p, spec);
            image_slot(&mut p, "start_image", spec.start_image.as_ref());
            denoise(&mut p, spec.start_image.is_some())?;
            references(&mut p, spec);
            structure(&mut p, spec);
        }
        EaselKind::Trace => {
            styles(&mut p, spec);
            let input = spec.start_image.as_ref().expect("validated trace has an input");
            p.set("input_image.file", input_file(input))
                .set("trace.source_prompt", spec.trace_source_prompt.as_str())
                .set("trace.target_prompt", spec.trace_target_prompt.as_str());
            denoise(&mut p, true)?;
            let (skip, refine) =
                maps::retrace_window(spec.retrace_range.unwrap_or(DEFAULT_RETRACE_RANGE), steps);
            p.set("flowedit.skip_steps", skip).set("flowedit.refine_steps", refine);
            if template != "trace_wan22" {
                structure(&mut p, spec);
            }
        }
        EaselKind::Modify => {
            p.set("prompt", spec.composed_prompt());
            styles(&mut p, spec);
            let input = spec.start_image.as_ref().expect("validated modify has an input");
            p.set("input_image.file", input_file(input));
            let groups: Vec<PillGroup> = spec
                .prompt_pills
                .iter()
                .filter_map(|t| pills::lookup(EaselKind::Modify, t).map(|p| p.group))
                .collect();
            for (key, group) in [
                ("lora.camera", PillGroup::Camera),
                ("lora.relight", PillGroup::Relight),
                ("lora.style", PillGroup::Style),
            ] {
                p.set(key, if groups.contains(&group) { 1.0 } else { 0.0 });
            }
            let (w, h) = spec.aspect_ratio.map(|r| r.latent_size()).unwrap_or((1024, 1024));
            p.set("aspect.width", w)
                .set("aspect.height", h)
                .set("switch.aspect_ratio", switch(spec.aspect_ratio.is_some()));
        }
        EaselKind::Animate => {
            p.set("prompt", spec.composed_prompt());
            image_slot(&mut p, "first_frame", spec.first_frame.as_ref());
            image_slot(&mut p, "last_frame", spec.last_frame.as_ref());
            p.set("moe.boundary_step", steps / 2);
        }
    }

    if let Some(style) = &spec.style_reference {
        p.set("style_reference.file", input_file(style));
    }
    Ok(p)
}

/// Compiles `spec` against the built-in template set.
pub fn compile(spec: &EaselSpec) -> Result<WorkflowGraph, CompileError> {
    compile_with(TemplateSet::builtin(), spec)
}

pub fn compile_with(templates: &TemplateSet, spec: &EaselSpec) -> Result<WorkflowGraph, CompileError> {
    validate(spec).map_err(CompileError::Validation)?;
    let name = template_name(spec)?;
    let params = params_for(name, spec)?;
    Ok(templates.get(name)?.instantiate(&params)?)
}
