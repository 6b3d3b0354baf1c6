//! Random valid easel specs and optional-slot toggles.

use rand::seq::SliceRandom;
use rand::Rng;

use easel_core::easel::graph::{Input, WorkflowGraph};
use easel_core::easel::pills::{ANIMATE_PILLS, MODIFY_PILLS};
use easel_core::easel::spec::{AspectRatio, ReferenceSlot, StructureSlot};
use easel_core::easel::{BackendModel, EaselKind, EaselSpec, MapKind, StylePreset};
use easel_core::ids::AssetId;

/// Every `(kind, backend, style reference)` combination that has a
/// template.
pub const VARIANTS: [(EaselKind, BackendModel, bool); 10] = [
    (EaselKind::Draw, BackendModel::Flux, false),
    (EaselKind::Draw, BackendModel::Sdxl, false),
    (EaselKind::Draw, BackendModel::Wan22, false),
    (EaselKind::Paint, BackendModel::Flux, false),
    (EaselKind::Paint, BackendModel::Flux, true),
    (EaselKind::Trace, BackendModel::Flux, false),
    (EaselKind::Trace, BackendModel::Flux, true),
    (EaselKind::Trace, BackendModel::Wan22, false),
    (EaselKind::Modify, BackendModel::Flux, false),
    (EaselKind::Animate, BackendModel::Wan22, false),
];

const WORDS: &[&str] = &[
    "warrior", "forest", "dragon", "castle", "lighthouse", "fox", "river", "neon", "city", "portrait", "cape",
    "storm", "meadow", "robot", "violin", "desert", "glacier", "lantern", "harbor", "owl",
];

const RATIOS: &[&str] = &["16:9", "4:3", "1:1", "9:16", "3:2", "21:9"];

pub fn words<R: Rng>(rng: &mut R, min: usize, max: usize) -> String {
    let n = rng.gen_range(min..=max);
    (0..n).map(|_| *WORDS.choose(rng).expect("non-empty")).collect::<Vec<_>>().join(" ")
}

/// A slider value in [0, 1] that hits both endpoints now and then.
pub fn unit<R: Rng>(rng: &mut R) -> f64 {
    match rng.gen_range(0..8) {
        0 => 0.0,
        1 => 1.0,
        _ => rng.gen::<f64>(),
    }
}

fn pick<R: Rng>(rng: &mut R, pool: &[AssetId]) -> AssetId {
    pool.choose(rng).expect("asset pool is non-empty").clone()
}

fn map_kind<R: Rng>(rng: &mut R) -> MapKind {
    *MapKind::ALL.choose(rng).expect("non-empty")
}

fn ratio<R: Rng>(rng: &mut R) -> AspectRatio {
    RATIOS.choose(rng).expect("non-empty").parse().expect("valid ratio")
}

fn pills<R: Rng>(rng: &mut R, catalog: &[&'static str], max: usize) -> Vec<String> {
    let n = rng.gen_range(0..=max);
    catalog.choose_multiple(rng, n).map(|p| p.to_string()).collect()
}

pub fn modify_pills() -> Vec<&'static str> {
    MODIFY_PILLS.iter().map(|p| p.text).collect()
}

pub fn animate_pills() -> Vec<&'static str> {
    ANIMATE_PILLS.iter().map(|p| p.text).collect()
}

/// A random spec for a random template variant, drawing inputs from `pool`.
pub fn random_spec<R: Rng>(rng: &mut R, pool: &[AssetId]) -> EaselSpec {
    let (kind, model, uso) = *VARIANTS.choose(rng).expect("non-empty");
    random_spec_for(rng, pool, kind, model, uso)
}

pub fn random_spec_for<R: Rng>(rng: &mut R, pool: &[AssetId], kind: EaselKind, model: BackendModel, uso: bool) -> EaselSpec {
    let prompt = if kind == EaselKind::Trace { String::new() } else { words(rng, 1, 6) };
    let mut s = EaselSpec::new(kind, model, prompt);
    s.seed = rng.gen_range(0..1u64 << 48);
    s.details = unit(rng);
    s.adherence = unit(rng);
    s.preserve = unit(rng);
    if rng.gen_bool(0.3) {
        s.negative_prompt = words(rng, 1, 3);
    }
    if rng.gen_bool(0.2) {
        s.steps = Some(rng.gen_range(1..=40));
    }
    if kind != EaselKind::Animate {
        for p in StylePreset::ALL {
            if rng.gen_bool(0.25) {
                s.styles.insert(p, unit(rng));
            }
        }
    }
    if uso {
        s.style_reference = Some(pick(rng, pool));
    }
    match kind {
        EaselKind::Draw => {
            if rng.gen_bool(0.5) {
                s.start_image = Some(pick(rng, pool));
            }
        }
        EaselKind::Paint => {
            if rng.gen_bool(0.5) {
                s.start_image = Some(pick(rng, pool));
            }
            for _ in 0..rng.gen_range(0..=3) {
                let mask = rng.gen_bool(0.3).then(|| pick(rng, pool));
                s.references.push(ReferenceSlot {
                    asset: pick(rng, pool),
                    strength: unit(rng),
                    mask,
                });
            }
            if rng.gen_bool(0.5) {
                s.structure = Some(structure(rng, pool));
            }
        }
        EaselKind::Trace => {
            s.start_image = Some(pick(rng, pool));
            s.trace_source_prompt = words(rng, 2, 5);
            s.trace_target_prompt = words(rng, 2, 5);
            if rng.gen_bool(0.5) {
                let (a, b) = (unit(rng), unit(rng));
                s.retrace_range = Some((a.min(b), a.max(b)));
            }
            if model == BackendModel::Flux && rng.gen_bool(0.5) {
                s.structure = Some(structure(rng, pool));
            }
        }
        EaselKind::Modify => {
            s.start_image = Some(pick(rng, pool));
            s.prompt_pills = pills(rng, &modify_pills(), 3);
            if rng.gen_bool(0.5) {
                s.aspect_ratio = Some(ratio(rng));
            }
        }
        EaselKind::Animate => {
            s.prompt_pills = pills(rng, &animate_pills(), 2);
            if rng.gen_bool(0.5) {
                s.first_frame = Some(pick(rng, pool));
            }
            if rng.gen_bool(0.5) {
                s.last_frame = Some(pick(rng, pool));
            }
        }
    }
    s
}

fn structure<R: Rng>(rng: &mut R, pool: &[AssetId]) -> StructureSlot {
    StructureSlot {
        asset: pick(rng, pool),
        map_kind: map_kind(rng),
        strength: unit(rng),
    }
}

/// One optional slot of a spec, filled and emptied.
#[derive(Debug, Clone)]
pub struct Toggle {
    pub slot: &'static str,
    pub with: EaselSpec,
    pub without: EaselSpec,
    /// The slot is routed through a switch node (rather than a weight).
    pub switched: bool,
}

/// Every optional slot the spec's template offers, each toggled on and off
/// with everything else held fixed.
pub fn toggles<R: Rng>(rng: &mut R, pool: &[AssetId], spec: &EaselSpec) -> Vec<Toggle> {
    let mut out = Vec::new();
    let mut toggle = |slot: &'static str, switched: bool, set: &mut dyn FnMut(&mut EaselSpec, bool)| {
        let mut with = spec.clone();
        set(&mut with, true);
        let mut without = spec.clone();
        set(&mut without, false);
        out.push(Toggle {
            slot,
            with,
            without,
            switched,
        });
    };
    let a = pick(rng, pool);
    let b = pick(rng, pool);
    let strength = unit(rng).max(0.05);
    let slot_structure = structure(rng, pool);
    let ratio = ratio(rng);
    let preset = *StylePreset::ALL.choose(rng).expect("non-empty");
    let negative = words(rng, 1, 3);
    let (lo, hi) = {
        let (x, y) = (unit(rng), unit(rng));
        (x.min(y), x.max(y))
    };

    toggle("negative_prompt", false, &mut |s, on| {
        s.negative_prompt = if on { negative.clone() } else { String::new() }
    });

    if spec.kind != EaselKind::Animate {
        toggle("styles", false, &mut |s, on| {
            if on {
                s.styles.insert(preset, strength);
            } else {
                s.styles.remove(&preset);
            }
        });
    }

    match spec.kind {
        EaselKind::Draw => {
            toggle("start_image", true, &mut |s, on| s.start_image = on.then(|| a.clone()));
        }
        EaselKind::Paint => {
            toggle("start_image", true, &mut |s, on| s.start_image = on.then(|| a.clone()));
            toggle("structure", true, &mut |s, on| s.structure = on.then(|| slot_structure.clone()));
            // The last reference slot: present with an image, absent.
            let base_refs = {
                let mut r = spec.references.clone();
                if r.is_empty() {
                    r.push(ReferenceSlot {
                        asset: a.clone(),
                        strength,
                        mask: None,
                    });
                }
                r
            };
            toggle("reference", false, &mut |s, on| {
                s.references = base_refs.clone();
                if !on {
                    s.references.pop();
                }
            });
            toggle("reference_mask", true, &mut |s, on| {
                s.references = base_refs.clone();
                let last = s.references.last_mut().expect("at least one reference");
                last.mask = on.then(|| b.clone());
            });
        }
        EaselKind::Trace => {
            toggle("retrace_range", false, &mut |s, on| s.retrace_range = on.then_some((lo, hi)));
            if spec.backend_model == BackendModel::Flux {
                toggle("structure", true, &mut |s, on| s.structure = on.then(|| slot_structure.clone()));
            }
        }
        EaselKind::Modify => {
            toggle("aspect_ratio", true, &mut |s, on| s.aspect_ratio = on.then_some(ratio));
            let extra = modify_pills()
                .into_iter()
                .find(|p| !spec.prompt_pills.iter().any(|q| q == p))
                .expect("catalog is larger than any random selection");
            toggle("prompt_pill", false, &mut |s, on| {
                s.prompt_pills.retain(|p| p != extra);
                if on {
                    s.prompt_pills.push(extra.to_owned());
                }
            });
        }
        EaselKind::Animate => {
            toggle("first_frame", true, &mut |s, on| s.first_frame = on.then(|| a.clone()));
            toggle("last_frame", true, &mut |s, on| s.last_frame = on.then(|| b.clone()));
            let extra = animate_pills()
                .into_iter()
                .find(|p| !spec.prompt_pills.iter().any(|q| q == p))
                .expect("catalog is larger than any random selection");
            toggle("prompt_pill", false, &mut |s, on| {
                s.prompt_pills.retain(|p| p != extra);
                if on {
                    s.prompt_pills.push(extra.to_owned());
                }
            });
        }
    }
    out
}

/// A literal input that differs between two structurally equal graphs.
#[derive(Debug, Clone, PartialEq)]
pub struct LiteralDiff {
    pub node: String,
    pub class_type: String,
    pub input: String,
    pub a: serde_json::Value,
    pub b: serde_json::Value,
}

/// Checks that `a` and `b` have the same nodes, classes, input names and
/// links, and returns the literal inputs that differ.
pub fn literal_diff(a: &WorkflowGraph, b: &WorkflowGraph) -> Result<Vec<LiteralDiff>, String> {
    let ids_a: Vec<&String> = a.nodes.keys().collect();
    let ids_b: Vec<&String> = b.nodes.keys().collect();
    if ids_a != ids_b {
        return Err(format!("node sets differ: {ids_a:?} vs {ids_b:?}"));
    }
    let mut diffs = Vec::new();
    for (id, na) in &a.nodes {
        let nb = &b.nodes[id];
        if na.class_type != nb.class_type {
            return Err(format!("node {id}: class {} vs {}", na.class_type, nb.class_type));
        }
        let keys_a: Vec<&String> = na.inputs.keys().collect();
        let keys_b: Vec<&String> = nb.inputs.keys().collect();
        if keys_a != keys_b {
            return Err(format!("node {id}: inputs {keys_a:?} vs {keys_b:?}"));
        }
        for (name, ia) in &na.inputs {
            match (ia, &nb.inputs[name]) {
                (Input::Literal(x), Input::Literal(y)) => {
                    if x != y {
                        diffs.push(LiteralDiff {
                            node: id.clone(),
                            class_type: na.class_type.clone(),
                            input: name.clone(),
                            a: x.clone(),
                            b: y.clone(),
                        });
                    }
                }
                (x, y) if x == y => {}
                (x, y) => return Err(format!("node {id}.{name}: {x:?} vs {y:?}")),
            }
        }
    }
    Ok(diffs)
}

/// The class of node that routes optional inputs.
pub const SWITCH_CLASS: &str = "ImpactSwitch";
