//! Slider-to-parameter maps. Each creator-facing control in [0, 1] becomes
//! one backend literal.

use super::spec::{BackendModel, EaselKind, MapKind};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MapError {
    #[error("{name} = {value} is outside [0, 1]")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("unknown control map kind {0:?}")]
    UnknownKind(String),
}

/// Lower end of the Lying Sigmas dishonesty factor.
pub const MAX_DISHONESTY: f64 = -0.05;

/// Normalized Attention Guidance scale for FLUX workflows.
pub const NAG_SCALE_FLUX: f64 = 9.0;
/// Normalized Attention Guidance scale for Wan 2.2 workflows.
pub const NAG_SCALE_WAN: f64 = 11.0;

pub(crate) fn unit(name: &'static str, value: f64) -> Result<f64, MapError> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(MapError::OutOfRange { name, value })
    }
}

/// Details slider to Lying Sigmas dishonesty factor: `d -> -0.05 * d`.
pub fn map_details(details: f64) -> Result<f64, MapError> {
    let d = unit("details", details)?;
    // `-0.0` would serialize differently from `0.0`.
    Ok(if d == 0.0 { 0.0 } else { MAX_DISHONESTY * d })
}

/// Preserve slider to sampler denoise: `p -> 1 - p`.
pub fn map_preserve(preserve: f64) -> Result<f64, MapError> {
    Ok(1.0 - unit("preserve", preserve)?)
}

/// ControlNet end percentage for each structure map kind.
pub fn map_structure_end(kind: MapKind) -> f64 {
    match kind {
        MapKind::Pose => 0.9,
        MapKind::Depth => 0.7,
        MapKind::Scribble => 0.5,
        MapKind::Lineart => 0.4,
    }
}

pub fn map_structure_end_named(kind: &str) -> Result<f64, MapError> {
    kind.parse::<MapKind>()
        .map(map_structure_end)
        .map_err(|_| MapError::UnknownKind(kind.to_owned()))
}

/// Guidance range the adherence slider spans for each model family.
pub fn guidance_range(model: BackendModel) -> (f64, f64) {
    match model {
        BackendModel::Flux => (1.0, 5.0),
        BackendModel::Sdxl => (1.0, 12.0),
        BackendModel::Wan22 => (1.0, 1.5),
    }
}

/// Adherence slider to the model's guidance value, linear over its range.
pub fn map_adherence(model: BackendModel, adherence: f64) -> Result<f64, MapError> {
    let a = unit("adherence", adherence)?;
    let (lo, hi) = guidance_range(model);
    Ok(lo + a * (hi - lo))
}

/// Default sampling steps for a template family, or `None` if no template
/// exists for the combination.
pub fn default_steps(kind: EaselKind, model: BackendModel) -> Option<u32> {
    use BackendModel::*;
    use EaselKind::*;
    match (kind, model) {
        (Draw | Paint, Flux) => Some(8),
        (Draw, Sdxl) => Some(25),
        (Draw, Wan22) => Some(20),
        (Trace, Flux | Wan22) => Some(20),
        (Modify, Flux) => Some(20),
        (Animate, Wan22) => Some(20),
        _ => None,
    }
}

/// FlowEdit step window for a retrace range `(lo, hi)` over `steps`:
/// skip the first `floor(lo * steps)` steps and stop editing after
/// `ceil(hi * steps)`, leaving the remainder as plain refinement.
pub fn retrace_window(range: (f64, f64), steps: u32) -> (u32, u32) {
    let n = steps as f64;
    let skip = (range.0 * n).floor() as u32;
    let stop = ((range.1 * n).ceil() as u32).min(steps);
    (skip.min(steps), steps - stop.max(skip.min(steps)))
}
