//! Preset prompt pills offered by the Modify and Animate easels.

use super::spec::EaselKind;

/// Which LoRA a Modify pill switches on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PillGroup {
    Camera,
    Relight,
    Style,
    Motion,
}

pub struct Pill {
    pub text: &'static str,
    pub group: PillGroup,
}

const fn pill(text: &'static str, group: PillGroup) -> Pill {
    Pill { text, group }
}

pub const BLEND_PILL: &str = "make the style and lighting consistent across the image";
pub const VIEW_PILL: &str = "show the subject from a different camera angle";

pub static MODIFY_PILLS: &[Pill] = &[
    pill("low angle shot", PillGroup::Camera),
    pill("high angle shot", PillGroup::Camera),
    pill("bird's eye view", PillGroup::Camera),
    pill("close-up shot", PillGroup::Camera),
    pill("wide establishing shot", PillGroup::Camera),
    pill("rotate the camera 45 degrees to the left", PillGroup::Camera),
    pill("rotate the camera 45 degrees to the right", PillGroup::Camera),
    pill(VIEW_PILL, PillGroup::Camera),
    pill("warm golden hour lighting", PillGroup::Relight),
    pill("cool blue moonlight", PillGroup::Relight),
    pill("dramatic rim lighting from behind", PillGroup::Relight),
    pill("soft diffused studio lighting", PillGroup::Relight),
    pill("harsh midday sunlight", PillGroup::Relight),
    pill("dim candlelight", PillGroup::Relight),
    pill(BLEND_PILL, PillGroup::Relight),
    pill("turn it into a watercolor painting", PillGroup::Style),
    pill("turn it into a pencil sketch", PillGroup::Style),
    pill("turn it into a clay render", PillGroup::Style),
    pill("turn it into a comic book panel", PillGroup::Style),
];

pub static ANIMATE_PILLS: &[Pill] = &[
    pill("the camera pans left", PillGroup::Motion),
    pill("the camera pans right", PillGroup::Motion),
    pill("the camera slowly pushes in", PillGroup::Motion),
    pill("the camera pulls back", PillGroup::Motion),
    pill("the camera orbits around the subject", PillGroup::Motion),
    pill("the camera tilts up", PillGroup::Motion),
    pill("static camera", PillGroup::Motion),
    pill("handheld camera shake", PillGroup::Motion),
];

pub fn catalog(kind: EaselKind) -> &'static [Pill] {
    match kind {
        EaselKind::Modify => MODIFY_PILLS,
        EaselKind::Animate => ANIMATE_PILLS,
        _ => &[],
    }
}

pub fn lookup(kind: EaselKind, text: &str) -> Option<&'static Pill> {
    catalog(kind).iter().find(|p| p.text == text)
}
