use std::fmt;

use serde::{Deserialize, Serialize};

use super::pills;
use super::spec::{EaselKind, EaselSpec};

/// Maximum number of image references an easel accepts.
pub const MAX_REFERENCES: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn check_unit(out: &mut Vec<Violation>, field: &str, v: f64) {
    if !(0.0..=1.0).contains(&v) {
        out.push(Violation::new(field, format!("{v} is outside [0, 1]")));
    }
}

struct Slots {
    start_image: bool,
    references: bool,
    style_reference: bool,
    structure: bool,
    styles: bool,
    trace_prompts: bool,
    pills: bool,
    aspect_ratio: bool,
    frames: bool,
}

fn slots(kind: EaselKind) -> Slots {
    let none = Slots {
        start_image: false,
        references: false,
        style_reference: false,
        structure: false,
        styles: false,
        trace_prompts: false,
        pills: false,
        aspect_ratio: false,
        frames: false,
    };
    match kind {
        EaselKind::Draw => Slots { start_image: true, styles: true, ..none },
        EaselKind::Paint => Slots {
            start_image: true,
            references: true,
            style_reference: true,
            structure: true,
            styles: true,
            ..none
        },
        EaselKind::Trace => Slots {
            start_image: true,
            style_reference: true,
            structure: true,
            styles: true,
            trace_prompts: true,
            ..none
        },
        EaselKind::Modify => Slots {
            start_image: true,
            styles: true,
            pills: true,
            aspect_ratio: true,
            ..none
        },
        EaselKind::Animate => Slots { pills: true, frames: true, ..none },
    }
}

/// Checks every structural rule of an [`EaselSpec`]. Returns all violations
/// at once rather than stopping at the first.
pub fn validate(spec: &EaselSpec) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    let kind = spec.kind.as_str();
    let allowed = slots(spec.kind);
    let unsupported = |field: &str| Violation::new(field, format!("not available on the {kind} easel"));

    check_unit(&mut out, "details", spec.details);
    check_unit(&mut out, "adherence", spec.adherence);
    check_unit(&mut out, "preserve", spec.preserve);

    if spec.steps == Some(0) {
        out.push(Violation::new("steps", "must be a positive integer"));
    }

    if !spec.styles.is_empty() && !allowed.styles {
        out.push(unsupported("styles"));
    }
    for (preset, strength) in &spec.styles {
        check_unit(&mut out, &format!("styles.{}", preset.slug()), *strength);
    }

    if spec.start_image.is_some() && !allowed.start_image {
        out.push(unsupported("start_image"));
    }

    if !spec.references.is_empty() && !allowed.references {
        out.push(unsupported("references"));
    }
    if spec.references.len() > MAX_REFERENCES {
        out.push(Violation::new(
            "references",
            format!(
                "at most {MAX_REFERENCES} image references are allowed (got {})",
                spec.references.len()
            ),
        ));
    }
    for (i, r) in spec.references.iter().enumerate() {
        check_unit(&mut out, &format!("references[{i}].strength"), r.strength);
    }

    if spec.style_reference.is_some() && !allowed.style_reference {
        out.push(unsupported("style_reference"));
    }

    match &spec.structure {
        Some(_) if !allowed.structure => out.push(unsupported("structure")),
        Some(s) => check_unit(&mut out, "structure.strength", s.strength),
        None => {}
    }

    if allowed.trace_prompts {
        if spec.start_image.is_none() {
            out.push(Violation::new("start_image", "trace needs an input image"));
        }
        if spec.trace_source_prompt.trim().is_empty() {
            out.push(Violation::new(
                "trace_source_prompt",
                "trace needs a prompt describing the input image",
            ));
        }
        if spec.trace_target_prompt.trim().is_empty() {
            out.push(Violation::new(
                "trace_target_prompt",
                "trace needs a prompt describing the desired image",
            ));
        }
        if !spec.prompt.trim().is_empty() {
            out.push(Violation::new(
                "prompt",
                "trace takes trace_source_prompt and trace_target_prompt instead",
            ));
        }
        if let Some((lo, hi)) = spec.retrace_range {
            check_unit(&mut out, "retrace_range.lo", lo);
            check_unit(&mut out, "retrace_range.hi", hi);
            if lo > hi {
                out.push(Violation::new("retrace_range", format!("lo {lo} exceeds hi {hi}")));
            }
        }
    } else {
        if !spec.trace_source_prompt.is_empty() {
            out.push(unsupported("trace_source_prompt"));
        }
        if !spec.trace_target_prompt.is_empty() {
            out.push(unsupported("trace_target_prompt"));
        }
        if spec.retrace_range.is_some() {
            out.push(unsupported("retrace_range"));
        }
    }

    if spec.kind == EaselKind::Modify && spec.start_image.is_none() {
        out.push(Violation::new("start_image", "modify needs an image to edit"));
    }

    if !spec.prompt_pills.is_empty() && !allowed.pills {
        out.push(unsupported("prompt_pills"));
    } else {
        for (i, p) in spec.prompt_pills.iter().enumerate() {
            if pills::lookup(spec.kind, p).is_none() {
                out.push(Violation::new(
                    format!("prompt_pills[{i}]"),
                    format!("{p:?} is not a {kind} preset"),
                ));
            }
        }
    }

    if spec.aspect_ratio.is_some() && !allowed.aspect_ratio {
        out.push(unsupported("aspect_ratio"));
    }
    if !allowed.frames {
        if spec.first_frame.is_some() {
            out.push(unsupported("first_frame"));
        }
        if spec.last_frame.is_some() {
            out.push(unsupported("last_frame"));
        }
    }

    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}
