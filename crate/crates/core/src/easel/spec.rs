use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::ids::AssetId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EaselKind {
    Draw,
    Paint,
    Trace,
    Modify,
    Animate,
}

impl EaselKind {
    pub const ALL: [EaselKind; 5] = [
        EaselKind::Draw,
        EaselKind::Paint,
        EaselKind::Trace,
        EaselKind::Modify,
        EaselKind::Animate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EaselKind::Draw => "draw",
            EaselKind::Paint => "paint",
            EaselKind::Trace => "trace",
            EaselKind::Modify => "modify",
            EaselKind::Animate => "animate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendModel {
    Sdxl,
    Flux,
    Wan22,
}

impl BackendModel {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendModel::Sdxl => "sdxl",
            BackendModel::Flux => "flux",
            BackendModel::Wan22 => "wan22",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StylePreset {
    Realism,
    Dreamlight,
    Anime,
    RetroAnime,
    Animated,
    #[serde(rename = "3D")]
    ThreeD,
    PixelArt,
}

impl StylePreset {
    pub const ALL: [StylePreset; 7] = [
        StylePreset::Realism,
        StylePreset::Dreamlight,
        StylePreset::Anime,
        StylePreset::RetroAnime,
        StylePreset::Animated,
        StylePreset::ThreeD,
        StylePreset::PixelArt,
    ];

    /// Placeholder suffix used by the templates' LoRA chain.
    pub fn slug(self) -> &'static str {
        match self {
            StylePreset::Realism => "realism",
            StylePreset::Dreamlight => "dreamlight",
            StylePreset::Anime => "anime",
            StylePreset::RetroAnime => "retro_anime",
            StylePreset::Animated => "animated",
            StylePreset::ThreeD => "3d",
            StylePreset::PixelArt => "pixel_art",
        }
    }
}

/// Which precomputed control image a structure slot uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    Pose,
    Depth,
    Scribble,
    Lineart,
}

impl MapKind {
    pub const ALL: [MapKind; 4] = [MapKind::Pose, MapKind::Depth, MapKind::Scribble, MapKind::Lineart];

    pub fn as_str(self) -> &'static str {
        match self {
            MapKind::Pose => "pose",
            MapKind::Depth => "depth",
            MapKind::Scribble => "scribble",
            MapKind::Lineart => "lineart",
        }
    }

    /// Control type name understood by the union ControlNet node.
    pub fn union_type(self) -> &'static str {
        match self {
            MapKind::Pose => "openpose",
            MapKind::Depth => "depth",
            MapKind::Scribble => "hed/pidi/scribble/ted",
            MapKind::Lineart => "canny/lineart/anime_lineart/mlsd",
        }
    }
}

impl FromStr for MapKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MapKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown control map kind {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSlot {
    pub asset: AssetId,
    #[serde(default = "full")]
    pub strength: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<AssetId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureSlot {
    pub asset: AssetId,
    pub map_kind: MapKind,
    #[serde(default = "full")]
    pub strength: f64,
}

fn full() -> f64 {
    1.0
}

/// A width:height ratio such as `16:9`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AspectRatio {
    pub width: u32,
    pub height: u32,
}

impl AspectRatio {
    pub const fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }

    /// Pixel size near one megapixel for this ratio, snapped to multiples of 16.
    pub fn latent_size(self) -> (u32, u32) {
        const AREA: f64 = 1024.0 * 1024.0;
        let r = self.width as f64 / self.height as f64;
        let snap = |v: f64| (((v / 16.0).round() as u32).max(1)) * 16;
        (snap((AREA * r).sqrt()), snap((AREA / r).sqrt()))
    }
}

impl fmt::Display for AspectRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.width, self.height)
    }
}

impl FromStr for AspectRatio {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (w, h) = s
            .split_once(':')
            .ok_or_else(|| format!("aspect ratio {s:?} is not W:H"))?;
        let w: u32 = w.trim().parse().map_err(|_| format!("bad ratio width in {s:?}"))?;
        let h: u32 = h.trim().parse().map_err(|_| format!("bad ratio height in {s:?}"))?;
        if w == 0 || h == 0 {
            return Err(format!("aspect ratio {s:?} has a zero side"));
        }
        Ok(Self::new(w, h))
    }
}

impl Serialize for AspectRatio {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AspectRatio {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One generation request, as filled in on an easel.
///
/// Fields that a given easel kind does not expose must stay at their
/// defaults; [`validate`](super::validate) reports anything else.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EaselSpec {
    pub kind: EaselKind,
    pub backend_model: BackendModel,
    #[serde(default)]
    pub prompt: String,
    #[serde(default)]
    pub negative_prompt: String,
    /// Active style presets and their strengths. Strengths are independent
    /// and need not sum to one.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub styles: BTreeMap<StylePreset, f64>,
    #[serde(default)]
    pub details: f64,
    #[serde(default = "half")]
    pub adherence: f64,
    #[serde(default)]
    pub preserve: f64,
    /// Starting image for draw/paint; the image being edited for trace/modify.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_image: Option<AssetId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub references: Vec<ReferenceSlot>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub style_reference: Option<AssetId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structure: Option<StructureSlot>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub trace_source_prompt: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub trace_target_prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrace_range: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub prompt_pills: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aspect_ratio: Option<AspectRatio>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_frame: Option<AssetId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_frame: Option<AssetId>,
    #[serde(default)]
    pub seed: u64,
    /// Sampling steps; `None` uses the per-template default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<u32>,
}

fn half() -> f64 {
    0.5
}

/// Retrace range used by Trace when none is given.
pub const DEFAULT_RETRACE_RANGE: (f64, f64) = (0.0, 1.0);

impl EaselSpec {
    pub fn new(kind: EaselKind, backend_model: BackendModel, prompt: impl Into<String>) -> Self {
        Self {
            kind,
            backend_model,
            prompt: prompt.into(),
            negative_prompt: String::new(),
            styles: BTreeMap::new(),
            details: 0.0,
            adherence: 0.5,
            preserve: 0.0,
            start_image: None,
            references: Vec::new(),
            style_reference: None,
            structure: None,
            trace_source_prompt: String::new(),
            trace_target_prompt: String::new(),
            retrace_range: None,
            prompt_pills: Vec::new(),
            aspect_ratio: None,
            first_frame: None,
            last_frame: None,
            seed: 0,
            steps: None,
        }
    }

    /// A Trace spec: `source` describes the input image, `target` the result.
    pub fn trace(
        backend_model: BackendModel,
        input: AssetId,
        source: impl Into<String>,
        target: impl Into<String>,
    ) -> Self {
        let mut spec = Self::new(EaselKind::Trace, backend_model, "");
        spec.start_image = Some(input);
        spec.trace_source_prompt = source.into();
        spec.trace_target_prompt = target.into();
        spec
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_negative(mut self, negative: impl Into<String>) -> Self {
        self.negative_prompt = negative.into();
        self
    }

    pub fn with_style(mut self, preset: StylePreset, strength: f64) -> Self {
        self.styles.insert(preset, strength);
        self
    }

    pub fn with_start_image(mut self, asset: AssetId) -> Self {
        self.start_image = Some(asset);
        self
    }

    pub fn with_reference(mut self, asset: AssetId, strength: f64, mask: Option<AssetId>) -> Self {
        self.references.push(ReferenceSlot { asset, strength, mask });
        self
    }

    pub fn with_structure(mut self, asset: AssetId, map_kind: MapKind, strength: f64) -> Self {
        self.structure = Some(StructureSlot { asset, map_kind, strength });
        self
    }

    pub fn with_pill(mut self, pill: impl Into<String>) -> Self {
        self.prompt_pills.push(pill.into());
        self
    }

    /// The positive prompt with prompt pills appended.
    pub fn composed_prompt(&self) -> String {
        let mut parts: Vec<&str> = Vec::new();
        if !self.prompt.trim().is_empty() {
            parts.push(self.prompt.trim());
        }
        parts.extend(self.prompt_pills.iter().map(|p| p.trim()).filter(|p| !p.is_empty()));
        parts.join(", ")
    }

    /// Every asset the spec reads, paired with the slot it occupies.
    pub fn inputs(&self) -> Vec<(AssetId, SlotRole)> {
        let mut out = Vec::new();
        if let Some(a) = &self.start_image {
            let role = match self.kind {
                EaselKind::Trace | EaselKind::Modify => SlotRole::InputImage,
                _ => SlotRole::StartImage,
            };
            out.push((a.clone(), role));
        }
        for (i, r) in self.references.iter().enumerate() {
            out.push((r.asset.clone(), SlotRole::reference(i)));
            if let Some(m) = &r.mask {
                out.push((m.clone(), SlotRole::Mask));
            }
        }
        if let Some(a) = &self.style_reference {
            out.push((a.clone(), SlotRole::Style));
        }
        if let Some(s) = &self.structure {
            out.push((s.asset.clone(), SlotRole::Structure));
        }
        if let Some(a) = &self.first_frame {
            out.push((a.clone(), SlotRole::FirstFrame));
        }
        if let Some(a) = &self.last_frame {
            out.push((a.clone(), SlotRole::LastFrame));
        }
        out
    }
}

/// The role an input played in producing a child asset. Shared with the
/// provenance graph as the edge label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotRole {
    #[serde(rename = "reference_1")]
    Reference1,
    #[serde(rename = "reference_2")]
    Reference2,
    #[serde(rename = "reference_3")]
    Reference3,
    Style,
    Structure,
    StartImage,
    InputImage,
    FirstFrame,
    LastFrame,
    CollageLayer,
    Mask,
    Source,
}

impl SlotRole {
    pub fn reference(index: usize) -> Self {
        match index {
            0 => SlotRole::Reference1,
            1 => SlotRole::Reference2,
            _ => SlotRole::Reference3,
        }
    }
}
