//! Caption and control-map preprocessing, plus keyword search.
//!
//! The mock preprocessor stands in for the captioning model and the four
//! ControlNet preprocessors with cheap deterministic transforms of the
//! luminance channel. The output sizes match the input, so every invariant
//! that depends on map dimensions still runs against real data.

use std::collections::{BTreeMap, BTreeSet};

use image::RgbaImage;
use serde::{Deserialize, Serialize};

use crate::asset::Asset;
use crate::easel::spec::MapKind;
use crate::ids::AssetId;
use crate::media::{decode_rgba, encode_gray_png, AssetKind};

/// Threshold on Sobel magnitude for the mock lineart map.
pub const LINEART_THRESHOLD: u32 = 64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetadataError {
    #[error("cannot preprocess {0} assets")]
    WrongAssetKind(&'static str),
    #[error("asset payload is not a readable image: {0}")]
    Undecodable(String),
    #[error("preprocessing backend unavailable: {0}")]
    BackendUnavailable(String),
}

/// Result of preprocessing one asset. Maps are PNG-encoded.
#[derive(Debug, Clone, PartialEq)]
pub struct Metadata {
    pub caption: String,
    pub maps: BTreeMap<MapKind, Vec<u8>>,
}

pub trait Preprocessor: Send + Sync {
    fn preprocess(&self, asset: &Asset, bytes: &[u8]) -> Result<Metadata, MetadataError>;
}

/// Rec. 601 luma in integer arithmetic.
pub fn luma(img: &RgbaImage) -> Vec<u8> {
    img.pixels()
        .map(|p| {
            let [r, g, b, _] = p.0;
            ((299 * r as u32 + 587 * g as u32 + 114 * b as u32 + 500) / 1000) as u8
        })
        .collect()
}

/// Sobel gradient magnitude with clamp-to-edge borders, saturated at 255.
pub fn sobel(luma: &[u8], width: u32, height: u32) -> Vec<u8> {
    let (w, h) = (width as i64, height as i64);
    let at = |x: i64, y: i64| luma[(y.clamp(0, h - 1) * w + x.clamp(0, w - 1)) as usize] as i64;
    let mut out = Vec::with_capacity(luma.len());
    for y in 0..h {
        for x in 0..w {
            let gx = at(x + 1, y - 1) + 2 * at(x + 1, y) + at(x + 1, y + 1)
                - at(x - 1, y - 1)
                - 2 * at(x - 1, y)
                - at(x - 1, y + 1);
            let gy = at(x - 1, y + 1) + 2 * at(x, y + 1) + at(x + 1, y + 1)
                - at(x - 1, y - 1)
                - 2 * at(x, y - 1)
                - at(x + 1, y - 1);
            let m = ((gx * gx + gy * gy) as f64).sqrt().round();
            out.push(m.min(255.0) as u8);
        }
    }
    out
}

/// The four mock control maps as raw grayscale planes.
pub fn mock_maps(img: &RgbaImage) -> BTreeMap<MapKind, Vec<u8>> {
    let l = luma(img);
    let edges = sobel(&l, img.width(), img.height());
    let depth = l.iter().map(|v| 255 - v).collect();
    let lineart = edges
        .iter()
        .map(|&e| if e as u32 >= LINEART_THRESHOLD { 255 } else { 0 })
        .collect();
    BTreeMap::from([
        (MapKind::Pose, l),
        (MapKind::Depth, depth),
        (MapKind::Scribble, edges),
        (MapKind::Lineart, lineart),
    ])
}

pub fn mock_caption(asset: &Asset) -> String {
    format!("mock caption {}", asset.blob.prefix(8))
}

/// Deterministic in-process preprocessor.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockPreprocessor;

impl Preprocessor for MockPreprocessor {
    fn preprocess(&self, asset: &Asset, bytes: &[u8]) -> Result<Metadata, MetadataError> {
        match asset.kind {
            // Video is captioned only; the stub container has no frames to
            // derive control maps from.
            AssetKind::Video => Ok(Metadata {
                caption: mock_caption(asset),
                maps: BTreeMap::new(),
            }),
            k if k.is_raster() => {
                let img = decode_rgba(bytes).map_err(|e| MetadataError::Undecodable(e.to_string()))?;
                let maps = mock_maps(&img)
                    .into_iter()
                    .map(|(k, plane)| (k, encode_gray_png(img.width(), img.height(), &plane)))
                    .collect();
                Ok(Metadata {
                    caption: mock_caption(asset),
                    maps,
                })
            }
            k => Err(MetadataError::WrongAssetKind(k.as_str())),
        }
    }
}

/// Which control map a preprocessing output node produced, from the
/// `filename_prefix` of its save node (`metadata/<kind>`).
pub fn map_kind_for_prefix(prefix: &str) -> Option<MapKind> {
    prefix.rsplit('/').next()?.parse().ok()
}

// ---------------------------------------------------------------------------
// Search

/// Lowercased alphanumeric tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub asset_id: AssetId,
    /// Query tokens that matched at least one indexed token.
    pub matched: Vec<String>,
    /// Sum of term frequencies of all matching indexed tokens.
    pub score: u32,
}

/// Inverted index from token to per-asset term frequency. Queries match
/// case-insensitively on token prefixes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SearchIndex {
    postings: BTreeMap<String, BTreeMap<AssetId, u32>>,
    docs: BTreeMap<AssetId, BTreeMap<String, u32>>,
}

impl SearchIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn remove(&mut self, asset: &AssetId) {
        if let Some(tokens) = self.docs.remove(asset) {
            for t in tokens.keys() {
                if let Some(p) = self.postings.get_mut(t) {
                    p.remove(asset);
                    if p.is_empty() {
                        self.postings.remove(t);
                    }
                }
            }
        }
    }

    /// Replaces everything indexed for `asset` with `texts`.
    pub fn index<'a>(&mut self, asset: &AssetId, texts: impl IntoIterator<Item = &'a str>) {
        self.remove(asset);
        let mut tf: BTreeMap<String, u32> = BTreeMap::new();
        for t in texts.into_iter().flat_map(tokenize) {
            *tf.entry(t).or_default() += 1;
        }
        if tf.is_empty() {
            return;
        }
        for (t, n) in &tf {
            self.postings.entry(t.clone()).or_default().insert(asset.clone(), *n);
        }
        self.docs.insert(asset.clone(), tf);
    }

    /// Tokens indexed for one asset, with frequencies.
    pub fn tokens(&self, asset: &AssetId) -> Option<&BTreeMap<String, u32>> {
        self.docs.get(asset)
    }

    /// Assets whose text contains a token starting with any query token.
    /// Ranked by number of distinct query tokens matched, then score, then
    /// asset id.
    pub fn search(&self, query: &str) -> Vec<SearchHit> {
        let terms: BTreeSet<String> = tokenize(query).into_iter().collect();
        let mut hits: BTreeMap<AssetId, SearchHit> = BTreeMap::new();
        for term in &terms {
            for (token, posting) in self.postings.range(term.clone()..) {
                if !token.starts_with(term.as_str()) {
                    break;
                }
                for (asset, n) in posting {
                    let hit = hits.entry(asset.clone()).or_insert_with(|| SearchHit {
                        asset_id: asset.clone(),
                        matched: Vec::new(),
                        score: 0,
                    });
                    if hit.matched.last() != Some(term) {
                        hit.matched.push(term.clone());
                    }
                    hit.score += n;
                }
            }
        }
        let mut out: Vec<SearchHit> = hits.into_values().collect();
        out.sort_by(|a, b| {
            b.matched
                .len()
                .cmp(&a.matched.len())
                .then(b.score.cmp(&a.score))
                .then(a.asset_id.cmp(&b.asset_id))
        });
        out
    }
}
