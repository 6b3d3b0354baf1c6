//! Median-cut palette extraction.
//!
//! Works on a color histogram of the opaque-ish pixels (alpha > 0). Boxes are
//! split at the population median of their widest channel until `k` boxes
//! exist or no box spans more than one value. Each box reports the rounded
//! mean of its pixels.

use std::collections::BTreeMap;
use std::fmt;

use image::RgbaImage;
use serde::{Deserialize, Serialize};

pub const DEFAULT_PALETTE_SIZE: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Rgb(pub [u8; 3]);

impl Rgb {
    pub fn hex(self) -> String {
        format!("#{:02x}{:02x}{:02x}", self.0[0], self.0[1], self.0[2])
    }
}

impl fmt::Display for Rgb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.hex())
    }
}

impl Serialize for Rgb {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.hex())
    }
}

impl<'de> Deserialize<'de> for Rgb {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let digits = s.strip_prefix('#').unwrap_or(&s);
        let bytes = hex::decode(digits).map_err(serde::de::Error::custom)?;
        <[u8; 3]>::try_from(bytes.as_slice())
            .map(Rgb)
            .map_err(|_| serde::de::Error::custom(format!("{s:?} is not #rrggbb")))
    }
}

/// One palette entry: a color and how many pixels it stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Swatch {
    pub color: Rgb,
    pub population: u64,
}

type Bin = ([u8; 3], u64);

fn channel_range(bins: &[Bin], c: usize) -> u8 {
    let lo = bins.iter().map(|b| b.0[c]).min().unwrap_or(0);
    let hi = bins.iter().map(|b| b.0[c]).max().unwrap_or(0);
    hi - lo
}

fn widest(bins: &[Bin]) -> (usize, u8) {
    // Ties prefer R, then G, then B.
    (0..3).fold((0, 0), |best, c| {
        let r = channel_range(bins, c);
        if r > best.1 {
            (c, r)
        } else {
            best
        }
    })
}

fn split(mut bins: Vec<Bin>) -> (Vec<Bin>, Vec<Bin>) {
    let (c, _) = widest(&bins);
    bins.sort_by_key(|b| b.0[c]);
    let total: u64 = bins.iter().map(|b| b.1).sum();
    // Value of the pixel at population index total/2.
    let mut seen = 0;
    let mut median = bins[0].0[c];
    for b in &bins {
        seen += b.1;
        if seen > total / 2 {
            median = b.0[c];
            break;
        }
    }
    let (lo, hi): (Vec<Bin>, Vec<Bin>) = bins.iter().partition(|b| b.0[c] < median);
    if !lo.is_empty() {
        return (lo, hi);
    }
    bins.into_iter().partition(|b| b.0[c] <= median)
}

fn mean(bins: &[Bin]) -> Swatch {
    let n: u64 = bins.iter().map(|b| b.1).sum();
    let mut color = [0u8; 3];
    for (c, slot) in color.iter_mut().enumerate() {
        let sum: u64 = bins.iter().map(|b| b.0[c] as u64 * b.1).sum();
        *slot = ((sum + n / 2) / n) as u8;
    }
    Swatch {
        color: Rgb(color),
        population: n,
    }
}

/// Extracts at most `k` colors, ordered by population (descending) and then
/// by hex code. Fewer than `k` colors come back when the image has fewer
/// distinct colors; a fully transparent image yields an empty palette.
pub fn extract_palette(img: &RgbaImage, k: usize) -> Vec<Swatch> {
    let mut hist: BTreeMap<[u8; 3], u64> = BTreeMap::new();
    for p in img.pixels().filter(|p| p.0[3] > 0) {
        *hist.entry([p.0[0], p.0[1], p.0[2]]).or_default() += 1;
    }
    if hist.is_empty() || k == 0 {
        return Vec::new();
    }
    let mut boxes: Vec<Vec<Bin>> = vec![hist.into_iter().collect()];
    while boxes.len() < k {
        // Box with the widest single-channel range; ties go to the earliest.
        let pick = boxes
            .iter()
            .enumerate()
            .map(|(i, b)| (i, widest(b).1))
            .fold(None, |best: Option<(usize, u8)>, (i, r)| match best {
                Some((_, br)) if br >= r => best,
                _ => Some((i, r)),
            });
        let Some((i, range)) = pick else { break };
        if range == 0 {
            break;
        }
        let (lo, hi) = split(boxes.remove(i));
        boxes.insert(i, hi);
        boxes.insert(i, lo);
    }

    let mut merged: BTreeMap<Rgb, u64> = BTreeMap::new();
    for b in &boxes {
        let s = mean(b);
        *merged.entry(s.color).or_default() += s.population;
    }
    let mut out: Vec<Swatch> = merged
        .into_iter()
        .map(|(color, population)| Swatch { color, population })
        .collect();
    out.sort_by(|a, b| b.population.cmp(&a.population).then(a.color.hex().cmp(&b.color.hex())));
    out
}
