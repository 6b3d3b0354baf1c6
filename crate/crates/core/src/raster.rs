//! Deterministic compositing for the Collage and Sketch easels.
//!
//! Blending is premultiplied-alpha source-over in `f64`, rounded once when
//! the final pixel is written. Layers are sampled nearest-neighbour up to a
//! 2x upscale and bilinearly beyond that.

use std::cmp::Ordering;

use image::{Rgba, RgbaImage};
use serde::{Deserialize, Serialize};

/// Axis-aligned rectangle in canvas units. Canvas units map 1:1 to output
/// pixels, so `width`/`height` are the raster size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

impl Rect {
    pub const fn new(x: f64, y: f64, width: f64, height: f64) -> Self {
        Self { x, y, width, height }
    }

    pub fn is_positive(&self) -> bool {
        self.width >= 1.0 && self.height >= 1.0 && self.width.is_finite() && self.height.is_finite()
    }

    pub fn pixel_size(&self) -> (u32, u32) {
        (self.width.round() as u32, self.height.round() as u32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerTransform {
    pub x: f64,
    pub y: f64,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub z: i64,
}

fn one() -> f64 {
    1.0
}

/// A decoded layer ready to composite. `key` breaks z ties so the result
/// does not depend on the order layers were listed in.
pub struct Layer<'a> {
    pub key: &'a str,
    pub image: &'a RgbaImage,
    pub transform: LayerTransform,
}

fn layer_order(a: &Layer<'_>, b: &Layer<'_>) -> Ordering {
    a.transform
        .z
        .cmp(&b.transform.z)
        .then_with(|| a.key.cmp(b.key))
        .then_with(|| a.transform.x.total_cmp(&b.transform.x))
        .then_with(|| a.transform.y.total_cmp(&b.transform.y))
        .then_with(|| a.transform.scale.total_cmp(&b.transform.scale))
}

type Premul = [f64; 4];

fn premultiply(px: Rgba<u8>) -> Premul {
    let a = px[3] as f64 / 255.0;
    [
        px[0] as f64 / 255.0 * a,
        px[1] as f64 / 255.0 * a,
        px[2] as f64 / 255.0 * a,
        a,
    ]
}

fn over(src: Premul, dst: Premul) -> Premul {
    let k = 1.0 - src[3];
    [
        src[0] + dst[0] * k,
        src[1] + dst[1] * k,
        src[2] + dst[2] * k,
        src[3] + dst[3] * k,
    ]
}

fn unpremultiply(p: Premul) -> Rgba<u8> {
    let to_u8 = |v: f64| (v * 255.0).round().clamp(0.0, 255.0) as u8;
    if p[3] <= 0.0 {
        return Rgba([0, 0, 0, 0]);
    }
    Rgba([
        to_u8(p[0] / p[3]),
        to_u8(p[1] / p[3]),
        to_u8(p[2] / p[3]),
        to_u8(p[3]),
    ])
}

fn sample(img: &RgbaImage, u: f64, v: f64, bilinear: bool) -> Option<Premul> {
    let (w, h) = (img.width() as f64, img.height() as f64);
    if u < 0.0 || v < 0.0 || u >= w || v >= h {
        return None;
    }
    if !bilinear {
        return Some(premultiply(*img.get_pixel(u as u32, v as u32)));
    }
    // Pixel centres sit at +0.5; clamp the 2x2 footprint to the image.
    let fx = (u - 0.5).max(0.0);
    let fy = (v - 0.5).max(0.0);
    let x0 = (fx.floor() as u32).min(img.width() - 1);
    let y0 = (fy.floor() as u32).min(img.height() - 1);
    let x1 = (x0 + 1).min(img.width() - 1);
    let y1 = (y0 + 1).min(img.height() - 1);
    let tx = fx - x0 as f64;
    let ty = fy - y0 as f64;
    let p00 = premultiply(*img.get_pixel(x0, y0));
    let p10 = premultiply(*img.get_pixel(x1, y0));
    let p01 = premultiply(*img.get_pixel(x0, y1));
    let p11 = premultiply(*img.get_pixel(x1, y1));
    let mut out = [0.0; 4];
    for c in 0..4 {
        let top = p00[c] * (1.0 - tx) + p10[c] * tx;
        let bottom = p01[c] * (1.0 - tx) + p11[c] * tx;
        out[c] = top * (1.0 - ty) + bottom * ty;
    }
    Some(out)
}

/// Composites `layers` over a transparent `rect` in ascending z.
pub fn composite(layers: &[Layer<'_>], rect: Rect) -> RgbaImage {
    let (w, h) = rect.pixel_size();
    let mut order: Vec<&Layer<'_>> = layers.iter().collect();
    order.sort_by(|a, b| layer_order(a, b));

    let mut acc = vec![[0.0f64; 4]; (w as usize) * (h as usize)];
    for layer in order {
        let t = layer.transform;
        let bilinear = t.scale > 2.0;
        for oy in 0..h {
            let cy = rect.y + oy as f64 + 0.5;
            let v = (cy - t.y) / t.scale;
            if v < 0.0 || v >= layer.image.height() as f64 {
                continue;
            }
            for ox in 0..w {
                let cx = rect.x + ox as f64 + 0.5;
                let u = (cx - t.x) / t.scale;
                if let Some(src) = sample(layer.image, u, v, bilinear) {
                    let i = oy as usize * w as usize + ox as usize;
                    acc[i] = over(src, acc[i]);
                }
            }
        }
    }

    let mut out = RgbaImage::new(w, h);
    for (px, p) in out.pixels_mut().zip(acc) {
        *px = unpremultiply(p);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stroke {
    /// Polyline vertices in canvas units.
    pub points: Vec<(f64, f64)>,
    pub width: f64,
    /// Straight (non-premultiplied) RGBA.
    pub color: [u8; 4],
}

fn dist2_to_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
    (p.0 - qx).powi(2) + (p.1 - qy).powi(2)
}

/// Rasterizes strokes with round caps and joins onto a transparent `rect`.
/// Coverage is binary: a pixel is painted when its centre lies within half
/// the stroke width of the polyline. Each stroke paints a pixel at most once.
pub fn rasterize(strokes: &[Stroke], rect: Rect) -> RgbaImage {
    let (w, h) = rect.pixel_size();
    let mut acc = vec![[0.0f64; 4]; (w as usize) * (h as usize)];
    for stroke in strokes {
        if stroke.points.is_empty() || stroke.width <= 0.0 {
            continue;
        }
        let r = stroke.width / 2.0;
        let r2 = r * r;
        let (mut minx, mut miny, mut maxx, mut maxy) =
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for &(x, y) in &stroke.points {
            minx = minx.min(x);
            miny = miny.min(y);
            maxx = maxx.max(x);
            maxy = maxy.max(y);
        }
        let px_range = |lo: f64, hi: f64, origin: f64, n: u32| {
            let a = ((lo - r - origin).floor().max(0.0)) as u32;
            let b = ((hi + r - origin).ceil().max(0.0) as u32).min(n);
            a..b
        };
        let src = premultiply(Rgba(stroke.color));
        let segments: Vec<((f64, f64), (f64, f64))> = if stroke.points.len() == 1 {
            vec![(stroke.points[0], stroke.points[0])]
        } else {
            stroke.points.windows(2).map(|s| (s[0], s[1])).collect()
        };
        for oy in px_range(miny, maxy, rect.y, h) {
            let cy = rect.y + oy as f64 + 0.5;
            for ox in px_range(minx, maxx, rect.x, w) {
                let cx = rect.x + ox as f64 + 0.5;
                let hit = segments
                    .iter()
                    .any(|&(a, b)| dist2_to_segment((cx, cy), a, b) <= r2);
                if hit {
                    let i = oy as usize * w as usize + ox as usize;
                    acc[i] = over(src, acc[i]);
                }
            }
        }
    }
    let mut out = RgbaImage::new(w, h);
    for (px, p) in out.pixels_mut().zip(acc) {
        *px = unpremultiply(p);
    }
    out
}
