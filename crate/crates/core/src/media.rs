//! Payload sniffing and the small container writers used by the mock backend.
//!
//! Images go through the `image` crate. MP4 and GLB only need their headers
//! parsed (duration, dimensions), so those are read by hand.

use image::{ImageFormat, RgbaImage};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssetKind {
    Image,
    Video,
    Text,
    Audio,
    Model3d,
    Sketch,
}

impl AssetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AssetKind::Image => "image",
            AssetKind::Video => "video",
            AssetKind::Text => "text",
            AssetKind::Audio => "audio",
            AssetKind::Model3d => "model3d",
            AssetKind::Sketch => "sketch",
        }
    }

    /// Raster kinds carry pixel dimensions and can feed image slots.
    pub fn is_raster(self) -> bool {
        matches!(self, AssetKind::Image | AssetKind::Sketch)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub width: u32,
    pub height: u32,
}

impl Dims {
    pub const fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub dims: Option<Dims>,
    pub duration: Option<f64>,
    pub mime: &'static str,
    pub text: Option<String>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ProbeError {
    #[error("payload is empty")]
    Empty,
    #[error("payload does not decode as {0}: {1}")]
    Undecodable(&'static str, String),
}

fn undecodable(kind: AssetKind, why: impl Into<String>) -> ProbeError {
    ProbeError::Undecodable(kind.as_str(), why.into())
}

/// Checks that `bytes` really is a `kind` payload and extracts what the
/// registry records about it.
pub fn probe(kind: AssetKind, bytes: &[u8]) -> Result<Probe, ProbeError> {
    if bytes.is_empty() {
        return Err(ProbeError::Empty);
    }
    match kind {
        AssetKind::Image | AssetKind::Sketch => probe_image(kind, bytes),
        AssetKind::Video => probe_mp4(bytes),
        AssetKind::Text => {
            let text = std::str::from_utf8(bytes)
                .map_err(|e| undecodable(kind, e.to_string()))?
                .to_owned();
            Ok(Probe {
                dims: None,
                duration: None,
                mime: "text/plain; charset=utf-8",
                text: Some(text),
            })
        }
        AssetKind::Audio => probe_audio(bytes),
        AssetKind::Model3d => probe_glb(bytes),
    }
}

fn probe_image(kind: AssetKind, bytes: &[u8]) -> Result<Probe, ProbeError> {
    let format =
        image::guess_format(bytes).map_err(|_| undecodable(kind, "unrecognised image header"))?;
    let mime = match format {
        ImageFormat::Png => "image/png",
        ImageFormat::Jpeg => "image/jpeg",
        ImageFormat::WebP => "image/webp",
        other => return Err(undecodable(kind, format!("unsupported format {other:?}"))),
    };
    let reader = image::ImageReader::with_format(std::io::Cursor::new(bytes), format);
    let (width, height) = reader
        .into_dimensions()
        .map_err(|e| undecodable(kind, e.to_string()))?;
    if width == 0 || height == 0 {
        return Err(undecodable(kind, "zero-sized image"));
    }
    Ok(Probe {
        dims: Some(Dims::new(width, height)),
        duration: None,
        mime,
        text: None,
    })
}

struct Mp4Box<'a> {
    kind: [u8; 4],
    body: &'a [u8],
}

fn mp4_boxes(mut data: &[u8]) -> Option<Vec<Mp4Box<'_>>> {
    let mut out = Vec::new();
    while !data.is_empty() {
        if data.len() < 8 {
            return None;
        }
        let size32 = u32::from_be_bytes(data[0..4].try_into().ok()?) as u64;
        let kind: [u8; 4] = data[4..8].try_into().ok()?;
        let (header, size) = match size32 {
            0 => (8usize, data.len() as u64),
            1 => {
                if data.len() < 16 {
                    return None;
                }
                (16, u64::from_be_bytes(data[8..16].try_into().ok()?))
            }
            n => (8, n),
        };
        if size < header as u64 || size > data.len() as u64 {
            return None;
        }
        let size = size as usize;
        out.push(Mp4Box {
            kind,
            body: &data[header..size],
        });
        data = &data[size..];
    }
    Some(out)
}

fn be_u32(b: &[u8], at: usize) -> Option<u32> {
    Some(u32::from_be_bytes(b.get(at..at + 4)?.try_into().ok()?))
}

fn be_u64(b: &[u8], at: usize) -> Option<u64> {
    Some(u64::from_be_bytes(b.get(at..at + 8)?.try_into().ok()?))
}

fn probe_mp4(bytes: &[u8]) -> Result<Probe, ProbeError> {
    let bad = |why: &str| undecodable(AssetKind::Video, why);
    if bytes.len() < 12 || &bytes[4..8] != b"ftyp" {
        return Err(bad("missing ftyp box"));
    }
    let top = mp4_boxes(bytes).ok_or_else(|| bad("truncated box structure"))?;
    let moov = top
        .iter()
        .find(|b| &b.kind == b"moov")
        .ok_or_else(|| bad("missing moov box"))?;
    let inner = mp4_boxes(moov.body).ok_or_else(|| bad("truncated moov"))?;
    let mvhd = inner
        .iter()
        .find(|b| &b.kind == b"mvhd")
        .ok_or_else(|| bad("missing mvhd"))?;
    let body = mvhd.body;
    let (timescale, duration) = match body.first() {
        Some(0) => (be_u32(body, 12), be_u32(body, 16).map(u64::from)),
        Some(1) => (be_u32(body, 20), be_u64(body, 24)),
        _ => (None, None),
    };
    let (timescale, duration) = timescale
        .zip(duration)
        .filter(|(ts, _)| *ts > 0)
        .ok_or_else(|| bad("bad mvhd"))?;

    let mut dims = None;
    for trak in inner.iter().filter(|b| &b.kind == b"trak") {
        let Some(parts) = mp4_boxes(trak.body) else { continue };
        if let Some(tkhd) = parts.iter().find(|b| &b.kind == b"tkhd") {
            let n = tkhd.body.len();
            if n >= 8 {
                let w = be_u32(tkhd.body, n - 8).unwrap_or(0) >> 16;
                let h = be_u32(tkhd.body, n - 4).unwrap_or(0) >> 16;
                if w > 0 && h > 0 {
                    dims = Some(Dims::new(w, h));
                    break;
                }
            }
        }
    }
    Ok(Probe {
        dims,
        duration: Some(duration as f64 / timescale as f64),
        mime: "video/mp4",
        text: None,
    })
}

fn probe_audio(bytes: &[u8]) -> Result<Probe, ProbeError> {
    let bad = |why: &str| undecodable(AssetKind::Audio, why);
    if bytes.len() >= 12 && &bytes[0..4] == b"RIFF" && &bytes[8..12] == b"WAVE" {
        let mut at = 12;
        let mut byte_rate = None;
        let mut data_len = None;
        while at + 8 <= bytes.len() {
            let id = &bytes[at..at + 4];
            let len = u32::from_le_bytes(bytes[at + 4..at + 8].try_into().unwrap()) as usize;
            let body = at + 8;
            if id == b"fmt " && body + 12 <= bytes.len() {
                byte_rate = Some(u32::from_le_bytes(
                    bytes[body + 8..body + 12].try_into().unwrap(),
                ));
            } else if id == b"data" {
                data_len = Some(len.min(bytes.len().saturating_sub(body)));
            }
            at = body + len + (len & 1);
        }
        let duration = match (byte_rate, data_len) {
            (Some(r), Some(n)) if r > 0 => Some(n as f64 / r as f64),
            _ => return Err(bad("WAV without fmt/data chunks")),
        };
        return Ok(Probe {
            dims: None,
            duration,
            mime: "audio/wav",
            text: None,
        });
    }
    let mime = if bytes.starts_with(b"ID3") || (bytes.len() > 1 && bytes[0] == 0xFF && bytes[1] & 0xE0 == 0xE0) {
        "audio/mpeg"
    } else if bytes.starts_with(b"fLaC") {
        "audio/flac"
    } else if bytes.starts_with(b"OggS") {
        "audio/ogg"
    } else {
        return Err(bad("unrecognised audio header"));
    };
    Ok(Probe {
        dims: None,
        duration: None,
        mime,
        text: None,
    })
}

fn probe_glb(bytes: &[u8]) -> Result<Probe, ProbeError> {
    let bad = |why: &str| undecodable(AssetKind::Model3d, why);
    if bytes.len() < 20 || &bytes[0..4] != b"glTF" {
        return Err(bad("missing glTF magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let length = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if version != 2 || length != bytes.len() {
        return Err(bad("bad GLB header"));
    }
    Ok(Probe {
        dims: None,
        duration: None,
        mime: "model/gltf-binary",
        text: None,
    })
}

pub fn mime_for(kind: AssetKind, bytes: &[u8]) -> &'static str {
    probe(kind, bytes)
        .map(|p| p.mime)
        .unwrap_or("application/octet-stream")
}

/// Encodes RGBA pixels as PNG with optional `tEXt` chunks.
pub fn encode_png(img: &RgbaImage, text: &[(&str, &str)]) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, img.width(), img.height());
        encoder.set_color(png::ColorType::Rgba);
        encoder.set_depth(png::BitDepth::Eight);
        encoder.set_compression(png::Compression::Fast);
        for (k, v) in text {
            encoder
                .add_text_chunk((*k).to_owned(), (*v).to_owned())
                .expect("latin-1 text chunk");
        }
        let mut writer = encoder.write_header().expect("in-memory png header");
        writer
            .write_image_data(img.as_raw())
            .expect("in-memory png data");
    }
    out
}

/// Encodes a single-channel image as an RGBA PNG (gray replicated, opaque).
pub fn encode_gray_png(width: u32, height: u32, luma: &[u8]) -> Vec<u8> {
    let mut img = RgbaImage::new(width, height);
    for (px, &l) in img.pixels_mut().zip(luma) {
        *px = image::Rgba([l, l, l, 255]);
    }
    encode_png(&img, &[])
}

/// Reads `tEXt` chunks back out of a PNG.
pub fn png_text(bytes: &[u8]) -> Vec<(String, String)> {
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let Ok(reader) = decoder.read_info() else {
        return Vec::new();
    };
    reader
        .info()
        .uncompressed_latin1_text
        .iter()
        .map(|t| (t.keyword.clone(), t.text.clone()))
        .collect()
}

pub fn decode_rgba(bytes: &[u8]) -> Result<RgbaImage, ProbeError> {
    image::load_from_memory(bytes)
        .map(|img| img.to_rgba8())
        .map_err(|e| undecodable(AssetKind::Image, e.to_string()))
}

fn mp4_box(kind: &[u8; 4], body: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(body.len() + 8);
    out.extend_from_slice(&((body.len() + 8) as u32).to_be_bytes());
    out.extend_from_slice(kind);
    out.extend_from_slice(body);
    out
}

/// A header-only MP4 (ftyp + moov with mvhd/tkhd) carrying duration and
/// frame size, plus a `skip` box with free-form metadata.
pub fn write_stub_mp4(dims: Dims, duration_ms: u32, note: &str) -> Vec<u8> {
    let mut ftyp = Vec::new();
    ftyp.extend_from_slice(b"isom");
    ftyp.extend_from_slice(&512u32.to_be_bytes());
    for brand in [b"isom", b"iso2", b"mp41"] {
        ftyp.extend_from_slice(brand);
    }

    let mut mvhd = vec![0u8; 4]; // version 0, flags
    mvhd.extend_from_slice(&0u32.to_be_bytes()); // creation
    mvhd.extend_from_slice(&0u32.to_be_bytes()); // modification
    mvhd.extend_from_slice(&1000u32.to_be_bytes()); // timescale
    mvhd.extend_from_slice(&duration_ms.to_be_bytes());
    mvhd.extend_from_slice(&0x0001_0000u32.to_be_bytes()); // rate 1.0
    mvhd.extend_from_slice(&0x0100u16.to_be_bytes()); // volume 1.0
    mvhd.extend_from_slice(&[0u8; 10]);
    for v in [0x0001_0000u32, 0, 0, 0, 0x0001_0000, 0, 0, 0, 0x4000_0000] {
        mvhd.extend_from_slice(&v.to_be_bytes());
    }
    mvhd.extend_from_slice(&[0u8; 24]);
    mvhd.extend_from_slice(&2u32.to_be_bytes()); // next track id

    let mut tkhd = vec![0, 0, 0, 3]; // enabled | in movie
    tkhd.extend_from_slice(&0u32.to_be_bytes());
    tkhd.extend_from_slice(&0u32.to_be_bytes());
    tkhd.extend_from_slice(&1u32.to_be_bytes()); // track id
    tkhd.extend_from_slice(&0u32.to_be_bytes());
    tkhd.extend_from_slice(&duration_ms.to_be_bytes());
    tkhd.extend_from_slice(&[0u8; 8]);
    tkhd.extend_from_slice(&[0u8; 8]); // layer, alt group, volume, reserved
    for v in [0x0001_0000u32, 0, 0, 0, 0x0001_0000, 0, 0, 0, 0x4000_0000] {
        tkhd.extend_from_slice(&v.to_be_bytes());
    }
    tkhd.extend_from_slice(&(dims.width << 16).to_be_bytes());
    tkhd.extend_from_slice(&(dims.height << 16).to_be_bytes());

    let trak = mp4_box(b"trak", &mp4_box(b"tkhd", &tkhd));
    let mut moov_body = mp4_box(b"mvhd", &mvhd);
    moov_body.extend_from_slice(&trak);

    let mut out = mp4_box(b"ftyp", &ftyp);
    out.extend_from_slice(&mp4_box(b"moov", &moov_body));
    out.extend_from_slice(&mp4_box(b"skip", note.as_bytes()));
    out
}

/// A minimal valid binary glTF with an empty scene and `extras` metadata.
pub fn write_stub_glb(extras: &serde_json::Value) -> Vec<u8> {
    let doc = serde_json::json!({
        "asset": {"version": "2.0", "generator": "easel mock backend", "extras": extras},
        "scene": 0,
        "scenes": [{"nodes": []}],
    });
    let mut json = serde_json::to_vec(&doc).expect("json value serializes");
    while json.len() % 4 != 0 {
        json.push(b' ');
    }
    let total = 12 + 8 + json.len();
    let mut out = Vec::with_capacity(total);
    out.extend_from_slice(b"glTF");
    out.extend_from_slice(&2u32.to_le_bytes());
    out.extend_from_slice(&(total as u32).to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&0x4E4F_534Au32.to_le_bytes()); // "JSON"
    out.extend_from_slice(&json);
    out
}
