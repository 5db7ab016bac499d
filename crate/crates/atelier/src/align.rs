//! Face alignment: margin expansion around detection boxes and fixed-size
//! bilinear crops.
//!
//! Detection is out of scope; boxes arrive in a sidecar file produced by an
//! external detector. This module grows each box by a symmetric margin,
//! clamps it to the image, and resamples the region to a square crop that the
//! embedding stage can consume.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::face_id;

/// Margin in pixels added around a detection box (half per side).
pub const DEFAULT_MARGIN: u32 = 32;
/// Output crop edge length in pixels.
pub const DEFAULT_CROP_SIZE: u32 = 160;

#[derive(Debug, Error)]
pub enum AlignError {
    #[error("degenerate box {0:?} (x1 < x2 and y1 < y2 required)")]
    DegenerateBox(BBox),
    #[error("box {bbox:?} does not intersect a {width}x{height} image")]
    OutsideImage { bbox: BBox, width: u32, height: u32 },
    #[error("box {bbox:?} exceeds the {width}x{height} image bounds")]
    ExceedsImage { bbox: BBox, width: u32, height: u32 },
    #[error("margin {0} must be even (it is split between two sides)")]
    OddMargin(u32),
    #[error("output size must be at least 1")]
    BadOutSize,
    #[error("{0} is not a supported channel count (1 or 3)")]
    BadChannelCount(u32),
    #[error("sample buffer holds {got} bytes, {want} expected")]
    BadBufferLength { got: usize, want: usize },
    #[error("detections line {line}: {message}")]
    MalformedDetection { line: usize, message: String },
}

/// Axis-aligned pixel rectangle, half-open: the box covers columns
/// `x1..x2` and rows `y1..y2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub x1: u32,
    pub y1: u32,
    pub x2: u32,
    pub y2: u32,
}

impl BBox {
    pub fn new(x1: u32, y1: u32, x2: u32, y2: u32) -> Self {
        BBox { x1, y1, x2, y2 }
    }

    pub fn width(&self) -> u32 {
        self.x2.saturating_sub(self.x1)
    }

    pub fn height(&self) -> u32 {
        self.y2.saturating_sub(self.y1)
    }

    fn is_degenerate(&self) -> bool {
        self.x1 >= self.x2 || self.y1 >= self.y2
    }
}

/// Interleaved row-major 8-bit image with 1 (grayscale) or 3 (RGB) channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelGrid {
    width: u32,
    height: u32,
    channels: u32,
    samples: Vec<u8>,
}

impl PixelGrid {
    pub fn new(width: u32, height: u32, channels: u32, samples: Vec<u8>) -> Result<Self, AlignError> {
        if channels != 1 && channels != 3 {
            return Err(AlignError::BadChannelCount(channels));
        }
        let want = width as usize * height as usize * channels as usize;
        if samples.len() != want {
            return Err(AlignError::BadBufferLength {
                got: samples.len(),
                want,
            });
        }
        Ok(PixelGrid {
            width,
            height,
            channels,
            samples,
        })
    }

    /// Grid filled with one value.
    pub fn constant(width: u32, height: u32, channels: u32, value: u8) -> Result<Self, AlignError> {
        let len = width as usize * height as usize * channels as usize;
        PixelGrid::new(width, height, channels, vec![value; len])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u32 {
        self.channels
    }

    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    pub fn get(&self, x: u32, y: u32, channel: u32) -> u8 {
        debug_assert!(x < self.width && y < self.height && channel < self.channels);
        let idx = (y as usize * self.width as usize + x as usize) * self.channels as usize
            + channel as usize;
        self.samples[idx]
    }
}

/// One aligned face: where it came from and its fixed-size crop.
#[derive(Debug, Clone)]
pub struct FaceInstance {
    pub face_id: String,
    pub painting_id: String,
    /// Expanded, clamped source region in painting coordinates.
    pub bbox: BBox,
    pub crop: PixelGrid,
}

/// Detection sidecar line: one face box inside one painting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Detection {
    pub painting_id: String,
    pub face_index: u32,
    pub x1: u32,
    pub y1: u32,
    pub x2: u32,
    pub y2: u32,
}

impl Detection {
    pub fn bbox(&self) -> BBox {
        BBox::new(self.x1, self.y1, self.x2, self.y2)
    }
}

/// Parses a line-delimited JSON detection sidecar. Blank lines are skipped;
/// errors carry the 1-based line number.
pub fn parse_detections(text: &str) -> Result<Vec<Detection>, AlignError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let det: Detection =
            serde_json::from_str(raw).map_err(|e| AlignError::MalformedDetection {
                line: idx + 1,
                message: e.to_string(),
            })?;
        out.push(det);
    }
    Ok(out)
}

/// Renders detections back into sidecar lines.
pub fn render_detections(detections: &[Detection]) -> String {
    let mut out = String::new();
    for d in detections {
        out.push_str(&serde_json::to_string(d).expect("detection serializes"));
        out.push('\n');
    }
    out
}

/// Grows a box outward by `margin / 2` per side, then clamps it to a
/// `width x height` image.
///
/// ```
/// use atelier::align::{expand_and_clamp, BBox};
///
/// let b = expand_and_clamp(BBox::new(100, 100, 200, 200), 32, 1000, 800).unwrap();
/// assert_eq!(b, BBox::new(84, 84, 216, 216));
/// ```
pub fn expand_and_clamp(
    bbox: BBox,
    margin: u32,
    width: u32,
    height: u32,
) -> Result<BBox, AlignError> {
    if margin % 2 != 0 {
        return Err(AlignError::OddMargin(margin));
    }
    if bbox.is_degenerate() {
        return Err(AlignError::DegenerateBox(bbox));
    }
    let half = (margin / 2) as i64;
    let x1 = (bbox.x1 as i64 - half).clamp(0, width as i64);
    let y1 = (bbox.y1 as i64 - half).clamp(0, height as i64);
    let x2 = (bbox.x2 as i64 + half).clamp(0, width as i64);
    let y2 = (bbox.y2 as i64 + half).clamp(0, height as i64);
    if x1 >= x2 || y1 >= y2 {
        return Err(AlignError::OutsideImage {
            bbox,
            width,
            height,
        });
    }
    Ok(BBox::new(x1 as u32, y1 as u32, x2 as u32, y2 as u32))
}

/// Source coordinate for output sample `i` of `out` when resampling an axis
/// of `len` input samples, with the first and last samples pinned to the
/// region corners.
fn sample_coord(i: u32, out: u32, len: u32) -> f64 {
    if out == 1 {
        (len - 1) as f64 / 2.0
    } else {
        i as f64 * (len - 1) as f64 / (out - 1) as f64
    }
}

/// Cuts `bbox` out of `image` and resamples it to `out_size x out_size` with
/// bilinear interpolation. Corner samples map exactly onto the region
/// corners, so a box whose size already equals `out_size` is copied verbatim.
pub fn crop_resize(image: &PixelGrid, bbox: BBox, out_size: u32) -> Result<PixelGrid, AlignError> {
    if out_size == 0 {
        return Err(AlignError::BadOutSize);
    }
    if bbox.is_degenerate() {
        return Err(AlignError::DegenerateBox(bbox));
    }
    if bbox.x2 > image.width || bbox.y2 > image.height {
        return Err(AlignError::ExceedsImage {
            bbox,
            width: image.width,
            height: image.height,
        });
    }
    let channels = image.channels;
    let mut samples = Vec::with_capacity(out_size as usize * out_size as usize * channels as usize);
    for oy in 0..out_size {
        let sy = bbox.y1 as f64 + sample_coord(oy, out_size, bbox.height());
        let y0 = sy.floor() as u32;
        let y1 = (y0 + 1).min(bbox.y2 - 1);
        let fy = sy - y0 as f64;
        for ox in 0..out_size {
            let sx = bbox.x1 as f64 + sample_coord(ox, out_size, bbox.width());
            let x0 = sx.floor() as u32;
            let x1 = (x0 + 1).min(bbox.x2 - 1);
            let fx = sx - x0 as f64;
            for c in 0..channels {
                let v00 = image.get(x0, y0, c) as f64;
                let v10 = image.get(x1, y0, c) as f64;
                let v01 = image.get(x0, y1, c) as f64;
                let v11 = image.get(x1, y1, c) as f64;
                let top = v00 + (v10 - v00) * fx;
                let bottom = v01 + (v11 - v01) * fx;
                let value = top + (bottom - top) * fy;
                samples.push((value + 0.5).floor().clamp(0.0, 255.0) as u8);
            }
        }
    }
    PixelGrid::new(out_size, out_size, channels, samples)
}

/// Expands, clamps, and crops one detection box into a ready face instance.
pub fn align_face(
    image: &PixelGrid,
    painting_id: &str,
    face_index: u32,
    raw_box: BBox,
    margin: u32,
    out_size: u32,
) -> Result<FaceInstance, AlignError> {
    let bbox = expand_and_clamp(raw_box, margin, image.width, image.height)?;
    let crop = crop_resize(image, bbox, out_size)?;
    Ok(FaceInstance {
        face_id: face_id(painting_id, face_index),
        painting_id: painting_id.to_string(),
        bbox,
        crop,
    })
}
