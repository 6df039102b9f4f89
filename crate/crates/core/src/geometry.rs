//! Axis-aligned boxes, IoU, and the letterbox transform between native
//! frames and square training canvases.
//!
//! All coordinates are continuous pixels with the origin at the top-left
//! corner of the top-left pixel. [`BBox::from_one_based`] is the single
//! place where the annotation tool's 1-based convention is converted.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("box has zero area after clipping to the image region")]
    DegenerateBox,
    #[error("invalid dimensions {0}x{1}")]
    InvalidDimensions(f64, f64),
    #[error("malformed label line {line:?}: {reason}")]
    MalformedLabel { line: String, reason: String },
}

/// Box in `left, top, width, height` form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
}

impl BBox {
    pub const fn new(left: f64, top: f64, width: f64, height: f64) -> Self {
        Self {
            left,
            top,
            width,
            height,
        }
    }

    /// Converts a box whose left/top are 1-based pixel indices.
    pub fn from_one_based(left: f64, top: f64, width: f64, height: f64) -> Self {
        Self::new(left - 1.0, top - 1.0, width, height)
    }

    pub fn from_corners(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self::new(x1, y1, (x2 - x1).max(0.0), (y2 - y1).max(0.0))
    }

    pub fn right(&self) -> f64 {
        self.left + self.width
    }

    pub fn bottom(&self) -> f64 {
        self.top + self.height
    }

    pub fn area(&self) -> f64 {
        self.width.max(0.0) * self.height.max(0.0)
    }

    pub fn is_empty(&self) -> bool {
        self.width <= 0.0 || self.height <= 0.0
    }

    pub fn center(&self) -> (f64, f64) {
        (
            self.left + self.width / 2.0,
            self.top + self.height / 2.0,
        )
    }

    pub fn intersection(&self, other: &BBox) -> f64 {
        let w = self.right().min(other.right()) - self.left.max(other.left);
        let h = self.bottom().min(other.bottom()) - self.top.max(other.top);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// Clips to the rectangle `[x0, x1] x [y0, y1]`.
    pub fn clip(&self, x0: f64, y0: f64, x1: f64, y1: f64) -> BBox {
        BBox::from_corners(
            self.left.clamp(x0, x1),
            self.top.clamp(y0, y1),
            self.right().clamp(x0, x1),
            self.bottom().clamp(y0, y1),
        )
    }

    /// True when `other` lies inside `self` (with `tol` pixels of slack).
    pub fn contains(&self, other: &BBox, tol: f64) -> bool {
        other.left >= self.left - tol
            && other.top >= self.top - tol
            && other.right() <= self.right() + tol
            && other.bottom() <= self.bottom() + tol
    }
}

/// Intersection over union with continuous coordinates; 0 when the union is empty.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Aspect-preserving resize into a `dst_w x dst_h` canvas with centered padding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LetterboxTransform {
    pub scale: f64,
    pub pad_x: f64,
    pub pad_y: f64,
    pub src_w: f64,
    pub src_h: f64,
    pub dst_w: f64,
    pub dst_h: f64,
}

/// Letterbox from `src_w x src_h` into a square canvas of side `dst`.
pub fn letterbox_for(src_w: u32, src_h: u32, dst: u32) -> LetterboxTransform {
    LetterboxTransform::new(src_w as f64, src_h as f64, dst as f64, dst as f64)
        .expect("letterbox dimensions must be positive")
}

impl LetterboxTransform {
    pub fn new(src_w: f64, src_h: f64, dst_w: f64, dst_h: f64) -> Result<Self, GeometryError> {
        if !(src_w > 0.0 && src_h > 0.0) {
            return Err(GeometryError::InvalidDimensions(src_w, src_h));
        }
        if !(dst_w > 0.0 && dst_h > 0.0) {
            return Err(GeometryError::InvalidDimensions(dst_w, dst_h));
        }
        let scale = (dst_w / src_w).min(dst_h / src_h);
        Ok(Self {
            scale,
            pad_x: ((dst_w - scale * src_w) / 2.0).max(0.0),
            pad_y: ((dst_h - scale * src_h) / 2.0).max(0.0),
            src_w,
            src_h,
            dst_w,
            dst_h,
        })
    }

    /// Size of the resized image content inside the canvas, rounded to pixels.
    pub fn content_size(&self) -> (u32, u32) {
        (
            (self.src_w * self.scale).round().max(1.0) as u32,
            (self.src_h * self.scale).round().max(1.0) as u32,
        )
    }

    /// Integer placement offset of the resized content.
    pub fn content_offset(&self) -> (u32, u32) {
        let (cw, ch) = self.content_size();
        (
            ((self.dst_w as u32).saturating_sub(cw)) / 2,
            ((self.dst_h as u32).saturating_sub(ch)) / 2,
        )
    }

    /// Maps a source-frame box to canvas pixels (no clipping).
    pub fn forward(&self, b: &BBox) -> BBox {
        BBox::new(
            b.left * self.scale + self.pad_x,
            b.top * self.scale + self.pad_y,
            b.width * self.scale,
            b.height * self.scale,
        )
    }

    /// Maps a canvas-pixel box back to the source frame.
    pub fn inverse(&self, b: &BBox) -> BBox {
        BBox::new(
            (b.left - self.pad_x) / self.scale,
            (b.top - self.pad_y) / self.scale,
            b.width / self.scale,
            b.height / self.scale,
        )
    }
}

/// One line of a YOLO label file: class plus normalized center/size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YoloLabel {
    pub class_id: u32,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl YoloLabel {
    /// Builds a label from a box in pixels of a `img_w x img_h` image,
    /// clipping to the image first.
    pub fn from_pixel_box(
        class_id: u32,
        b: &BBox,
        img_w: f64,
        img_h: f64,
    ) -> Result<YoloLabel, GeometryError> {
        let c = b.clip(0.0, 0.0, img_w, img_h);
        if c.is_empty() {
            return Err(GeometryError::DegenerateBox);
        }
        let (cx, cy) = c.center();
        Ok(YoloLabel {
            class_id,
            cx: (cx / img_w).clamp(0.0, 1.0),
            cy: (cy / img_h).clamp(0.0, 1.0),
            w: (c.width / img_w).clamp(0.0, 1.0),
            h: (c.height / img_h).clamp(0.0, 1.0),
        })
    }

    /// Box in pixels of an `img_w x img_h` image.
    pub fn to_pixel_box(&self, img_w: f64, img_h: f64) -> BBox {
        BBox::new(
            (self.cx - self.w / 2.0) * img_w,
            (self.cy - self.h / 2.0) * img_h,
            self.w * img_w,
            self.h * img_h,
        )
    }

    /// Box in normalized `[0, 1]` coordinates.
    pub fn to_unit_box(&self) -> BBox {
        self.to_pixel_box(1.0, 1.0)
    }

    /// Checks coordinate ranges and that the box's extent stays on the canvas.
    pub fn is_valid(&self) -> bool {
        const EPS: f64 = 1e-6;
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        in_unit(self.cx)
            && in_unit(self.cy)
            && in_unit(self.w)
            && in_unit(self.h)
            && self.cx - self.w / 2.0 >= -EPS
            && self.cx + self.w / 2.0 <= 1.0 + EPS
            && self.cy - self.h / 2.0 >= -EPS
            && self.cy + self.h / 2.0 <= 1.0 + EPS
    }
}

impl fmt::Display for YoloLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:.6} {:.6} {:.6} {:.6}",
            self.class_id, self.cx, self.cy, self.w, self.h
        )
    }
}

impl FromStr for YoloLabel {
    type Err = GeometryError;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let bad = |reason: &str| GeometryError::MalformedLabel {
            line: line.to_string(),
            reason: reason.to_string(),
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(bad("expected 5 fields"));
        }
        let class_id = fields[0].parse().map_err(|_| bad("class id"))?;
        let mut vals = [0.0f64; 4];
        for (v, s) in vals.iter_mut().zip(&fields[1..]) {
            *v = s.parse().map_err(|_| bad("coordinate"))?;
            if !v.is_finite() {
                return Err(bad("non-finite coordinate"));
            }
        }
        Ok(YoloLabel {
            class_id,
            cx: vals[0],
            cy: vals[1],
            w: vals[2],
            h: vals[3],
        })
    }
}

/// Source-frame box to a label on the letterboxed canvas.
///
/// The box is clipped to the image content region first, so boxes that
/// land entirely in padding or off-canvas are rejected.
pub fn box_to_yolo(
    b: &BBox,
    t: &LetterboxTransform,
    class_id: u32,
) -> Result<YoloLabel, GeometryError> {
    let clipped = b.clip(0.0, 0.0, t.src_w, t.src_h);
    if clipped.is_empty() {
        return Err(GeometryError::DegenerateBox);
    }
    YoloLabel::from_pixel_box(class_id, &t.forward(&clipped), t.dst_w, t.dst_h)
}

/// Inverse of [`box_to_yolo`] for boxes that did not need clipping.
pub fn yolo_to_box(l: &YoloLabel, t: &LetterboxTransform) -> BBox {
    t.inverse(&l.to_pixel_box(t.dst_w, t.dst_h))
}

/// Serializes labels one per line with `\n` endings; empty input gives an empty string.
pub fn format_labels(labels: &[YoloLabel]) -> String {
    let mut out = String::new();
    for l in labels {
        out.push_str(&l.to_string());
        out.push('\n');
    }
    out
}

/// Parses a label file body, skipping blank lines.
pub fn parse_labels(text: &str) -> Result<Vec<YoloLabel>, GeometryError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(str::parse)
        .collect()
}
