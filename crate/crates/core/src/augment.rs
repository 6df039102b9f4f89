//! Mosaic augmentation: four images tiled around a center point on a
//! `2s x 2s` gray canvas, labels carried along and clipped.

use image::imageops::{self, FilterType};
use image::{GenericImageView, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::geometry::{BBox, YoloLabel};

pub const FILL: Rgb<u8> = Rgb([114, 114, 114]);

#[derive(Debug, Error, PartialEq)]
pub enum MosaicError {
    #[error("mosaic needs exactly 4 inputs, got {0}")]
    WrongArity(usize),
    #[error("center {center:?} outside [{lo}, {hi}]^2")]
    InvalidCenter { center: (u32, u32), lo: u32, hi: u32 },
    #[error("input {0} is an empty image")]
    EmptyImage(usize),
    #[error("tile size must be positive")]
    ZeroSize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MosaicSpec {
    /// Tile size `s`; the canvas is `2s x 2s`.
    pub size: u32,
    /// Meeting point of the four tiles, in canvas pixels.
    pub center: (u32, u32),
    pub seed: u64,
    /// Labels narrower or shorter than this after clipping (pixels) are dropped.
    pub min_side: f64,
}

impl MosaicSpec {
    /// Draws the center uniformly from `[s/2, 3s/2]^2` using `seed`.
    pub fn sample(size: u32, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = (size / 2, size + size / 2);
        let cx = rng.random_range(lo..=hi);
        let cy = rng.random_range(lo..=hi);
        Self {
            size,
            center: (cx, cy),
            seed,
            min_side: 2.0,
        }
    }

    pub fn with_center(size: u32, center: (u32, u32)) -> Self {
        Self {
            size,
            center,
            seed: 0,
            min_side: 2.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MosaicInput {
    pub image: RgbImage,
    /// Normalized to `image`.
    pub labels: Vec<YoloLabel>,
}

/// Canvas rectangle a tile occupies and the matching source rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Placement {
    dst: (i64, i64, i64, i64),
    src: (i64, i64),
}

fn placement(k: usize, xc: i64, yc: i64, w: i64, h: i64, s: i64) -> Placement {
    let s2 = 2 * s;
    let (x1a, y1a, x2a, y2a) = match k {
        0 => ((xc - w).max(0), (yc - h).max(0), xc, yc),
        1 => (xc, (yc - h).max(0), (xc + w).min(s2), yc),
        2 => ((xc - w).max(0), yc, xc, (yc + h).min(s2)),
        _ => (xc, yc, (xc + w).min(s2), (yc + h).min(s2)),
    };
    let (x1b, y1b) = match k {
        0 => (w - (x2a - x1a), h - (y2a - y1a)),
        1 => (0, h - (y2a - y1a)),
        2 => (w - (x2a - x1a), 0),
        _ => (0, 0),
    };
    Placement {
        dst: (x1a, y1a, x2a, y2a),
        src: (x1b, y1b),
    }
}

/// Resizes so the longer side equals `s`.
fn fit(img: &RgbImage, s: u32) -> RgbImage {
    let (w, h) = img.dimensions();
    let longest = w.max(h);
    if longest == s {
        return img.clone();
    }
    let r = s as f64 / longest as f64;
    let nw = ((w as f64 * r).round() as u32).max(1);
    let nh = ((h as f64 * r).round() as u32).max(1);
    imageops::resize(img, nw, nh, FilterType::Triangle)
}

/// Composes four inputs (top-left, top-right, bottom-left, bottom-right).
///
/// Each image is scaled so its longer side is `s` and anchored at the
/// center point; labels are clipped to their tile and renormalized to the
/// `2s` canvas.
pub fn mosaic(
    inputs: &[MosaicInput],
    spec: &MosaicSpec,
) -> Result<(RgbImage, Vec<YoloLabel>), MosaicError> {
    if inputs.len() != 4 {
        return Err(MosaicError::WrongArity(inputs.len()));
    }
    if spec.size == 0 {
        return Err(MosaicError::ZeroSize);
    }
    let s = spec.size;
    let (lo, hi) = (s / 2, s + s / 2);
    let (cx, cy) = spec.center;
    if !(lo..=hi).contains(&cx) || !(lo..=hi).contains(&cy) {
        return Err(MosaicError::InvalidCenter {
            center: spec.center,
            lo,
            hi,
        });
    }
    if let Some(i) = inputs.iter().position(|i| i.image.width() == 0 || i.image.height() == 0) {
        return Err(MosaicError::EmptyImage(i));
    }

    let canvas_side = 2 * s;
    let mut canvas = RgbImage::from_pixel(canvas_side, canvas_side, FILL);
    let mut labels = Vec::new();
    for (k, input) in inputs.iter().enumerate() {
        let img = fit(&input.image, s);
        let (w, h) = (img.width() as i64, img.height() as i64);
        let p = placement(k, cx as i64, cy as i64, w, h, s as i64);
        let (x1a, y1a, x2a, y2a) = p.dst;
        let (tw, th) = (x2a - x1a, y2a - y1a);
        if tw > 0 && th > 0 {
            let view = img.view(p.src.0 as u32, p.src.1 as u32, tw as u32, th as u32);
            imageops::replace(&mut canvas, &*view, x1a, y1a);
        }
        let (pad_x, pad_y) = ((x1a - p.src.0) as f64, (y1a - p.src.1) as f64);
        for l in &input.labels {
            let b = l.to_pixel_box(w as f64, h as f64);
            let moved = BBox::new(b.left + pad_x, b.top + pad_y, b.width, b.height);
            let c = moved.clip(x1a as f64, y1a as f64, x2a as f64, y2a as f64);
            if c.width < spec.min_side || c.height < spec.min_side || c.is_empty() {
                continue;
            }
            if let Ok(out) =
                YoloLabel::from_pixel_box(l.class_id, &c, canvas_side as f64, canvas_side as f64)
            {
                labels.push(out);
            }
        }
    }
    Ok((canvas, labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tile(s: u32, v: u8, labels: Vec<YoloLabel>) -> MosaicInput {
        MosaicInput {
            image: RgbImage::from_pixel(s, s, Rgb([v, v, v])),
            labels,
        }
    }

    fn full() -> YoloLabel {
        YoloLabel {
            class_id: 0,
            cx: 0.5,
            cy: 0.5,
            w: 1.0,
            h: 1.0,
        }
    }

    #[test]
    fn quadrants_at_exact_center() {
        let s = 32;
        let inputs: Vec<_> = (0..4).map(|k| tile(s, 10 * k as u8, vec![full()])).collect();
        let (img, labels) = mosaic(&inputs, &MosaicSpec::with_center(s, (s, s))).unwrap();
        assert_eq!(img.dimensions(), (64, 64));
        assert_eq!(labels.len(), 4);
        let centers = [(0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)];
        for (l, c) in labels.iter().zip(centers) {
            assert_eq!((l.cx, l.cy, l.w, l.h), (c.0, c.1, 0.5, 0.5));
        }
        assert_eq!(img.get_pixel(0, 0), &Rgb([0, 0, 0]));
        assert_eq!(img.get_pixel(63, 0), &Rgb([10, 10, 10]));
        assert_eq!(img.get_pixel(0, 63), &Rgb([20, 20, 20]));
        assert_eq!(img.get_pixel(63, 63), &Rgb([30, 30, 30]));
    }

    #[test]
    fn off_center_fills_gray_and_clips() {
        let s = 32;
        let inputs: Vec<_> = (0..4).map(|_| tile(s, 0, vec![full()])).collect();
        let (img, labels) = mosaic(&inputs, &MosaicSpec::with_center(s, (20, 40))).unwrap();
        // Right of the top-right tile (x >= 52) is padding.
        assert_eq!(img.get_pixel(60, 10), &FILL);
        assert_eq!(labels.len(), 4);
        for l in &labels {
            assert!(l.is_valid());
        }
    }

    #[test]
    fn box_outside_its_tile_is_dropped() {
        let s = 32;
        // Box in the far left strip of the top-left input; with center x = 16
        // only the right half of that image is visible.
        let edge = YoloLabel {
            class_id: 0,
            cx: 0.1,
            cy: 0.5,
            w: 0.1,
            h: 0.5,
        };
        let mut inputs: Vec<_> = (0..4).map(|_| tile(s, 0, vec![])).collect();
        inputs[0].labels.push(edge);
        let (_, labels) = mosaic(&inputs, &MosaicSpec::with_center(s, (16, 32))).unwrap();
        assert!(labels.is_empty());
    }

    #[test]
    fn arity_and_center_checks() {
        let inputs: Vec<_> = (0..3).map(|_| tile(8, 0, vec![])).collect();
        assert_eq!(
            mosaic(&inputs, &MosaicSpec::with_center(8, (8, 8))).unwrap_err(),
            MosaicError::WrongArity(3)
        );
        let inputs: Vec<_> = (0..4).map(|_| tile(8, 0, vec![])).collect();
        assert!(matches!(
            mosaic(&inputs, &MosaicSpec::with_center(8, (0, 8))),
            Err(MosaicError::InvalidCenter { .. })
        ));
    }

    #[test]
    fn sampled_center_in_range_and_seeded() {
        for seed in 0..50 {
            let a = MosaicSpec::sample(640, seed);
            assert!((320..=960).contains(&a.center.0));
            assert!((320..=960).contains(&a.center.1));
            assert_eq!(a, MosaicSpec::sample(640, seed));
        }
    }

    #[test]
    fn non_square_inputs_are_fit_to_tile() {
        let inputs: Vec<_> = (0..4)
            .map(|_| MosaicInput {
                image: RgbImage::from_pixel(64, 48, Rgb([1, 2, 3])),
                labels: vec![full()],
            })
            .collect();
        let (img, labels) = mosaic(&inputs, &MosaicSpec::with_center(32, (32, 32))).unwrap();
        assert_eq!(img.dimensions(), (64, 64));
        // Top-left tile is 32x24 placed at (0, 8)..(32, 32).
        assert_eq!(img.get_pixel(5, 4), &FILL);
        assert_eq!(labels[0].h, 24.0 / 64.0);
    }
}
