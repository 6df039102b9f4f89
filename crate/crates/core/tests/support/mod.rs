//! Brute-force oracles and fixture builders shared by the integration tests.
#![allow(dead_code)]

use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::codecs::jpeg::JpegEncoder;
use image::{Rgb, RgbImage};
use pedkit_core::eval::{Detection, EvalSet, GroundTruth};
use pedkit_core::geometry::BBox;
use pedkit_core::mat::writer::WriteOptions;
use pedkit_core::seq::{write_seq, SeqHeader};
use pedkit_core::vbb::{write_vbb_fixture, VbbFile, VbbObject};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- geometry

/// IoU from corner coordinates, written out independently of the library.
pub fn iou_formula(a: &BBox, b: &BBox) -> f64 {
    let (ax2, ay2) = (a.left + a.width, a.top + a.height);
    let (bx2, by2) = (b.left + b.width, b.top + b.height);
    let iw = (ax2.min(bx2) - a.left.max(b.left)).max(0.0);
    let ih = (ay2.min(by2) - a.top.max(b.top)).max(0.0);
    let inter = iw * ih;
    let union = a.width * a.height + b.width * b.height - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// IoU of integer boxes by counting unit cells.
pub fn iou_grid(a: (i64, i64, i64, i64), b: (i64, i64, i64, i64)) -> f64 {
    let inside = |r: (i64, i64, i64, i64), x: i64, y: i64| x >= r.0 && x < r.0 + r.2 && y >= r.1 && y < r.1 + r.3;
    let x0 = a.0.min(b.0);
    let y0 = a.1.min(b.1);
    let x1 = (a.0 + a.2).max(b.0 + b.2);
    let y1 = (a.1 + a.3).max(b.1 + b.3);
    let (mut inter, mut union) = (0u64, 0u64);
    for y in y0..y1 {
        for x in x0..x1 {
            let (ia, ib) = (inside(a, x, y), inside(b, x, y));
            inter += (ia && ib) as u64;
            union += (ia || ib) as u64;
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

// ---------------------------------------------------------------- matching

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flag {
    Tp(usize),
    Fp,
    Ignored,
}

/// Replays the greedy rule with plain loops: repeatedly take the highest
/// remaining confidence (earliest index on ties), then scan every ground
/// truth for the best unmatched one.
pub fn naive_match(dets: &[(f64, BBox)], gts: &[BBox], ignores: &[BBox], thr: f64) -> (Vec<Flag>, usize) {
    let mut done = vec![false; dets.len()];
    let mut used = vec![false; gts.len()];
    let mut flags = vec![Flag::Fp; dets.len()];
    for _ in 0..dets.len() {
        let mut pick: Option<usize> = None;
        for i in 0..dets.len() {
            if done[i] {
                continue;
            }
            match pick {
                None => pick = Some(i),
                Some(p) if dets[i].0 > dets[p].0 => pick = Some(i),
                _ => {}
            }
        }
        let i = pick.unwrap();
        done[i] = true;
        let mut best: Option<usize> = None;
        let mut best_iou = -1.0;
        for j in 0..gts.len() {
            let v = iou_formula(&dets[i].1, &gts[j]);
            if !used[j] && v >= thr && v > best_iou {
                best = Some(j);
                best_iou = v;
            }
        }
        flags[i] = match best {
            Some(j) => {
                used[j] = true;
                Flag::Tp(j)
            }
            None => {
                let on_ignore = ignores.iter().any(|r| iou_formula(&dets[i].1, r) >= thr);
                if on_ignore {
                    Flag::Ignored
                } else {
                    Flag::Fp
                }
            }
        };
    }
    let fn_ = used.iter().filter(|u| !**u).count();
    (flags, fn_)
}

// ---------------------------------------------------------------- AP

/// `(threshold, precision, recall)` at each distinct confidence, recomputed
/// from scratch by counting every detection at or above the threshold.
pub fn oracle_pr(scored: &[(f64, bool)], n_gt: usize) -> Vec<(f64, f64, f64)> {
    let mut thresholds: Vec<f64> = scored.iter().map(|s| s.0).collect();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    thresholds
        .into_iter()
        .map(|t| {
            let tp = scored.iter().filter(|s| s.0 >= t && s.1).count();
            let fp = scored.iter().filter(|s| s.0 >= t && !s.1).count();
            let p = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
            let r = if n_gt == 0 { 1.0 } else { tp as f64 / n_gt as f64 };
            (t, p, r)
        })
        .collect()
}

/// Envelope precision (max precision at any recall at least as high) summed
/// against recall increments.
pub fn oracle_ap(scored: &[(f64, bool)], n_gt: usize) -> f64 {
    let pts = oracle_pr(scored, n_gt);
    if pts.is_empty() {
        return 0.0;
    }
    let mut ap = 0.0;
    let mut prev_r = 0.0;
    for &(_, _, r) in &pts {
        let env = pts
            .iter()
            .filter(|q| q.2 >= r)
            .map(|q| q.1)
            .fold(0.0, f64::max);
        ap += (r - prev_r) * env;
        prev_r = r;
    }
    ap
}

/// Matches with the naive oracle and drops ignored detections.
pub fn oracle_scored(dets: &[(f64, BBox)], gts: &[BBox], ignores: &[BBox], thr: f64) -> Vec<(f64, bool)> {
    let (flags, _) = naive_match(dets, gts, ignores, thr);
    dets.iter()
        .zip(flags)
        .filter(|(_, f)| *f != Flag::Ignored)
        .map(|(d, f)| (d.0, matches!(f, Flag::Tp(_))))
        .collect()
}

// ---------------------------------------------------------------- instances

#[derive(Debug, Clone)]
pub struct Instance {
    pub dets: Vec<(f64, BBox)>,
    pub gts: Vec<BBox>,
    pub ignores: Vec<BBox>,
}

fn random_box(r: &mut ChaCha8Rng) -> BBox {
    BBox::new(
        r.random_range(0.0..80.0),
        r.random_range(0.0..80.0),
        r.random_range(4.0..30.0),
        r.random_range(4.0..30.0),
    )
}

fn jitter(r: &mut ChaCha8Rng, b: &BBox, amount: f64) -> BBox {
    BBox::new(
        b.left + r.random_range(-amount..=amount),
        b.top + r.random_range(-amount..=amount),
        (b.width + r.random_range(-amount..=amount)).max(1.0),
        (b.height + r.random_range(-amount..=amount)).max(1.0),
    )
}

/// One image, one class: up to 10 ground truths, up to 20 detections (many
/// near a ground truth so IoUs span the whole range), a few ignore regions.
/// `ties` draws confidences from a coarse grid so equal values occur.
pub fn small_instance(r: &mut ChaCha8Rng, ties: bool) -> Instance {
    let n_gt = r.random_range(0..=10);
    let n_det = r.random_range(0..=20);
    let gts: Vec<BBox> = (0..n_gt).map(|_| random_box(r)).collect();
    let ignores: Vec<BBox> = (0..r.random_range(0..=2)).map(|_| random_box(r)).collect();
    let dets = (0..n_det)
        .map(|_| {
            let conf = if ties {
                r.random_range(0..=10) as f64 / 10.0
            } else {
                r.random::<f64>()
            };
            let target = r.random_range(0..3);
            let b = if target == 0 && !gts.is_empty() {
                let g = gts[r.random_range(0..gts.len())];
                let amount = r.random_range(0.0..8.0);
                jitter(r, &g, amount)
            } else if target == 1 && !ignores.is_empty() {
                let g = ignores[r.random_range(0..ignores.len())];
                jitter(r, &g, 3.0)
            } else {
                random_box(r)
            };
            (conf, b)
        })
        .collect();
    Instance { dets, gts, ignores }
}

pub fn to_detections(image: &str, dets: &[(f64, BBox)]) -> Vec<Detection> {
    dets.iter()
        .map(|&(confidence, bbox)| Detection {
            image_id: image.into(),
            class_id: 0,
            confidence,
            bbox,
        })
        .collect()
}

/// Several single-class images combined into one set.
pub fn eval_set(instances: &[Instance]) -> EvalSet {
    let mut set = EvalSet::default();
    for (i, inst) in instances.iter().enumerate() {
        let id = format!("img{i:03}");
        set.images.insert(id.clone());
        set.detections.extend(to_detections(&id, &inst.dets));
        for g in &inst.gts {
            set.ground_truth.push(GroundTruth {
                image_id: id.clone(),
                class_id: 0,
                bbox: *g,
            });
        }
        for g in &inst.ignores {
            set.ignores.push(GroundTruth {
                image_id: id.clone(),
                class_id: 0,
                bbox: *g,
            });
        }
    }
    set
}

/// AP over many images from the oracle: naive match per image, then pool.
pub fn oracle_set_ap(instances: &[Instance], thr: f64) -> f64 {
    let mut scored = Vec::new();
    let mut n_gt = 0;
    for inst in instances {
        scored.extend(oracle_scored(&inst.dets, &inst.gts, &inst.ignores, thr));
        n_gt += inst.gts.len();
    }
    oracle_ap(&scored, n_gt)
}

// ---------------------------------------------------------------- anchors

/// Fraction of boxes with some anchor whose every side ratio is below `t`.
pub fn oracle_bpr(anchors: &[(f64, f64)], boxes: &[(f64, f64)], t: f64) -> f64 {
    let mut covered = 0;
    for b in boxes {
        let mut ok = false;
        for a in anchors {
            let ratios = [b.0 / a.0, a.0 / b.0, b.1 / a.1, a.1 / b.1];
            if ratios.iter().all(|r| *r < t) {
                ok = true;
            }
        }
        covered += ok as usize;
    }
    covered as f64 / boxes.len() as f64
}

/// Total `1 - IoU` distance of co-centered boxes to one centroid.
pub fn oracle_cost(boxes: &[(f64, f64)], c: (f64, f64)) -> f64 {
    boxes
        .iter()
        .map(|b| {
            let inter = b.0.min(c.0) * b.1.min(c.1);
            1.0 - inter / (b.0 * b.1 + c.0 * c.1 - inter)
        })
        .sum()
}

/// Best single centroid on a grid over the bounding range of `boxes`.
pub fn scan_single_centroid(boxes: &[(f64, f64)], steps: usize) -> ((f64, f64), f64) {
    let (wmin, wmax) = boxes.iter().fold((f64::MAX, 0.0f64), |a, b| (a.0.min(b.0), a.1.max(b.0)));
    let (hmin, hmax) = boxes.iter().fold((f64::MAX, 0.0f64), |a, b| (a.0.min(b.1), a.1.max(b.1)));
    let mut best = ((0.0, 0.0), f64::INFINITY);
    for i in 0..=steps {
        for j in 0..=steps {
            let c = (
                wmin + (wmax - wmin) * i as f64 / steps as f64,
                hmin + (hmax - hmin) * j as f64 / steps as f64,
            );
            let cost = oracle_cost(boxes, c);
            if cost < best.1 {
                best = (c, cost);
            }
        }
    }
    best
}

// ---------------------------------------------------------------- fixtures

/// A small JPEG with a deterministic gradient pattern.
pub fn jpeg(w: u32, h: u32, seed: u8) -> Vec<u8> {
    let img = RgbImage::from_fn(w, h, |x, y| {
        Rgb([
            (x * 255 / w.max(1)) as u8,
            (y * 255 / h.max(1)) as u8,
            seed.wrapping_mul(37),
        ])
    });
    let mut out = Cursor::new(Vec::new());
    JpegEncoder::new_with_quality(&mut out, 90)
        .encode_image(&img)
        .unwrap();
    out.into_inner()
}

pub fn seq_bytes(w: u32, h: u32, n: usize) -> Vec<u8> {
    let frames: Vec<Vec<u8>> = (0..n).map(|i| jpeg(w, h, i as u8)).collect();
    write_seq(&SeqHeader::jpeg(w, h, n as u32, 30.0), &frames).unwrap()
}

pub fn object(id: u32, frame: usize, label: &str, pos: BBox) -> VbbObject {
    VbbObject {
        id,
        frame,
        pos,
        posv: BBox::new(0.0, 0.0, 0.0, 0.0),
        occluded: false,
        locked: false,
        label: label.into(),
    }
}

/// Builds a vbb with one label per id taken from the objects themselves.
pub fn vbb_file(n_frame: usize, objects: Vec<VbbObject>) -> VbbFile {
    let max_obj = objects.iter().map(|o| o.id).max().unwrap_or(0);
    let mut labels = vec!["person".to_string(); max_obj as usize];
    let mut obj_lists = vec![Vec::new(); n_frame];
    for o in objects {
        labels[o.id as usize - 1] = o.label.clone();
        obj_lists[o.frame].push(o);
    }
    VbbFile {
        n_frame,
        obj_lists,
        labels,
        max_obj,
        extra: Vec::new(),
    }
}

/// Writes `<root>/<set>/<video>.seq` and `<root>/annotations/<set>/<video>.vbb`.
pub fn write_video(root: &Path, set: &str, video: &str, w: u32, h: u32, vbb: &VbbFile) {
    fs::create_dir_all(root.join(set)).unwrap();
    fs::create_dir_all(root.join("annotations").join(set)).unwrap();
    fs::write(root.join(set).join(format!("{video}.seq")), seq_bytes(w, h, vbb.n_frame)).unwrap();
    fs::write(
        root.join("annotations").join(set).join(format!("{video}.vbb")),
        write_vbb_fixture(vbb, WriteOptions::default()),
    )
    .unwrap();
}
