//! Seeded synthetic workloads shared by the benchmarks.

use std::collections::BTreeSet;

use pedkit_core::anchors::Dims;
use pedkit_core::eval::{Detection, EvalSet, GroundTruth};
use pedkit_core::mat::writer::WriteOptions;
use pedkit_core::seq::{write_seq, SeqHeader};
use pedkit_core::vbb::{write_vbb_fixture, VbbFile, VbbObject};
use pedkit_core::BBox;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A pedestrian-shaped box inside the unit square.
pub fn random_box(r: &mut impl Rng) -> BBox {
    let h = r.random_range(0.03..0.4);
    let w = h * r.random_range(0.3..0.5);
    BBox::new(r.random_range(0.0..1.0 - w), r.random_range(0.0..1.0 - h), w, h)
}

fn jitter(r: &mut impl Rng, b: &BBox, amount: f64) -> BBox {
    let dx = r.random_range(-amount..amount) * b.width;
    let dy = r.random_range(-amount..amount) * b.height;
    BBox::new(b.left + dx, b.top + dy, b.width, b.height)
}

/// `images` images with about `gts_per_image` boxes each; 80% of boxes get a
/// jittered detection and there is one false positive per image.
pub fn eval_set(images: usize, gts_per_image: usize, seed: u64) -> EvalSet {
    let mut r = rng(seed);
    let mut set = EvalSet {
        images: BTreeSet::new(),
        ..Default::default()
    };
    for i in 0..images {
        let id = format!("img{i:06}");
        set.images.insert(id.clone());
        for _ in 0..gts_per_image {
            let g = random_box(&mut r);
            if r.random_bool(0.8) {
                let amount = r.random_range(0.0..0.3);
                set.detections.push(Detection {
                    image_id: id.clone(),
                    class_id: 0,
                    confidence: r.random_range(0.0..1.0),
                    bbox: jitter(&mut r, &g, amount),
                });
            }
            set.ground_truth.push(GroundTruth {
                image_id: id.clone(),
                class_id: 0,
                bbox: g,
            });
        }
        set.detections.push(Detection {
            image_id: id.clone(),
            class_id: 0,
            confidence: r.random_range(0.0..1.0),
            bbox: random_box(&mut r),
        });
        if i % 4 == 0 {
            set.ignores.push(GroundTruth {
                image_id: id,
                class_id: 0,
                bbox: random_box(&mut r),
            });
        }
    }
    set
}

pub fn box_pairs(n: usize, seed: u64) -> Vec<(BBox, BBox)> {
    let mut r = rng(seed);
    (0..n).map(|_| (random_box(&mut r), random_box(&mut r))).collect()
}

/// Pixel box sizes at 640 for anchor clustering.
pub fn box_dims(n: usize, seed: u64) -> Vec<Dims> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let b = random_box(&mut r);
            (b.width * 640.0, b.height * 640.0)
        })
        .collect()
}

/// A seq file of `n` frames with opaque payloads of `payload_len` bytes
/// starting with a JPEG SOI marker.
pub fn seq_bytes(n: usize, payload_len: usize, seed: u64) -> Vec<u8> {
    let mut r = rng(seed);
    let frames: Vec<Vec<u8>> = (0..n)
        .map(|_| {
            let mut p = vec![0u8; payload_len.max(4)];
            r.fill(&mut p[..]);
            p[..2].copy_from_slice(&[0xFF, 0xD8]);
            p
        })
        .collect();
    write_seq(&SeqHeader::jpeg(640, 480, n as u32, 30.0), &frames).expect("valid header")
}

/// A vbb annotation with `n_frame` frames and `tracks` objects visible in every frame.
pub fn vbb_file(n_frame: usize, tracks: u32, seed: u64) -> VbbFile {
    let mut r = rng(seed);
    let obj_lists = (0..n_frame)
        .map(|f| {
            (1..=tracks)
                .map(|id| VbbObject {
                    id,
                    frame: f,
                    pos: BBox::new(r.random_range(1.0..600.0), r.random_range(1.0..400.0), 20.0, 50.0),
                    posv: BBox::new(0.0, 0.0, 0.0, 0.0),
                    occluded: false,
                    locked: r.random_bool(0.5),
                    label: "person".into(),
                })
                .collect()
        })
        .collect();
    VbbFile {
        n_frame,
        obj_lists,
        labels: vec!["person".into(); tracks as usize],
        max_obj: tracks,
        extra: vec![],
    }
}

pub fn vbb_bytes(n_frame: usize, tracks: u32, compress: bool, seed: u64) -> Vec<u8> {
    let opts = WriteOptions {
        compress,
        ..Default::default()
    };
    write_vbb_fixture(&vbb_file(n_frame, tracks, seed), opts)
}
