mod support;

use std::fs;
use std::path::Path;

use pedkit_core::convert::{convert_dataset, extract_frames, ConvertConfig, SplitSpec};
use pedkit_core::geometry::{parse_labels, BBox};
use pedkit_core::seq::open_seq;
use support::*;

fn split(name: &str, sets: &[&str]) -> SplitSpec {
    SplitSpec(vec![(name.to_string(), sets.iter().map(|s| s.to_string()).collect())])
}

fn tree_contents(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn stride_three_of_ten_frames() {
    let dir = tempfile::tempdir().unwrap();
    let seq = open_seq(seq_bytes(32, 24, 10)).unwrap();
    let cfg = ConvertConfig {
        stride: 3,
        target_size: 64,
        ..Default::default()
    };
    let out = extract_frames(&seq, &cfg, dir.path(), ("set00", "V000")).unwrap();
    let frames: Vec<usize> = out.written.iter().map(|w| w.0).collect();
    assert_eq!(frames, vec![0, 3, 6, 9]);
    assert!(out.skipped.is_empty());
    let img = image::open(dir.path().join("set00_V000_00003.png")).unwrap().to_rgb8();
    assert_eq!(img.dimensions(), (64, 64));
    // 32x24 scaled by 2 fills rows 8..56; above is padding.
    assert_eq!(img.get_pixel(10, 2), &image::Rgb([114, 114, 114]));
}

#[test]
fn labels_ignores_and_empty_frames() {
    let root = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let vbb = vbb_file(
        3,
        vec![
            object(1, 0, "person", BBox::new(101.0, 51.0, 20.0, 60.0)),
            object(2, 0, "people", BBox::new(301.0, 101.0, 80.0, 60.0)),
            object(3, 2, "person", BBox::new(1.0, 1.0, 640.0, 480.0)),
        ],
    );
    write_video(root.path(), "set00", "V000", 640, 480, &vbb);
    let m = convert_dataset(root.path(), out.path(), &ConvertConfig::default(), &split("train", &["set00"])).unwrap();
    assert!(m.is_ok(), "{:?}", m.errors);
    assert_eq!(m.splits["train"].images, 3);

    let lbl = out.path().join("labels/train");
    let l0 = fs::read_to_string(lbl.join("set00_V000_00000.txt")).unwrap();
    let i0 = fs::read_to_string(lbl.join("set00_V000_00000.ignore.txt")).unwrap();
    assert_eq!(l0.lines().count(), 1);
    assert_eq!(i0.lines().count(), 1);
    assert_eq!(fs::read(lbl.join("set00_V000_00001.txt")).unwrap().len(), 0);
    assert_eq!(fs::read(lbl.join("set00_V000_00001.ignore.txt")).unwrap().len(), 0);
    assert_eq!(
        fs::read_to_string(lbl.join("set00_V000_00002.txt")).unwrap(),
        "0 0.500000 0.500000 1.000000 0.750000\n"
    );
    let img = image::open(out.path().join("images/train/set00_V000_00002.png")).unwrap();
    assert_eq!((img.width(), img.height()), (640, 640));
}

#[test]
fn two_videos_manifest_and_errors() {
    let root = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    write_video(root.path(), "set00", "V000", 64, 48, &vbb_file(4, vec![object(1, 1, "person", BBox::new(5.0, 5.0, 10.0, 20.0))]));
    write_video(root.path(), "set00", "V001", 64, 48, &vbb_file(2, vec![]));
    write_video(root.path(), "set06", "V000", 64, 48, &vbb_file(3, vec![]));
    // A video without annotation and one whose annotation is too short.
    fs::write(root.path().join("set06/V001.seq"), seq_bytes(64, 48, 2)).unwrap();
    fs::write(root.path().join("set06/V002.seq"), seq_bytes(64, 48, 5)).unwrap();
    fs::write(
        root.path().join("annotations/set06/V002.vbb"),
        pedkit_core::vbb::write_vbb_fixture(&vbb_file(4, vec![]), Default::default()),
    )
    .unwrap();
    let spec = SplitSpec(vec![
        ("train".into(), vec!["set00".into()]),
        ("test".into(), vec!["set06".into(), "set07".into()]),
    ]);
    let cfg = ConvertConfig {
        stride: 2,
        target_size: 64,
        ..Default::default()
    };
    let m = convert_dataset(root.path(), out.path(), &cfg, &spec).unwrap();
    assert_eq!(m.splits["train"].images, 2 + 1);
    assert_eq!(m.splits["train"].videos, 2);
    assert_eq!(m.splits["test"].images, 2);
    assert_eq!(m.errors.len(), 2, "{:?}", m.errors);
    assert!(m.errors.iter().any(|e| e.contains("V001.vbb")));
    assert!(m.errors.iter().any(|e| e.contains("annotation has 4 frames but video has 5")));
    assert!(m.warnings.iter().any(|w| w.contains("set07")));
    assert_eq!(m.images.len(), 5);
    assert_eq!(m.images["set00_V000_00002"].frame, 2);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(json["config"]["stride"], 2);
    assert_eq!(json["splits"]["test"]["images"], 2);
}

#[test]
fn empty_split_spec_writes_empty_manifest() {
    let root = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let m = convert_dataset(root.path(), out.path(), &ConvertConfig::default(), &SplitSpec::empty()).unwrap();
    assert!(m.is_ok());
    assert!(m.images.is_empty() && m.splits.is_empty());
    assert!(out.path().join("manifest.json").is_file());
}

#[test]
fn corrupt_frame_is_skipped_and_recorded() {
    let root = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    write_video(root.path(), "set00", "V000", 32, 24, &vbb_file(3, vec![]));
    // Damage the second frame's payload after its SOI marker.
    let path = root.path().join("set00/V000.seq");
    let mut bytes = fs::read(&path).unwrap();
    let seq = open_seq(bytes.clone()).unwrap();
    let e = seq.index()[1];
    for b in &mut bytes[e.byte_offset + 4 + 2..e.byte_offset + 4 + e.payload_size] {
        *b = 0;
    }
    fs::write(&path, bytes).unwrap();
    let cfg = ConvertConfig {
        target_size: 32,
        ..Default::default()
    };
    let m = convert_dataset(root.path(), out.path(), &cfg, &split("train", &["set00"])).unwrap();
    assert!(m.is_ok());
    assert_eq!(m.skipped.len(), 1);
    assert_eq!(m.skipped[0].frame, 1);
    assert_eq!(m.splits["train"].images, 2);
    assert!(!out.path().join("labels/train/set00_V000_00001.txt").exists());
}

#[test]
fn reruns_are_byte_identical_and_labels_parse() {
    let root = tempfile::tempdir().unwrap();
    let mut r = rng(31);
    use rand::Rng;
    for v in 0..3 {
        let n = r.random_range(3..8);
        let objs = (0..n)
            .map(|f| {
                let x = r.random_range(-20.0..600.0);
                let y = r.random_range(-20.0..450.0);
                object(1 + (f % 2) as u32, f, if f % 3 == 0 { "people" } else { "person" }, BBox::new(x, y, 40.0, 90.0))
            })
            .collect();
        write_video(root.path(), "set01", &format!("V00{v}"), 80, 60, &vbb_file(n, objs));
    }
    let cfg = ConvertConfig {
        stride: 2,
        target_size: 96,
        max_images_per_split: Some(5),
        seed: 4,
        ..Default::default()
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = convert_dataset(root.path(), a.path(), &cfg, &split("train", &["set01"])).unwrap();
    let mb = convert_dataset(root.path(), b.path(), &cfg, &split("train", &["set01"])).unwrap();
    assert_eq!(ma, mb);
    assert_eq!(ma.splits["train"].images, 5);
    let ta = tree_contents(a.path());
    assert_eq!(ta, tree_contents(b.path()));
    for (name, body) in &ta {
        if name.ends_with(".txt") {
            for l in parse_labels(std::str::from_utf8(body).unwrap()).unwrap() {
                assert!(l.is_valid(), "{name}: {l}");
            }
        }
    }
}
