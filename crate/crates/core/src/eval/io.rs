use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{Detection, EvalSet, GroundTruth};
use crate::geometry::{parse_labels, YoloLabel};

#[derive(Debug, Error)]
pub enum EvalIoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

const IGNORE_SUFFIX: &str = ".ignore.txt";

/// Parses `class confidence cx cy w h`.
pub fn parse_detection_line(line: &str) -> Result<(f64, YoloLabel), String> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 6 {
        return Err(format!("expected 6 fields, found {}", fields.len()));
    }
    let conf: f64 = fields[1]
        .parse()
        .map_err(|_| format!("bad confidence {:?}", fields[1]))?;
    if !(0.0..=1.0).contains(&conf) {
        return Err(format!("confidence {conf} outside [0, 1]"));
    }
    let rest = [fields[0], fields[2], fields[3], fields[4], fields[5]].join(" ");
    let label: YoloLabel = rest.parse().map_err(|e| format!("{e}"))?;
    Ok((conf, label))
}

fn read(path: &Path) -> Result<String, EvalIoError> {
    fs::read_to_string(path).map_err(|source| EvalIoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Image ids of `*.txt` files (excluding `*.ignore.txt`) in `dir`, sorted.
fn label_ids(dir: &Path) -> Result<Vec<String>, EvalIoError> {
    let io_err = |source| EvalIoError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err)? {
        let entry = entry.map_err(io_err)?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.ends_with(IGNORE_SUFFIX) || !entry.path().is_file() {
            continue;
        }
        if let Some(id) = name.strip_suffix(".txt") {
            ids.push(id.to_string());
        }
    }
    ids.sort();
    Ok(ids)
}

fn load_boxes(path: &Path, image_id: &str, out: &mut Vec<GroundTruth>) -> Result<(), EvalIoError> {
    let labels = parse_labels(&read(path)?).map_err(|e| EvalIoError::Parse {
        path: path.to_path_buf(),
        line: 0,
        reason: e.to_string(),
    })?;
    out.extend(labels.into_iter().map(|l| GroundTruth {
        image_id: image_id.to_string(),
        class_id: l.class_id,
        bbox: l.to_unit_box(),
    }));
    Ok(())
}

/// Loads a label directory, its ignore files and a detection directory.
///
/// Boxes stay in normalized coordinates; IoU is unchanged by per-axis scaling.
/// `ignore_dir` defaults to `gt_dir`.
pub fn load_eval_set(
    gt_dir: &Path,
    det_dir: &Path,
    ignore_dir: Option<&Path>,
) -> Result<EvalSet, EvalIoError> {
    let mut set = EvalSet::default();
    let ignore_dir = ignore_dir.unwrap_or(gt_dir);
    for id in label_ids(gt_dir)? {
        load_boxes(&gt_dir.join(format!("{id}.txt")), &id, &mut set.ground_truth)?;
        let ig = ignore_dir.join(format!("{id}{IGNORE_SUFFIX}"));
        if ig.is_file() {
            load_boxes(&ig, &id, &mut set.ignores)?;
        }
        set.images.insert(id);
    }
    for id in label_ids(det_dir)? {
        let path = det_dir.join(format!("{id}.txt"));
        for (n, line) in read(&path)?.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (confidence, l) = parse_detection_line(line).map_err(|reason| EvalIoError::Parse {
                path: path.clone(),
                line: n + 1,
                reason,
            })?;
            set.detections.push(Detection {
                image_id: id.clone(),
                class_id: l.class_id,
                confidence,
                bbox: l.to_unit_box(),
            });
        }
        set.images.insert(id);
    }
    Ok(set)
}
