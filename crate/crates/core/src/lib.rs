//! Tools for turning the Caltech pedestrian dataset into YOLO training data
//! and for scoring detectors against it.
//!
//! - [`seq`]: Norpix `.seq` video containers
//! - [`mat`] and [`vbb`]: `.vbb` annotation files (MAT-file Level 5)
//! - [`geometry`]: boxes, IoU, letterbox transform, YOLO label lines
//! - [`convert`]: the dataset conversion pipeline
//! - [`augment`]: mosaic composition
//! - [`anchors`]: k-means anchor boxes and best possible recall
//! - [`eval`]: precision, recall, F1, AP and mAP

pub mod anchors;
pub mod augment;
pub mod convert;
pub mod eval;
pub mod geometry;
pub mod mat;
pub mod seq;
pub mod vbb;

pub use anchors::{best_possible_recall, kmeans_anchors, AnchorSet};
pub use augment::{mosaic, MosaicSpec};
pub use convert::{convert_dataset, ConvertConfig, Manifest, SplitSpec};
pub use eval::{
    average_precision, f1, match_detections, mean_average_precision, precision, recall, Detection,
    EvalReport, PrPoint,
};
pub use geometry::{box_to_yolo, iou, letterbox_for, yolo_to_box, BBox, LetterboxTransform, YoloLabel};
pub use seq::{open_seq, write_seq, FrameRecord, SeqFile, SeqHeader};
pub use vbb::{parse_vbb, vbb_to_json, VbbFile, VbbObject};

/// Version string recorded in conversion manifests.
pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");
