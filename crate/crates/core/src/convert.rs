//! Caltech directory tree to YOLO training data.
//!
//! Input layout: `<root>/setXX/VYYY.seq` with annotations at
//! `<root>/annotations/setXX/VYYY.vbb`. Output layout:
//!
//! ```text
//! <out>/images/<split>/<set>_<video>_<frame:05>.png
//! <out>/labels/<split>/<set>_<video>_<frame:05>.txt
//! <out>/labels/<split>/<set>_<video>_<frame:05>.ignore.txt
//! <out>/manifest.json
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{Cursor, Read};
use std::path::{Path, PathBuf};

use image::codecs::png::{CompressionType, FilterType as PngFilter, PngEncoder};
use image::imageops::{self, FilterType};
use image::{ImageEncoder, ImageFormat, RgbImage};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::augment::FILL;
use crate::geometry::{box_to_yolo, format_labels, LetterboxTransform, YoloLabel};
use crate::seq::{open_seq, parse_header, SeqError, SeqFile, HEADER_SIZE};
use crate::vbb::{parse_vbb, OcclusionPolicy, VbbError, VbbFile};

#[derive(Debug, Error)]
pub enum ConvertError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Seq { path: PathBuf, source: SeqError },
    #[error("{path}: {source}")]
    Vbb { path: PathBuf, source: VbbError },
    #[error("no annotation file {0}")]
    MissingAnnotation(PathBuf),
    #[error("annotation has {vbb_frames} frames but video has {seq_frames}")]
    FrameMismatch { seq_frames: usize, vbb_frames: usize },
    #[error("frame {frame}: cannot decode payload: {reason}")]
    DecodeFailure { frame: usize, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ConvertError + '_ {
    move |source| ConvertError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvertConfig {
    /// Every `stride`-th frame is kept, starting at frame 0.
    pub stride: usize,
    pub target_size: u32,
    /// Labels kept as classes; class id is the position in this list.
    pub classes: Vec<String>,
    /// Labels written to `.ignore.txt` as ignore regions (class id 0).
    pub ignore_labels: Vec<String>,
    pub occlusion: OcclusionPolicy,
    /// Boxes shorter than this on the output canvas (pixels) are dropped.
    pub min_box_height: f64,
    /// Cap on images per split, sampled with `seed`; `None` keeps all.
    pub max_images_per_split: Option<usize>,
    pub seed: u64,
}

impl Default for ConvertConfig {
    fn default() -> Self {
        Self {
            stride: 1,
            target_size: 640,
            classes: vec!["person".into()],
            ignore_labels: vec!["people".into(), "person?".into(), "person-fa".into()],
            occlusion: OcclusionPolicy::FullBox,
            min_box_height: 0.0,
            max_images_per_split: None,
            seed: 0,
        }
    }
}

impl ConvertConfig {
    pub fn validate(&self) -> Result<(), ConvertError> {
        if self.stride == 0 {
            return Err(ConvertError::InvalidConfig("stride must be at least 1".into()));
        }
        if self.target_size == 0 {
            return Err(ConvertError::InvalidConfig("target size must be positive".into()));
        }
        if self.classes.is_empty() {
            return Err(ConvertError::InvalidConfig("class list is empty".into()));
        }
        Ok(())
    }
}

/// Split name to the set directories it covers, in output order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitSpec(pub Vec<(String, Vec<String>)>);

impl SplitSpec {
    /// set00-set05 train, set06-set10 test.
    pub fn caltech() -> Self {
        let sets = |r: std::ops::RangeInclusive<u32>| r.map(|i| format!("set{i:02}")).collect();
        SplitSpec(vec![
            ("train".into(), sets(0..=5)),
            ("test".into(), sets(6..=10)),
        ])
    }

    pub fn empty() -> Self {
        SplitSpec(Vec::new())
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self::caltech()
    }
}

pub fn frame_indices(frame_count: usize, stride: usize) -> Vec<usize> {
    (0..frame_count).step_by(stride.max(1)).collect()
}

pub fn image_name(set: &str, video: &str, frame: usize) -> String {
    format!("{set}_{video}_{frame:05}")
}

/// Letterboxes `img` onto a gray `dst x dst` canvas.
pub fn letterbox_image(img: &RgbImage, t: &LetterboxTransform) -> RgbImage {
    let mut canvas = RgbImage::from_pixel(t.dst_w as u32, t.dst_h as u32, FILL);
    let (cw, ch) = t.content_size();
    let (ox, oy) = t.content_offset();
    if (cw, ch) == img.dimensions() {
        imageops::replace(&mut canvas, img, ox as i64, oy as i64);
    } else {
        let resized = imageops::resize(img, cw, ch, FilterType::Triangle);
        imageops::replace(&mut canvas, &resized, ox as i64, oy as i64);
    }
    canvas
}

/// PNG bytes with a pinned encoder configuration.
pub fn encode_png(img: &RgbImage) -> Vec<u8> {
    let mut out = Vec::new();
    PngEncoder::new_with_quality(&mut out, CompressionType::Default, PngFilter::Adaptive)
        .write_image(img.as_raw(), img.width(), img.height(), image::ExtendedColorType::Rgb8)
        .expect("encoding into memory");
    out
}

/// Decodes a JPEG payload and letterboxes it to `target`.
pub fn decode_frame(
    frame: usize,
    payload: &[u8],
    target: u32,
) -> Result<(RgbImage, LetterboxTransform), ConvertError> {
    if !payload.starts_with(&[0xFF, 0xD8]) {
        return Err(ConvertError::DecodeFailure {
            frame,
            reason: "missing JPEG start-of-image marker".into(),
        });
    }
    let img = image::load_from_memory_with_format(payload, ImageFormat::Jpeg)
        .map_err(|e| ConvertError::DecodeFailure {
            frame,
            reason: e.to_string(),
        })?
        .to_rgb8();
    let t = LetterboxTransform::new(
        img.width() as f64,
        img.height() as f64,
        target as f64,
        target as f64,
    )
    .map_err(|e| ConvertError::DecodeFailure {
        frame,
        reason: e.to_string(),
    })?;
    Ok((letterbox_image(&img, &t), t))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameLabels {
    pub frame: usize,
    pub labels: Vec<YoloLabel>,
    pub ignores: Vec<YoloLabel>,
}

/// Labels and ignore regions for one frame's objects.
pub fn frame_labels(vbb: &VbbFile, frame: usize, t: &LetterboxTransform, cfg: &ConvertConfig) -> FrameLabels {
    let mut labels = Vec::new();
    let mut ignores = Vec::new();
    for o in vbb.obj_lists.get(frame).into_iter().flatten() {
        let class = cfg.classes.iter().position(|c| *c == o.label);
        let ignore = cfg.ignore_labels.contains(&o.label);
        if class.is_none() && !ignore {
            continue;
        }
        let Ok(l) = box_to_yolo(&o.pixel_box(cfg.occlusion), t, class.unwrap_or(0) as u32) else {
            continue;
        };
        match class {
            Some(_) => {
                if l.h * t.dst_h >= cfg.min_box_height {
                    labels.push(l);
                }
            }
            None => ignores.push(l),
        }
    }
    FrameLabels {
        frame,
        labels,
        ignores,
    }
}

/// Labels for each of `frames`, after checking the annotation covers the video.
pub fn convert_annotations(
    vbb: &VbbFile,
    seq_frames: usize,
    t: &LetterboxTransform,
    cfg: &ConvertConfig,
    frames: &[usize],
) -> Result<Vec<FrameLabels>, ConvertError> {
    if vbb.n_frame != seq_frames {
        return Err(ConvertError::FrameMismatch {
            seq_frames,
            vbb_frames: vbb.n_frame,
        });
    }
    Ok(frames.iter().map(|&f| frame_labels(vbb, f, t, cfg)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedFrame {
    pub image: String,
    pub frame: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExtractOutcome {
    pub written: Vec<(usize, PathBuf)>,
    pub skipped: Vec<SkippedFrame>,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ConvertError> {
    fs::write(path, bytes).map_err(io_err(path))
}

/// Writes the selected frames of `seq` as letterboxed PNGs into `out_dir`.
/// Undecodable frames are skipped and reported.
pub fn extract_selected(
    seq: &SeqFile,
    frames: &[usize],
    target: u32,
    out_dir: &Path,
    name_prefix: (&str, &str),
) -> Result<ExtractOutcome, ConvertError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut outcome = ExtractOutcome::default();
    for &f in frames {
        let name = image_name(name_prefix.0, name_prefix.1, f);
        let rec = seq.read_frame(f).map_err(|source| ConvertError::Seq {
            path: out_dir.to_path_buf(),
            source,
        })?;
        match decode_frame(f, rec.payload, target) {
            Ok((img, _)) => {
                let path = out_dir.join(format!("{name}.png"));
                write_file(&path, &encode_png(&img))?;
                outcome.written.push((f, path));
            }
            Err(e) => {
                log::warn!("{name}: {e}");
                outcome.skipped.push(SkippedFrame {
                    image: name,
                    frame: f,
                    reason: e.to_string(),
                });
            }
        }
    }
    Ok(outcome)
}

/// Every `cfg.stride`-th frame of `seq` as a PNG.
pub fn extract_frames(
    seq: &SeqFile,
    cfg: &ConvertConfig,
    out_dir: &Path,
    name_prefix: (&str, &str),
) -> Result<ExtractOutcome, ConvertError> {
    cfg.validate()?;
    extract_selected(seq, &frame_indices(seq.len(), cfg.stride), cfg.target_size, out_dir, name_prefix)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SplitSummary {
    pub videos: usize,
    pub images: usize,
    pub labels: usize,
    pub objects: usize,
    pub ignore_regions: usize,
    pub skipped_frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageEntry {
    pub split: String,
    pub set: String,
    pub video: String,
    pub frame: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub toolkit_version: String,
    pub config: ConvertConfig,
    pub split_spec: SplitSpec,
    pub splits: BTreeMap<String, SplitSummary>,
    pub images: BTreeMap<String, ImageEntry>,
    pub skipped: Vec<SkippedFrame>,
    pub warnings: Vec<String>,
    pub errors: Vec<String>,
}

impl Manifest {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializing plain data");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone)]
struct VideoJob {
    split: String,
    set: String,
    video: String,
    seq_path: PathBuf,
    vbb_path: PathBuf,
    frames: Vec<usize>,
}

#[derive(Debug, Default)]
struct VideoResult {
    images: Vec<(String, usize)>,
    objects: usize,
    ignore_regions: usize,
    skipped: Vec<SkippedFrame>,
    warnings: Vec<String>,
}

fn read_header_frames(path: &Path) -> Result<usize, ConvertError> {
    let mut buf = vec![0u8; HEADER_SIZE];
    let mut f = fs::File::open(path).map_err(io_err(path))?;
    let mut filled = 0;
    while filled < HEADER_SIZE {
        let n = f.read(&mut buf[filled..]).map_err(io_err(path))?;
        if n == 0 {
            break;
        }
        filled += n;
    }
    buf.truncate(filled);
    let h = parse_header(&buf).map_err(|source| ConvertError::Seq {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(h.frame_count as usize)
}

fn run_video(job: &VideoJob, cfg: &ConvertConfig, out: &Path) -> Result<VideoResult, ConvertError> {
    let bytes = fs::read(&job.seq_path).map_err(io_err(&job.seq_path))?;
    let seq = open_seq(bytes).map_err(|source| ConvertError::Seq {
        path: job.seq_path.clone(),
        source,
    })?;
    let vbb_bytes = fs::read(&job.vbb_path).map_err(io_err(&job.vbb_path))?;
    let vbb = parse_vbb(&vbb_bytes).map_err(|source| ConvertError::Vbb {
        path: job.vbb_path.clone(),
        source,
    })?;
    if vbb.n_frame != seq.len() {
        return Err(ConvertError::FrameMismatch {
            seq_frames: seq.len(),
            vbb_frames: vbb.n_frame,
        });
    }
    let mut result = VideoResult::default();
    let lint = vbb.lint();
    if !lint.is_empty() {
        result.warnings.push(format!(
            "{}/{}: {} visible boxes extend outside their full box",
            job.set,
            job.video,
            lint.len()
        ));
    }

    let img_dir = out.join("images").join(&job.split);
    let lbl_dir = out.join("labels").join(&job.split);
    for &f in &job.frames {
        let name = image_name(&job.set, &job.video, f);
        let rec = seq.read_frame(f).map_err(|source| ConvertError::Seq {
            path: job.seq_path.clone(),
            source,
        })?;
        let (img, t) = match decode_frame(f, rec.payload, cfg.target_size) {
            Ok(v) => v,
            Err(e) => {
                log::warn!("{name}: {e}");
                result.skipped.push(SkippedFrame {
                    image: name,
                    frame: f,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let fl = frame_labels(&vbb, f, &t, cfg);
        write_file(&img_dir.join(format!("{name}.png")), &encode_png(&img))?;
        write_file(&lbl_dir.join(format!("{name}.txt")), format_labels(&fl.labels).as_bytes())?;
        write_file(
            &lbl_dir.join(format!("{name}.ignore.txt")),
            format_labels(&fl.ignores).as_bytes(),
        )?;
        result.objects += fl.labels.len();
        result.ignore_regions += fl.ignores.len();
        result.images.push((name, f));
    }
    Ok(result)
}

fn sorted_seq_files(dir: &Path) -> Result<Vec<PathBuf>, ConvertError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("seq")))
        .collect();
    files.sort();
    Ok(files)
}

/// Converts every split of `root` into `out` and writes `manifest.json`.
///
/// Per-video problems are recorded in the manifest rather than aborting;
/// check [`Manifest::is_ok`]. Videos run on the current rayon pool.
pub fn convert_dataset(
    root: &Path,
    out: &Path,
    cfg: &ConvertConfig,
    splits: &SplitSpec,
) -> Result<Manifest, ConvertError> {
    cfg.validate()?;
    let mut manifest = Manifest {
        toolkit_version: crate::TOOLKIT_VERSION.to_string(),
        config: cfg.clone(),
        split_spec: splits.clone(),
        splits: BTreeMap::new(),
        images: BTreeMap::new(),
        skipped: Vec::new(),
        warnings: Vec::new(),
        errors: Vec::new(),
    };

    let mut jobs: Vec<VideoJob> = Vec::new();
    for (split, sets) in &splits.0 {
        manifest.splits.entry(split.clone()).or_default();
        let mut split_jobs = Vec::new();
        for set in sets {
            let set_dir = root.join(set);
            if !set_dir.is_dir() {
                manifest.warnings.push(format!("{split}: set directory {} not found", set_dir.display()));
                continue;
            }
            for seq_path in sorted_seq_files(&set_dir)? {
                let video = seq_path.file_stem().unwrap().to_string_lossy().into_owned();
                let vbb_path = root.join("annotations").join(set).join(format!("{video}.vbb"));
                if !vbb_path.is_file() {
                    manifest.errors.push(ConvertError::MissingAnnotation(vbb_path).to_string());
                    continue;
                }
                match read_header_frames(&seq_path) {
                    Ok(n) => split_jobs.push(VideoJob {
                        split: split.clone(),
                        set: set.clone(),
                        video,
                        seq_path,
                        vbb_path,
                        frames: frame_indices(n, cfg.stride),
                    }),
                    Err(e) => manifest.errors.push(e.to_string()),
                }
            }
        }
        if let Some(limit) = cfg.max_images_per_split {
            subsample(&mut split_jobs, limit, cfg.seed, split);
        }
        jobs.extend(split_jobs);
    }

    for split in splits.0.iter().map(|s| &s.0) {
        for kind in ["images", "labels"] {
            let d = out.join(kind).join(split);
            fs::create_dir_all(&d).map_err(io_err(&d))?;
        }
    }

    let results: Vec<(VideoJob, Result<VideoResult, ConvertError>)> = jobs
        .into_par_iter()
        .map(|job| {
            log::info!("converting {}/{} ({} frames)", job.set, job.video, job.frames.len());
            let r = run_video(&job, cfg, out);
            (job, r)
        })
        .collect();

    for (job, r) in results {
        let summary = manifest.splits.entry(job.split.clone()).or_default();
        match r {
            Ok(v) => {
                summary.videos += 1;
                summary.images += v.images.len();
                summary.labels += v.images.len();
                summary.objects += v.objects;
                summary.ignore_regions += v.ignore_regions;
                summary.skipped_frames += v.skipped.len();
                for (name, frame) in v.images {
                    manifest.images.insert(
                        name,
                        ImageEntry {
                            split: job.split.clone(),
                            set: job.set.clone(),
                            video: job.video.clone(),
                            frame,
                        },
                    );
                }
                manifest.skipped.extend(v.skipped);
                manifest.warnings.extend(v.warnings);
            }
            Err(e) => manifest
                .errors
                .push(format!("{}/{}: {e}", job.set, job.video)),
        }
    }

    let path = out.join("manifest.json");
    write_file(&path, manifest.to_json().as_bytes())?;
    Ok(manifest)
}

/// Keeps a seeded random subset of `limit` frames across a split's videos.
fn subsample(jobs: &mut [VideoJob], limit: usize, seed: u64, split: &str) {
    let total: usize = jobs.iter().map(|j| j.frames.len()).sum();
    if total <= limit {
        return;
    }
    let split_seed = split
        .bytes()
        .fold(seed, |h, b| h.wrapping_mul(0x100000001b3).wrapping_add(b as u64));
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed);
    let mut keep = rand::seq::index::sample(&mut rng, total, limit).into_vec();
    keep.sort_unstable();
    let mut keep = keep.into_iter().peekable();
    let mut offset = 0;
    for job in jobs.iter_mut() {
        let n = job.frames.len();
        let mut chosen = Vec::new();
        while let Some(&k) = keep.peek() {
            if k >= offset + n {
                break;
            }
            chosen.push(job.frames[k - offset]);
            keep.next();
        }
        offset += n;
        job.frames = chosen;
    }
}

/// Parses every `*.txt` label file (not `*.ignore.txt`) under `dir`.
pub fn read_label_dir(dir: &Path) -> Result<Vec<(PathBuf, Vec<YoloLabel>)>, ConvertError> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).map_err(io_err(&d))? {
            let p = e.map_err(io_err(&d))?.path();
            if p.is_dir() {
                stack.push(p);
                continue;
            }
            let name = p.file_name().unwrap().to_string_lossy();
            if !name.ends_with(".txt") || name.ends_with(".ignore.txt") {
                continue;
            }
            let text = fs::read_to_string(&p).map_err(io_err(&p))?;
            let labels = crate::geometry::parse_labels(&text).map_err(|e| ConvertError::Io {
                path: p.clone(),
                source: std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()),
            })?;
            out.push((p, labels));
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

/// Reads a PNG or JPEG from disk as RGB.
pub fn load_rgb(path: &Path) -> Result<RgbImage, ConvertError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    image::ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(io_err(path))?
        .decode()
        .map(|i| i.to_rgb8())
        .map_err(|e| ConvertError::DecodeFailure {
            frame: 0,
            reason: format!("{}: {e}", path.display()),
        })
}
