use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pedkit_core::convert::SplitSpec;
use pedkit_core::vbb::OcclusionPolicy;

#[derive(Debug, Parser)]
#[command(
    name = "pedkit",
    version,
    about = "Caltech pedestrian seq/vbb tools: inspect, convert to YOLO format, mosaic, anchors, evaluation",
    arg_required_else_help = true
)]
pub struct Cli {
    /// Raise log verbosity (-v debug, -vv trace).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,

    /// Worker threads [default: available cores].
    #[arg(long, env = "PED_TOOLKIT_JOBS", global = true, value_parser = positive_usize)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the header of a .seq file or a summary of a .vbb file as JSON.
    Info(InfoArgs),
    /// Write frames of a .seq file as letterboxed PNG images.
    Extract(ExtractArgs),
    /// Dump a .vbb annotation file as JSON.
    VbbDump(VbbDumpArgs),
    /// Convert a Caltech tree into YOLO images, labels and a manifest.
    Convert(ConvertArgs),
    /// Compose four labelled images into one mosaic.
    Mosaic(MosaicArgs),
    /// Cluster label box sizes into anchors and report best possible recall.
    Anchors(AnchorsArgs),
    /// Score detections against ground-truth labels.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct InfoArgs {
    /// A .seq or .vbb file.
    pub path: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Input .seq file.
    pub seq: PathBuf,
    /// Output directory.
    #[arg(short, long)]
    pub out: PathBuf,
    /// Keep every N-th frame, starting at frame 0.
    #[arg(long, default_value_t = 1, value_parser = positive_usize)]
    pub stride: usize,
    /// Side of the square output images in pixels.
    #[arg(long, default_value_t = 640, value_parser = clap::value_parser!(u32).range(1..))]
    pub size: u32,
    /// Image name prefix as SET_VIDEO [default: parent directory and file stem].
    #[arg(long)]
    pub prefix: Option<String>,
}

#[derive(Debug, Args)]
pub struct VbbDumpArgs {
    /// Input .vbb file.
    pub vbb: PathBuf,
    /// Write JSON here instead of standard output.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Occlusion {
    /// Full object extent.
    Full,
    /// Visible region when annotated, else the full extent.
    Visible,
}

impl From<Occlusion> for OcclusionPolicy {
    fn from(o: Occlusion) -> Self {
        match o {
            Occlusion::Full => OcclusionPolicy::FullBox,
            Occlusion::Visible => OcclusionPolicy::VisibleBox,
        }
    }
}

/// `name=set,set;name=set,...`
#[derive(Debug, Clone, PartialEq)]
pub struct Splits(pub SplitSpec);

impl FromStr for Splits {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let mut out = Vec::new();
        for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (name, sets) = part
                .split_once('=')
                .ok_or_else(|| format!("expected NAME=SET,SET in {part:?}"))?;
            let name = name.trim();
            if name.is_empty() {
                return Err(format!("empty split name in {part:?}"));
            }
            let sets: Vec<String> = sets
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect();
            out.push((name.to_string(), sets));
        }
        Ok(Splits(SplitSpec(out)))
    }
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    /// Dataset root containing setXX/ and annotations/setXX/.
    #[arg(long)]
    pub root: PathBuf,
    /// Output directory.
    #[arg(short, long)]
    pub out: PathBuf,
    /// Keep every N-th frame, starting at frame 0.
    #[arg(long, default_value_t = 1, value_parser = positive_usize)]
    pub stride: usize,
    /// Side of the square output images in pixels.
    #[arg(long, default_value_t = 640, value_parser = clap::value_parser!(u32).range(1..))]
    pub size: u32,
    /// Which box to use for partly occluded objects.
    #[arg(long, value_enum, default_value_t = Occlusion::Full)]
    pub occlusion: Occlusion,
    /// Drop labels shorter than this many output pixels.
    #[arg(long, default_value_t = 0.0)]
    pub min_height: f64,
    /// Comma-separated labels kept as classes, in class-id order.
    #[arg(long, value_delimiter = ',', default_value = "person")]
    pub classes: Vec<String>,
    /// Comma-separated labels written as ignore regions.
    #[arg(long, value_delimiter = ',', default_value = "people,person?,person-fa")]
    pub ignore_labels: Vec<String>,
    /// Split assignment as NAME=SET,SET;NAME=SET.
    #[arg(long, default_value = "train=set00,set01,set02,set03,set04,set05;test=set06,set07,set08,set09,set10")]
    pub splits: Splits,
    /// Sample at most this many images per split.
    #[arg(long)]
    pub max_per_split: Option<usize>,
    /// Seed for per-split sampling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Center(pub u32, pub u32);

impl FromStr for Center {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (x, y) = s.split_once(',').ok_or("expected X,Y")?;
        let p = |v: &str| v.trim().parse::<u32>().map_err(|e| format!("{v:?}: {e}"));
        Ok(Center(p(x)?, p(y)?))
    }
}

#[derive(Debug, Args)]
pub struct MosaicArgs {
    /// Four images: top-left, top-right, bottom-left, bottom-right.
    #[arg(num_args = 4, required = true)]
    pub images: Vec<PathBuf>,
    /// Label files for the images, in the same order [default: each image path with a .txt extension, if present].
    #[arg(long, num_args = 4)]
    pub labels: Option<Vec<PathBuf>>,
    /// Output image; labels go next to it with a .txt extension.
    #[arg(short, long)]
    pub out: PathBuf,
    /// Tile size s; the output is 2s x 2s.
    #[arg(long, default_value_t = 640, value_parser = clap::value_parser!(u32).range(1..))]
    pub size: u32,
    /// Seed for drawing the center point.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Explicit center X,Y in output pixels, overriding the seed.
    #[arg(long)]
    pub center: Option<Center>,
    /// Drop labels narrower or shorter than this many pixels after clipping.
    #[arg(long, default_value_t = 2.0)]
    pub min_side: f64,
}

#[derive(Debug, Args)]
pub struct AnchorsArgs {
    /// Directory of YOLO label files, searched recursively.
    #[arg(long)]
    pub labels: PathBuf,
    /// Number of anchors.
    #[arg(short, default_value_t = 9, value_parser = positive_usize)]
    pub k: usize,
    /// Seed for k-means++ initialisation.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Image size the anchors are expressed at, in pixels.
    #[arg(long, default_value_t = 640.0)]
    pub size: f64,
    /// Side-ratio threshold for best possible recall.
    #[arg(long, default_value_t = 4.0)]
    pub threshold: f64,
    /// Maximum k-means iterations.
    #[arg(long, default_value_t = 300)]
    pub max_iterations: usize,
    /// Print JSON instead of w,h lines.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Ground-truth label directory.
    #[arg(long)]
    pub gt: PathBuf,
    /// Detection directory, lines `class confidence cx cy w h`.
    #[arg(long)]
    pub det: PathBuf,
    /// Directory holding <image>.ignore.txt files [default: the --gt directory].
    #[arg(long)]
    pub ignore: Option<PathBuf>,
    /// IoU threshold for the headline AP, F1 and PR curve.
    #[arg(long, default_value_t = 0.5, value_parser = unit_interval)]
    pub iou: f64,
    /// Count detections on ignore regions as false positives.
    #[arg(long)]
    pub no_ignore: bool,
    /// Use measured precision instead of the monotone envelope.
    #[arg(long)]
    pub raw: bool,
    /// Output directory for report.json and pr.csv.
    #[arg(short, long, default_value = "eval-report")]
    pub out: PathBuf,
    /// Also write pr.svg.
    #[arg(long)]
    pub svg: bool,
}

fn positive_usize(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

fn unit_interval(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err("must be in (0, 1]".into())
    }
}
