use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use pedkit_core::anchors::{fit_anchors, label_dims, KMeansConfig};
use pedkit_core::augment::{mosaic, MosaicInput, MosaicSpec};
use pedkit_core::convert::{convert_dataset, encode_png, extract_frames, load_rgb, read_label_dir, ConvertConfig};
use pedkit_core::eval::{emit_report, evaluate, load_eval_set, EvalOptions, Interpolation};
use pedkit_core::geometry::{format_labels, parse_labels};
use pedkit_core::{open_seq, parse_vbb, vbb_to_json};
use serde_json::json;

use crate::args::{AnchorsArgs, Command, ConvertArgs, EvalArgs, ExtractArgs, InfoArgs, MosaicArgs, VbbDumpArgs};

pub fn run(command: &Command) -> Result<()> {
    log::info!("effective config: {command:?}");
    match command {
        Command::Info(a) => info(a),
        Command::Extract(a) => extract(a),
        Command::VbbDump(a) => vbb_dump(a),
        Command::Convert(a) => convert(a),
        Command::Mosaic(a) => mosaic_cmd(a),
        Command::Anchors(a) => anchors(a),
        Command::Eval(a) => eval(a),
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializing plain data"));
}

fn extension(path: &Path) -> String {
    path.extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
        .unwrap_or_default()
}

fn info(a: &InfoArgs) -> Result<()> {
    let bytes = read(&a.path)?;
    match extension(&a.path).as_str() {
        "seq" => {
            let seq = open_seq(bytes).with_context(|| a.path.display().to_string())?;
            print_json(&json!({
                "path": a.path,
                "header": seq.header(),
                "frames": seq.len(),
                "file_size": seq.file_size(),
            }));
        }
        "vbb" => {
            let v = parse_vbb(&bytes).with_context(|| a.path.display().to_string())?;
            let mut by_label: BTreeMap<&str, usize> = BTreeMap::new();
            for o in v.objects() {
                *by_label.entry(&o.label).or_default() += 1;
            }
            print_json(&json!({
                "path": a.path,
                "n_frame": v.n_frame,
                "max_obj": v.max_obj,
                "object_count": v.object_count(),
                "objects_by_label": by_label,
                "extra_fields": v.extra.iter().map(|e| &e.0).collect::<Vec<_>>(),
            }));
        }
        other => bail!("{}: unknown file type {other:?}, expected .seq or .vbb", a.path.display()),
    }
    Ok(())
}

fn default_prefix(path: &Path) -> (String, String) {
    let set = path
        .parent()
        .and_then(|p| p.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "set".into());
    let video = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "video".into());
    (set, video)
}

fn extract(a: &ExtractArgs) -> Result<()> {
    let seq = open_seq(read(&a.seq)?).with_context(|| a.seq.display().to_string())?;
    let (set, video) = match &a.prefix {
        Some(p) => match p.split_once('_') {
            Some((s, v)) => (s.to_string(), v.to_string()),
            None => (p.clone(), String::new()),
        },
        None => default_prefix(&a.seq),
    };
    let cfg = ConvertConfig {
        stride: a.stride,
        target_size: a.size,
        ..Default::default()
    };
    let out = extract_frames(&seq, &cfg, &a.out, (&set, &video))?;
    print_json(&json!({
        "written": out.written.len(),
        "skipped": out.skipped,
    }));
    Ok(())
}

fn vbb_dump(a: &VbbDumpArgs) -> Result<()> {
    let v = parse_vbb(&read(&a.vbb)?).with_context(|| a.vbb.display().to_string())?;
    let text = vbb_to_json(&v);
    match &a.out {
        Some(p) => fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn convert(a: &ConvertArgs) -> Result<()> {
    let cfg = ConvertConfig {
        stride: a.stride,
        target_size: a.size,
        classes: a.classes.clone(),
        ignore_labels: a.ignore_labels.clone(),
        occlusion: a.occlusion.into(),
        min_box_height: a.min_height,
        max_images_per_split: a.max_per_split,
        seed: a.seed,
    };
    log::info!("conversion config: {}", serde_json::to_string(&cfg)?);
    let m = convert_dataset(&a.root, &a.out, &cfg, &a.splits.0)?;
    for w in &m.warnings {
        log::warn!("{w}");
    }
    print_json(&json!({
        "manifest": a.out.join("manifest.json"),
        "splits": m.splits,
        "skipped_frames": m.skipped.len(),
        "errors": m.errors,
    }));
    if !m.is_ok() {
        for e in &m.errors {
            log::error!("{e}");
        }
        bail!("{} videos failed to convert", m.errors.len());
    }
    Ok(())
}

fn read_labels(path: &Path) -> Result<Vec<pedkit_core::YoloLabel>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_labels(&text).with_context(|| path.display().to_string())
}

fn mosaic_cmd(a: &MosaicArgs) -> Result<()> {
    let mut inputs = Vec::with_capacity(4);
    for (i, img_path) in a.images.iter().enumerate() {
        let image = load_rgb(img_path)?;
        let labels = match &a.labels {
            Some(l) => read_labels(&l[i])?,
            None => {
                let p = img_path.with_extension("txt");
                if p.is_file() {
                    read_labels(&p)?
                } else {
                    Vec::new()
                }
            }
        };
        inputs.push(MosaicInput { image, labels });
    }
    let mut spec = match a.center {
        Some(c) => MosaicSpec::with_center(a.size, (c.0, c.1)),
        None => MosaicSpec::sample(a.size, a.seed),
    };
    spec.seed = a.seed;
    spec.min_side = a.min_side;
    log::info!("mosaic spec: {}", serde_json::to_string(&spec)?);
    let (img, labels) = mosaic(&inputs, &spec)?;
    fs::write(&a.out, encode_png(&img)).with_context(|| format!("writing {}", a.out.display()))?;
    let lp = a.out.with_extension("txt");
    fs::write(&lp, format_labels(&labels)).with_context(|| format!("writing {}", lp.display()))?;
    print_json(&json!({
        "image": a.out,
        "labels": lp,
        "center": spec.center,
        "label_count": labels.len(),
    }));
    Ok(())
}

fn anchors(a: &AnchorsArgs) -> Result<()> {
    let files = read_label_dir(&a.labels)?;
    let labels: Vec<_> = files.into_iter().flat_map(|(_, l)| l).collect();
    let dims = label_dims(&labels, a.size);
    let cfg = KMeansConfig {
        k: a.k,
        seed: a.seed,
        max_iterations: a.max_iterations,
        bpr_threshold: a.threshold,
        reference_size: a.size,
    };
    let fit = fit_anchors(&dims, &cfg).context("clustering label sizes")?;
    if a.json {
        print_json(&json!({
            "anchors": fit.set.anchors,
            "reference_size": fit.set.reference_size,
            "bpr": fit.set.bpr,
            "boxes": dims.len(),
            "inertia": fit.inertia(),
            "iterations": fit.iterations,
            "converged": fit.converged,
        }));
    } else {
        for (w, h) in &fit.set.anchors {
            println!("{w:.2},{h:.2}");
        }
        println!("bpr={:.6}", fit.set.bpr);
    }
    Ok(())
}

fn eval(a: &EvalArgs) -> Result<()> {
    let set = load_eval_set(&a.gt, &a.det, a.ignore.as_deref())?;
    let opts = EvalOptions {
        iou_threshold: a.iou,
        use_ignores: !a.no_ignore,
        interpolation: if a.raw { Interpolation::Raw } else { Interpolation::Envelope },
    };
    let report = evaluate(&set, &opts);
    let written = emit_report(&report, &a.out, a.svg).with_context(|| format!("writing {}", a.out.display()))?;
    print_json(&json!({
        "map": report.map,
        "map_50_95": report.map_50_95,
        "f1": report.f1,
        "counts": report.counts,
        "files": written,
    }));
    Ok(())
}
