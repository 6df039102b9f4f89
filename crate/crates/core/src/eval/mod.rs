//! Detection scoring: greedy matching, precision/recall curves, F1, AP,
//! and mAP over classes and IoU thresholds.
//!
//! Conventions:
//! - detections are matched per (image, class) in descending confidence,
//!   ties keep input order;
//! - precision with no detections is 1, recall with no ground truth is 1;
//! - one PR point per distinct confidence value;
//! - AP is the sum of recall increments times precision, after replacing
//!   each precision by the maximum precision at equal or higher recall
//!   (disable with [`Interpolation::Raw`]).

mod io;
mod report;

pub use io::{load_eval_set, parse_detection_line, EvalIoError};
pub use report::{emit_report, render_svg, write_pr_csv};

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::geometry::{iou, BBox};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("precision-recall curve is empty")]
    EmptyCurve,
    #[error("no classes to average over")]
    NoClasses,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Detection {
    pub image_id: String,
    pub class_id: u32,
    pub confidence: f64,
    pub bbox: BBox,
}

/// A ground-truth box or an ignore region.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruth {
    pub image_id: String,
    pub class_id: u32,
    pub bbox: BBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchKind {
    TruePositive { gt: usize },
    FalsePositive,
    /// Unmatched detection on an ignore region; counted as neither TP nor FP.
    Ignored,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// Outcome per detection, in input order.
    pub flags: Vec<MatchKind>,
    pub false_negatives: usize,
}

impl MatchResult {
    pub fn true_positives(&self) -> usize {
        self.flags
            .iter()
            .filter(|f| matches!(f, MatchKind::TruePositive { .. }))
            .count()
    }

    pub fn false_positives(&self) -> usize {
        self.flags
            .iter()
            .filter(|f| matches!(f, MatchKind::FalsePositive))
            .count()
    }
}

/// Indices of `confidences` by descending value; equal values keep input order.
pub fn confidence_order(confidences: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..confidences.len()).collect();
    order.sort_by(|&a, &b| confidences[b].total_cmp(&confidences[a]));
    order
}

/// Greedy matching for one image and one class.
///
/// Each detection, highest confidence first, takes the unmatched ground
/// truth with the highest IoU at or above `iou_threshold` (lowest index on
/// ties). A detection left unmatched whose IoU with some ignore region
/// reaches the threshold is marked [`MatchKind::Ignored`].
pub fn match_detections(
    dets: &[Detection],
    gts: &[BBox],
    ignores: &[BBox],
    iou_threshold: f64,
) -> MatchResult {
    let confidences: Vec<f64> = dets.iter().map(|d| d.confidence).collect();
    let mut taken = vec![false; gts.len()];
    let mut flags = vec![MatchKind::FalsePositive; dets.len()];
    for i in confidence_order(&confidences) {
        let b = &dets[i].bbox;
        let mut best: Option<(usize, f64)> = None;
        for (j, g) in gts.iter().enumerate() {
            if taken[j] {
                continue;
            }
            let v = iou(b, g);
            if v >= iou_threshold && best.is_none_or(|(_, bv)| v > bv) {
                best = Some((j, v));
            }
        }
        flags[i] = match best {
            Some((j, _)) => {
                taken[j] = true;
                MatchKind::TruePositive { gt: j }
            }
            None if ignores.iter().any(|r| iou(b, r) >= iou_threshold) => MatchKind::Ignored,
            None => MatchKind::FalsePositive,
        };
    }
    MatchResult {
        flags,
        false_negatives: taken.iter().filter(|t| !**t).count(),
    }
}

/// `TP / (TP + FP)`, or 1 when there are no detections.
pub fn precision(tp: usize, fp: usize) -> f64 {
    if tp + fp == 0 {
        1.0
    } else {
        tp as f64 / (tp + fp) as f64
    }
}

/// `TP / (TP + FN)`, or 1 when there is no ground truth.
pub fn recall(tp: usize, fn_: usize) -> f64 {
    if tp + fn_ == 0 {
        1.0
    } else {
        tp as f64 / (tp + fn_) as f64
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
}

/// Builds the curve from scored match outcomes, one point per distinct
/// confidence, highest threshold first. Ignored detections must already
/// be removed.
pub fn pr_curve(scored: &[(f64, bool)], n_gt: usize) -> Vec<PrPoint> {
    let confidences: Vec<f64> = scored.iter().map(|s| s.0).collect();
    let order = confidence_order(&confidences);
    let mut curve: Vec<PrPoint> = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    for (k, &i) in order.iter().enumerate() {
        let (conf, is_tp) = scored[i];
        if is_tp {
            tp += 1;
        } else {
            fp += 1;
        }
        let last_of_group = order.get(k + 1).is_none_or(|&n| scored[n].0 != conf);
        if last_of_group {
            let fn_ = n_gt.saturating_sub(tp);
            curve.push(PrPoint {
                threshold: conf,
                tp,
                fp,
                fn_,
                precision: precision(tp, fp),
                recall: recall(tp, fn_),
            });
        }
    }
    curve
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Monotone precision envelope (all-point interpolation).
    #[default]
    Envelope,
    /// Precision as measured at each point.
    Raw,
}

/// AP with the precision envelope applied.
pub fn average_precision(curve: &[PrPoint]) -> Result<f64, EvalError> {
    average_precision_with(curve, Interpolation::Envelope)
}

/// Sum over curve points of `(recall_k - recall_{k-1}) * precision_k`,
/// with `recall_{-1} = 0`. Points must be ordered by descending threshold.
pub fn average_precision_with(curve: &[PrPoint], interp: Interpolation) -> Result<f64, EvalError> {
    if curve.is_empty() {
        return Err(EvalError::EmptyCurve);
    }
    let mut prec: Vec<f64> = curve.iter().map(|p| p.precision).collect();
    if interp == Interpolation::Envelope {
        for k in (0..prec.len().saturating_sub(1)).rev() {
            prec[k] = prec[k].max(prec[k + 1]);
        }
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (p, pt) in prec.iter().zip(curve) {
        ap += (pt.recall - prev_recall) * p;
        prev_recall = pt.recall;
    }
    Ok(ap.clamp(0.0, 1.0))
}

/// Arithmetic mean of per-class APs.
pub fn mean_average_precision(aps: &[f64]) -> Result<f64, EvalError> {
    if aps.is_empty() {
        return Err(EvalError::NoClasses);
    }
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn coco_iou_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

/// Ground truth, ignore regions and detections for a set of images.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalSet {
    /// Every evaluated image, including ones without boxes.
    pub images: BTreeSet<String>,
    pub ground_truth: Vec<GroundTruth>,
    pub ignores: Vec<GroundTruth>,
    pub detections: Vec<Detection>,
}

impl EvalSet {
    pub fn classes(&self) -> Vec<u32> {
        let set: BTreeSet<u32> = self
            .ground_truth
            .iter()
            .map(|g| g.class_id)
            .chain(self.detections.iter().map(|d| d.class_id))
            .collect();
        set.into_iter().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalOptions {
    /// Threshold for the headline AP, F1 and PR curve.
    pub iou_threshold: f64,
    pub use_ignores: bool,
    pub interpolation: Interpolation,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            use_ignores: true,
            interpolation: Interpolation::Envelope,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct F1Point {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassReport {
    pub class_id: u32,
    pub ground_truths: usize,
    pub detections: usize,
    pub ignored_detections: usize,
    /// AP at `iou_threshold`.
    pub ap: f64,
    /// `(iou, ap)` for 0.50..=0.95.
    pub ap_by_iou: Vec<(f64, f64)>,
    pub ap_50_95: f64,
    pub best_f1: Option<F1Point>,
    pub curve: Vec<PrPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Counts {
    pub images: usize,
    pub ground_truths: usize,
    pub ignore_regions: usize,
    pub detections: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub options: EvalOptions,
    pub counts: Counts,
    /// mAP at `options.iou_threshold`.
    pub map: f64,
    pub map_50_95: f64,
    /// Mean over classes of each class's best F1.
    pub f1: f64,
    pub classes: Vec<ClassReport>,
}

/// Ground-truth boxes, ignore boxes and detections of one image.
type ImageBoxes<'a> = (Vec<BBox>, Vec<BBox>, Vec<&'a Detection>);

struct Grouped<'a> {
    /// Image id to its boxes, for one class.
    per_image: BTreeMap<&'a str, ImageBoxes<'a>>,
    n_gt: usize,
}

fn group_class<'a>(set: &'a EvalSet, class: u32, use_ignores: bool) -> Grouped<'a> {
    let mut per_image: BTreeMap<&str, ImageBoxes> = BTreeMap::new();
    let mut n_gt = 0;
    for g in set.ground_truth.iter().filter(|g| g.class_id == class) {
        per_image.entry(&g.image_id).or_default().0.push(g.bbox);
        n_gt += 1;
    }
    if use_ignores {
        for g in set.ignores.iter().filter(|g| g.class_id == class) {
            per_image.entry(&g.image_id).or_default().1.push(g.bbox);
        }
    }
    for d in set.detections.iter().filter(|d| d.class_id == class) {
        per_image.entry(&d.image_id).or_default().2.push(d);
    }
    Grouped { per_image, n_gt }
}

/// Matches every image of one class and returns `(scored outcomes, ignored count)`.
fn score_class(g: &Grouped, iou_threshold: f64) -> (Vec<(f64, bool)>, usize) {
    let mut scored = Vec::new();
    let mut ignored = 0;
    for (gts, ignores, dets) in g.per_image.values() {
        let owned: Vec<Detection> = dets.iter().map(|d| (*d).clone()).collect();
        let m = match_detections(&owned, gts, ignores, iou_threshold);
        for (d, f) in dets.iter().zip(&m.flags) {
            match f {
                MatchKind::TruePositive { .. } => scored.push((d.confidence, true)),
                MatchKind::FalsePositive => scored.push((d.confidence, false)),
                MatchKind::Ignored => ignored += 1,
            }
        }
    }
    (scored, ignored)
}

fn class_ap(g: &Grouped, iou_threshold: f64, interp: Interpolation) -> f64 {
    let (scored, _) = score_class(g, iou_threshold);
    let curve = pr_curve(&scored, g.n_gt);
    average_precision_with(&curve, interp).unwrap_or(0.0)
}

fn best_f1(curve: &[PrPoint]) -> Option<F1Point> {
    let mut best: Option<F1Point> = None;
    for p in curve {
        let v = f1(p.precision, p.recall);
        if best.is_none_or(|b| v > b.f1) {
            best = Some(F1Point {
                threshold: p.threshold,
                precision: p.precision,
                recall: p.recall,
                f1: v,
            });
        }
    }
    best
}

/// Full evaluation: per-class curves, AP at every IoU threshold, mAP and F1.
pub fn evaluate(set: &EvalSet, opts: &EvalOptions) -> EvalReport {
    let thresholds = coco_iou_thresholds();
    let classes: Vec<ClassReport> = set
        .classes()
        .into_par_iter()
        .map(|class| {
            let g = group_class(set, class, opts.use_ignores);
            let (scored, ignored) = score_class(&g, opts.iou_threshold);
            let curve = pr_curve(&scored, g.n_gt);
            let ap = average_precision_with(&curve, opts.interpolation).unwrap_or(0.0);
            let ap_by_iou: Vec<(f64, f64)> = thresholds
                .iter()
                .map(|&t| (t, class_ap(&g, t, opts.interpolation)))
                .collect();
            let ap_50_95 = ap_by_iou.iter().map(|x| x.1).sum::<f64>() / ap_by_iou.len() as f64;
            ClassReport {
                class_id: class,
                ground_truths: g.n_gt,
                detections: scored.len() + ignored,
                ignored_detections: ignored,
                ap,
                ap_by_iou,
                ap_50_95,
                best_f1: best_f1(&curve),
                curve,
            }
        })
        .collect();
    let mean = |f: &dyn Fn(&ClassReport) -> f64| {
        mean_average_precision(&classes.iter().map(f).collect::<Vec<_>>()).unwrap_or(0.0)
    };
    EvalReport {
        options: opts.clone(),
        counts: Counts {
            images: set.images.len(),
            ground_truths: set.ground_truth.len(),
            ignore_regions: set.ignores.len(),
            detections: set.detections.len(),
        },
        map: mean(&|c| c.ap),
        map_50_95: mean(&|c| c.ap_50_95),
        f1: mean(&|c| c.best_f1.map_or(0.0, |b| b.f1)),
        classes,
    }
}

/// mAP at one IoU threshold.
pub fn map_at_iou(set: &EvalSet, iou_threshold: f64, opts: &EvalOptions) -> Result<f64, EvalError> {
    let aps: Vec<f64> = set
        .classes()
        .into_iter()
        .map(|c| class_ap(&group_class(set, c, opts.use_ignores), iou_threshold, opts.interpolation))
        .collect();
    mean_average_precision(&aps)
}

/// mAP averaged over IoU thresholds 0.50..=0.95 in steps of 0.05.
pub fn map_over_iou_range(set: &EvalSet, opts: &EvalOptions) -> Result<f64, EvalError> {
    let per_iou = coco_iou_thresholds()
        .into_par_iter()
        .map(|t| map_at_iou(set, t, opts))
        .collect::<Result<Vec<f64>, _>>()?;
    Ok(per_iou.iter().sum::<f64>() / per_iou.len() as f64)
}
