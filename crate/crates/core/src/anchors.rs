//! K-means anchor boxes over `(width, height)` pairs with `1 - IoU` of
//! co-centered boxes as the distance, plus the best-possible-recall check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::geometry::YoloLabel;

#[derive(Debug, Error, PartialEq)]
pub enum AnchorError {
    #[error("need at least {k} boxes for {k} anchors, got {n}")]
    TooFewBoxes { k: usize, n: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("box {index} has non-positive or non-finite size {w}x{h}")]
    InvalidBox { index: usize, w: f64, h: f64 },
}

pub type Dims = (f64, f64);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnchorSet {
    /// `(w, h)` in pixels at `reference_size`, ascending by area.
    pub anchors: Vec<Dims>,
    pub reference_size: f64,
    pub bpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iterations: usize,
    pub bpr_threshold: f64,
    pub reference_size: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            k: 9,
            seed: 0,
            max_iterations: 300,
            bpr_threshold: 4.0,
            reference_size: 640.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorFit {
    pub set: AnchorSet,
    /// Total distance after each assignment step.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl AnchorFit {
    pub fn inertia(&self) -> f64 {
        self.inertia_history.last().copied().unwrap_or(0.0)
    }
}

pub fn cocentered_iou(a: Dims, b: Dims) -> f64 {
    let inter = a.0.min(b.0) * a.1.min(b.1);
    inter / (a.0 * a.1 + b.0 * b.1 - inter)
}

pub fn distance(a: Dims, b: Dims) -> f64 {
    1.0 - cocentered_iou(a, b)
}

/// Sum of distances from each box to its nearest centroid.
pub fn inertia(boxes: &[Dims], centroids: &[Dims]) -> f64 {
    boxes.iter().map(|&b| nearest(b, centroids).1).sum()
}

fn nearest(b: Dims, centroids: &[Dims]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, &c) in centroids.iter().enumerate() {
        let d = distance(b, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn cluster_cost(members: &[Dims], c: Dims) -> f64 {
    members.iter().map(|&m| distance(m, c)).sum()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Compass search from `start`, accepting only moves that lower the cost.
fn refine(members: &[Dims], start: Dims, start_cost: f64) -> (Dims, f64) {
    let (mut c, mut cost) = (start, start_cost);
    let mut step = (c.0 * 0.25, c.1 * 0.25);
    for _ in 0..16 {
        for _ in 0..8 {
            let moves = [
                (c.0 + step.0, c.1),
                (c.0 - step.0, c.1),
                (c.0, c.1 + step.1),
                (c.0, c.1 - step.1),
                (c.0 + step.0, c.1 + step.1),
                (c.0 - step.0, c.1 - step.1),
            ];
            let mut moved = false;
            for m in moves {
                if m.0 <= 0.0 || m.1 <= 0.0 {
                    continue;
                }
                let mc = cluster_cost(members, m);
                if mc < cost {
                    (c, cost, moved) = (m, mc, true);
                }
            }
            if !moved {
                break;
            }
        }
        step = (step.0 / 2.0, step.1 / 2.0);
    }
    (c, cost)
}

fn seed_plus_plus(points: &[Dims], k: usize, rng: &mut ChaCha8Rng) -> Vec<Dims> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![points[first]];
    let mut dist: Vec<f64> = points.iter().map(|&p| distance(p, points[first])).collect();
    while centroids.len() < k {
        let weights: Vec<f64> = dist.iter().map(|d| d * d).collect();
        let total: f64 = weights.iter().sum();
        let pick = if total > 0.0 {
            let r = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, w) in weights.iter().enumerate() {
                acc += w;
                if *w > 0.0 && acc > r {
                    pick = Some(i);
                    break;
                }
            }
            pick.unwrap_or_else(|| weights.iter().rposition(|w| *w > 0.0).unwrap())
        } else {
            chosen.iter().position(|c| !c).unwrap()
        };
        chosen[pick] = true;
        centroids.push(points[pick]);
        for (d, &p) in dist.iter_mut().zip(points) {
            *d = d.min(distance(p, points[pick]));
        }
    }
    centroids
}

/// Runs k-means and reports the inertia trace.
///
/// Boxes are sorted before clustering, so the result does not depend on
/// input order. The update step starts from the best of the current
/// centroid, the mean and the coordinate-wise median of its members, then
/// refines it by compass search. Every accepted move lowers the cluster's
/// total distance, so the inertia never increases.
pub fn fit_anchors(boxes: &[Dims], cfg: &KMeansConfig) -> Result<AnchorFit, AnchorError> {
    if cfg.k == 0 {
        return Err(AnchorError::ZeroK);
    }
    if boxes.len() < cfg.k {
        return Err(AnchorError::TooFewBoxes {
            k: cfg.k,
            n: boxes.len(),
        });
    }
    if let Some((index, &(w, h))) = boxes
        .iter()
        .enumerate()
        .find(|(_, (w, h))| !(w.is_finite() && h.is_finite() && *w > 0.0 && *h > 0.0))
    {
        return Err(AnchorError::InvalidBox { index, w, h });
    }

    let mut points = boxes.to_vec();
    points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut centroids = seed_plus_plus(&points, cfg.k, &mut rng);
    let mut assignment: Vec<usize> = Vec::new();
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iterations {
        iterations += 1;
        let assigned: Vec<(usize, f64)> = points.iter().map(|&p| nearest(p, &centroids)).collect();
        history.push(assigned.iter().map(|a| a.1).sum());
        let next: Vec<usize> = assigned.iter().map(|a| a.0).collect();
        if next == assignment {
            converged = true;
            break;
        }
        assignment = next;

        let mut used_for_reseed = vec![false; points.len()];
        for (c, centroid) in centroids.iter_mut().enumerate() {
            let members: Vec<Dims> = points
                .iter()
                .zip(&assignment)
                .filter(|(_, &a)| a == c)
                .map(|(p, _)| *p)
                .collect();
            if members.is_empty() {
                // Reseed at the point farthest from its own centroid.
                let far = assigned
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !used_for_reseed[*i])
                    .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1).then(b.0.cmp(&a.0)))
                    .map(|(i, _)| i);
                if let Some(i) = far {
                    used_for_reseed[i] = true;
                    *centroid = points[i];
                }
                continue;
            }
            let n = members.len() as f64;
            let mean = (
                members.iter().map(|m| m.0).sum::<f64>() / n,
                members.iter().map(|m| m.1).sum::<f64>() / n,
            );
            let med = (
                median(members.iter().map(|m| m.0).collect()),
                median(members.iter().map(|m| m.1).collect()),
            );
            let mut best = (*centroid, cluster_cost(&members, *centroid));
            for cand in [mean, med] {
                let cost = cluster_cost(&members, cand);
                if cost < best.1 {
                    best = (cand, cost);
                }
            }
            *centroid = refine(&members, best.0, best.1).0;
        }
    }

    centroids.sort_by(|a, b| {
        (a.0 * a.1)
            .total_cmp(&(b.0 * b.1))
            .then(a.0.total_cmp(&b.0))
    });
    let bpr = best_possible_recall(&centroids, boxes, cfg.bpr_threshold);
    Ok(AnchorFit {
        set: AnchorSet {
            anchors: centroids,
            reference_size: cfg.reference_size,
            bpr,
        },
        inertia_history: history,
        iterations,
        converged,
    })
}

/// `k` anchors with default settings (300 iterations, BPR threshold 4).
pub fn kmeans_anchors(boxes: &[Dims], k: usize, seed: u64) -> Result<AnchorSet, AnchorError> {
    let cfg = KMeansConfig {
        k,
        seed,
        ..KMeansConfig::default()
    };
    fit_anchors(boxes, &cfg).map(|f| f.set)
}

/// Worst side ratio between a box and an anchor.
fn side_ratio(b: Dims, a: Dims) -> f64 {
    let rw = b.0 / a.0;
    let rh = b.1 / a.1;
    rw.max(1.0 / rw).max(rh).max(1.0 / rh)
}

/// Fraction of boxes with some anchor whose worst side ratio is below `threshold`.
pub fn best_possible_recall(anchors: &[Dims], boxes: &[Dims], threshold: f64) -> f64 {
    if boxes.is_empty() || anchors.is_empty() {
        return 0.0;
    }
    let covered = boxes
        .iter()
        .filter(|&&b| {
            anchors
                .iter()
                .map(|&a| side_ratio(b, a))
                .fold(f64::INFINITY, f64::min)
                < threshold
        })
        .count();
    covered as f64 / boxes.len() as f64
}

/// Box sizes in pixels at `reference_size` from normalized labels.
pub fn label_dims(labels: &[YoloLabel], reference_size: f64) -> Vec<Dims> {
    labels
        .iter()
        .map(|l| (l.w * reference_size, l.h * reference_size))
        .filter(|(w, h)| *w > 0.0 && *h > 0.0)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_equals_n_reproduces_boxes() {
        let boxes = vec![(10.0, 20.0), (40.0, 80.0), (100.0, 50.0), (5.0, 5.0)];
        let fit = fit_anchors(&boxes, &KMeansConfig { k: 4, ..Default::default() }).unwrap();
        let mut want = boxes.clone();
        want.sort_by(|a, b| (a.0 * a.1).total_cmp(&(b.0 * b.1)));
        assert_eq!(fit.set.anchors, want);
        assert_eq!(fit.inertia(), 0.0);
        assert_eq!(fit.set.bpr, 1.0);
    }

    #[test]
    fn errors() {
        assert_eq!(
            kmeans_anchors(&[(1.0, 1.0)], 2, 0),
            Err(AnchorError::TooFewBoxes { k: 2, n: 1 })
        );
        assert_eq!(kmeans_anchors(&[(1.0, 1.0)], 0, 0), Err(AnchorError::ZeroK));
        assert!(matches!(
            kmeans_anchors(&[(1.0, 0.0)], 1, 0),
            Err(AnchorError::InvalidBox { index: 0, .. })
        ));
    }

    #[test]
    fn bpr_examples() {
        let anchors = vec![(10.0, 10.0), (30.0, 60.0)];
        assert_eq!(best_possible_recall(&anchors, &anchors, 4.0), 1.0);
        assert_eq!(best_possible_recall(&anchors, &[(600.0, 600.0)], 4.0), 0.0);
        assert_eq!(best_possible_recall(&anchors, &[(39.9, 39.9), (300.0, 100.0)], 4.0), 0.5);
    }

    #[test]
    fn anchors_sorted_by_area() {
        let boxes: Vec<Dims> = (1..50).map(|i| (i as f64 * 3.0, (50 - i) as f64 * 2.0 + 5.0)).collect();
        let set = kmeans_anchors(&boxes, 5, 7).unwrap();
        let areas: Vec<f64> = set.anchors.iter().map(|a| a.0 * a.1).collect();
        assert!(areas.windows(2).all(|w| w[0] <= w[1]));
    }
}
