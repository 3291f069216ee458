//! Chamfer distance and distance-thresholded precision/recall/F-score.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricReport {
    pub chamfer_m: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub match_radius_m: f64,
    pub gt_count: usize,
    pub pred_count: usize,
}

/// Harmonic mean with `0/0 -> 0`.
pub fn f_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

fn dist(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    (a - b).norm()
}

/// Exact static kd-tree over 3D points.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vector3<f64>>,
    /// Permutation of point indices arranged as an implicit balanced tree.
    order: Vec<usize>,
}

impl KdTree {
    pub fn new(points: &[Vector3<f64>]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        build(points, &mut order, 0);
        Self {
            points: points.to_vec(),
            order,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Distance from `q` to the closest stored point (`inf` when empty).
    pub fn nearest_distance(&self, q: &Vector3<f64>) -> f64 {
        let mut best = f64::INFINITY;
        self.search(&self.order, 0, q, &mut best);
        best
    }

    fn search(&self, slice: &[usize], depth: usize, q: &Vector3<f64>, best: &mut f64) {
        if slice.is_empty() {
            return;
        }
        let mid = slice.len() / 2;
        let p = &self.points[slice[mid]];
        let d = dist(p, q);
        if d < *best {
            *best = d;
        }
        let axis = depth % 3;
        let delta = q[axis] - p[axis];
        let (near, far) = if delta < 0.0 {
            (&slice[..mid], &slice[mid + 1..])
        } else {
            (&slice[mid + 1..], &slice[..mid])
        };
        self.search(near, depth + 1, q, best);
        if delta.abs() <= *best {
            self.search(far, depth + 1, q, best);
        }
    }
}

fn build(points: &[Vector3<f64>], slice: &mut [usize], depth: usize) {
    if slice.len() <= 1 {
        return;
    }
    let axis = depth % 3;
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
    let (left, right) = slice.split_at_mut(mid);
    build(points, left, depth + 1);
    build(points, &mut right[1..], depth + 1);
}

/// O(N M) nearest-neighbour distances, used as the oracle for [`KdTree`].
pub fn nearest_distances_brute(queries: &[Vector3<f64>], targets: &[Vector3<f64>]) -> Vec<f64> {
    queries
        .iter()
        .map(|q| targets.iter().map(|t| dist(q, t)).fold(f64::INFINITY, f64::min))
        .collect()
}

pub fn nearest_distances(queries: &[Vector3<f64>], targets: &[Vector3<f64>]) -> Vec<f64> {
    let tree = KdTree::new(targets);
    queries.par_iter().map(|q| tree.nearest_distance(q)).collect()
}

fn require_nonempty(gt: &[Vector3<f64>], pred: &[Vector3<f64>]) -> Result<()> {
    if gt.is_empty() || pred.is_empty() {
        return Err(Error::UndefinedMetric(format!(
            "empty point set (|gt| = {}, |pred| = {})",
            gt.len(),
            pred.len()
        )));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Symmetric mean closest-point distance (non-squared).
pub fn chamfer(gt: &[Vector3<f64>], pred: &[Vector3<f64>]) -> Result<f64> {
    require_nonempty(gt, pred)?;
    Ok(mean(&nearest_distances(gt, pred)) + mean(&nearest_distances(pred, gt)))
}

pub fn precision_recall_f(
    gt: &[Vector3<f64>],
    pred: &[Vector3<f64>],
    match_radius_m: f64,
) -> Result<MetricReport> {
    if !(match_radius_m > 0.0) {
        return Err(Error::UndefinedMetric(format!(
            "match radius must be positive, got {match_radius_m}"
        )));
    }
    require_nonempty(gt, pred)?;
    let d_gt = nearest_distances(gt, pred);
    let d_pred = nearest_distances(pred, gt);
    let hit = |d: &[f64]| d.iter().filter(|&&x| x <= match_radius_m).count() as f64 / d.len() as f64;
    let precision = hit(&d_pred);
    let recall = hit(&d_gt);
    Ok(MetricReport {
        chamfer_m: mean(&d_gt) + mean(&d_pred),
        precision,
        recall,
        f_score: f_score(precision, recall),
        match_radius_m,
        gt_count: gt.len(),
        pred_count: pred.len(),
    })
}
