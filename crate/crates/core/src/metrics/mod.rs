//! Reference implementations of the four reconstruction metrics with
//! interchangeable (and exactly equivalent) nearest-neighbor backends.
//!
//! Conventions: the symmetric mean-of-squared-nearest-neighbor distance,
//! each side normalized by its own size; the assignment metric over
//! bijections with squared edges; the worst-case (unsquared) deviation; and
//! F1 at 1% of the ground-truth bounding-box diagonal. Point coordinates
//! are f32, all distance accumulation is f64.

mod assignment;
mod kdtree;

pub use assignment::{emd_approx, emd_approx_with, emd_exact, emd_exact_with, Assignment, AuctionParams, CostMode};
pub use kdtree::KdTree;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

/// Ordered storage for a semantically unordered set of 3-D points.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Vec<[f32; 3]>,
}

impl PointCloud {
    pub fn new(points: Vec<[f32; 3]>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud("point cloud needs at least one point".into()));
        }
        for p in &points {
            if !p.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite("point cloud coordinate".into()));
            }
        }
        Ok(PointCloud { points })
    }

    /// Builds from a flat `[x0, y0, z0, x1, ...]` buffer.
    pub fn from_flat(flat: &[f32]) -> Result<Self> {
        if flat.len() % 3 != 0 {
            return Err(Error::ShapeMismatch(format!(
                "flat point buffer length {} is not a multiple of 3",
                flat.len()
            )));
        }
        Self::new(flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f32; 3]] {
        &self.points
    }

    pub fn to_flat(&self) -> Vec<f32> {
        self.points.iter().flat_map(|p| p.iter().copied()).collect()
    }

    /// Diagonal of the axis-aligned bounding box.
    pub fn bbox_diagonal(&self) -> f64 {
        let mut min = [f64::INFINITY; 3];
        let mut max = [f64::NEG_INFINITY; 3];
        for p in &self.points {
            for a in 0..3 {
                min[a] = min[a].min(p[a] as f64);
                max[a] = max[a].max(p[a] as f64);
            }
        }
        let mut d2 = 0.0;
        for a in 0..3 {
            let d = max[a] - min[a];
            d2 += d * d;
        }
        d2.sqrt()
    }
}

/// Squared Euclidean distance, f64 accumulation in fixed (x, y, z) order.
/// Both backends use this single definition, so their distances agree
/// bit for bit.
#[inline]
pub(crate) fn dist2(a: [f32; 3], b: [f32; 3]) -> f64 {
    let dx = a[0] as f64 - b[0] as f64;
    let dy = a[1] as f64 - b[1] as f64;
    let dz = a[2] as f64 - b[2] as f64;
    dx * dx + dy * dy + dz * dz
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    BruteForce,
    SpatialIndex,
}

/// A nearest-neighbor index over one cloud. Both variants are exact.
pub enum NnIndex<'a> {
    Brute(&'a [[f32; 3]]),
    Spatial(KdTree),
}

impl<'a> NnIndex<'a> {
    pub fn build(cloud: &'a PointCloud, kind: BackendKind) -> Self {
        match kind {
            BackendKind::BruteForce => NnIndex::Brute(cloud.points()),
            BackendKind::SpatialIndex => NnIndex::Spatial(KdTree::build(cloud.points())),
        }
    }

    /// Index and squared distance of the nearest point; equidistant
    /// candidates resolve to the lowest index.
    pub fn nearest(&self, q: [f32; 3]) -> (usize, f64) {
        match self {
            NnIndex::Brute(points) => {
                let mut best_idx = 0usize;
                let mut best = dist2(q, points[0]);
                for (i, &p) in points.iter().enumerate().skip(1) {
                    let d2 = dist2(q, p);
                    if d2 < best {
                        best = d2;
                        best_idx = i;
                    }
                }
                (best_idx, best)
            }
            NnIndex::Spatial(tree) => tree.nearest(q),
        }
    }
}

/// Exact squared nearest-neighbor distance in `to` for every point of `from`.
pub fn nn_distances(from: &PointCloud, to: &PointCloud, kind: BackendKind) -> Result<Vec<f64>> {
    let index = NnIndex::build(to, kind);
    Ok(from.points().iter().map(|&p| index.nearest(p).1).collect())
}

/// Sum of squared NN distances of `from` into the index, f64 in index order.
pub(crate) fn one_sided_sum_sq(from: &[[f32; 3]], index: &NnIndex) -> f64 {
    let mut sum = 0.0f64;
    for &p in from {
        sum += index.nearest(p).1;
    }
    sum
}

fn max_sq_nn(from: &[[f32; 3]], index: &NnIndex) -> f64 {
    let mut max = 0.0f64;
    for &p in from {
        let d2 = index.nearest(p).1;
        if d2 > max {
            max = d2;
        }
    }
    max
}

/// Symmetric mean-of-squared-NN distance, each direction normalized by its
/// own cloud size.
pub fn chamfer(p: &PointCloud, q: &PointCloud, kind: BackendKind) -> Result<f64> {
    let idx_q = NnIndex::build(q, kind);
    let idx_p = NnIndex::build(p, kind);
    Ok(one_sided_sum_sq(p.points(), &idx_q) / p.len() as f64
        + one_sided_sum_sq(q.points(), &idx_p) / q.len() as f64)
}

/// Worst-case deviation: the larger of the two directed max-min Euclidean
/// (unsquared) distances.
pub fn hausdorff(p: &PointCloud, q: &PointCloud, kind: BackendKind) -> Result<f64> {
    let idx_q = NnIndex::build(q, kind);
    let idx_p = NnIndex::build(p, kind);
    let fwd = max_sq_nn(p.points(), &idx_q);
    let bwd = max_sq_nn(q.points(), &idx_p);
    Ok(fwd.max(bwd).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct F1Result {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    /// The distance threshold actually used (1% of the ground-truth
    /// bounding-box diagonal unless overridden).
    pub threshold: f64,
}

/// F1 at 1% of the ground-truth bounding-box diagonal: precision is the
/// fraction of predicted points within the threshold of the ground truth,
/// recall the converse. A degenerate (single-position) ground truth yields
/// a zero threshold, i.e. exact-match semantics.
pub fn f1_score(pred: &PointCloud, gt: &PointCloud, kind: BackendKind) -> Result<F1Result> {
    f1_score_with_threshold(pred, gt, kind, 0.01 * gt.bbox_diagonal())
}

pub fn f1_score_with_threshold(
    pred: &PointCloud,
    gt: &PointCloud,
    kind: BackendKind,
    threshold: f64,
) -> Result<F1Result> {
    let tau2 = threshold * threshold;
    let idx_gt = NnIndex::build(gt, kind);
    let idx_pred = NnIndex::build(pred, kind);
    let hits_pred = pred.points().iter().filter(|&&p| idx_gt.nearest(p).1 <= tau2).count();
    let hits_gt = gt.points().iter().filter(|&&p| idx_pred.nearest(p).1 <= tau2).count();
    let precision = hits_pred as f64 / pred.len() as f64;
    let recall = hits_gt as f64 / gt.len() as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(F1Result {
        f1,
        precision,
        recall,
        threshold,
    })
}

// ---------------------------------------------------------------------------
// Batch evaluation

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmdMode {
    Exact,
    Approx,
    Skip,
}

#[derive(Clone, Copy, Debug)]
pub struct EvalOptions {
    pub backend: BackendKind,
    pub emd: EmdMode,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            backend: BackendKind::SpatialIndex,
            emd: EmdMode::Skip,
        }
    }
}

/// All enabled metrics for one prediction/ground-truth pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub cd: f64,
    pub emd: Option<f64>,
    pub hd: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub threshold: f64,
}

pub fn evaluate_pair(pred: &PointCloud, gt: &PointCloud, opts: &EvalOptions) -> Result<MetricsReport> {
    let cd = chamfer(pred, gt, opts.backend)?;
    let hd = hausdorff(pred, gt, opts.backend)?;
    let f1 = f1_score(pred, gt, opts.backend)?;
    let emd = match opts.emd {
        EmdMode::Exact => Some(emd_exact(pred, gt)?.total_cost),
        EmdMode::Approx => Some(emd_approx(pred, gt)?.total_cost),
        EmdMode::Skip => None,
    };
    Ok(MetricsReport {
        cd,
        emd,
        hd,
        f1: f1.f1,
        precision: f1.precision,
        recall: f1.recall,
        threshold: f1.threshold,
    })
}

/// Evaluates prediction/ground-truth pairs, data-parallel when the
/// `parallel` feature is on. Reports come back in input order, so any
/// downstream reduction is deterministic.
pub fn evaluate_pairs(preds: &[PointCloud], gts: &[PointCloud], opts: &EvalOptions) -> Result<Vec<MetricsReport>> {
    if preds.len() != gts.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions vs {} ground-truth clouds",
            preds.len(),
            gts.len()
        )));
    }
    par::map_range(preds.len(), |i| evaluate_pair(&preds[i], &gts[i], opts))
        .into_iter()
        .collect()
}

/// Always-sequential twin of [`evaluate_pairs`]; the bench suite compares
/// the two.
pub fn evaluate_pairs_seq(preds: &[PointCloud], gts: &[PointCloud], opts: &EvalOptions) -> Result<Vec<MetricsReport>> {
    if preds.len() != gts.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions vs {} ground-truth clouds",
            preds.len(),
            gts.len()
        )));
    }
    (0..preds.len())
        .map(|i| evaluate_pair(&preds[i], &gts[i], opts))
        .collect()
}

/// Field-wise mean over reports, sequential in index order. The assignment
/// metric averages only when present in every report.
pub fn average_reports(reports: &[MetricsReport]) -> Result<MetricsReport> {
    if reports.is_empty() {
        return Err(Error::Degenerate("cannot average zero metric reports".into()));
    }
    let n = reports.len() as f64;
    let mut out = MetricsReport {
        cd: 0.0,
        emd: Some(0.0),
        hd: 0.0,
        f1: 0.0,
        precision: 0.0,
        recall: 0.0,
        threshold: 0.0,
    };
    let mut have_emd = true;
    for r in reports {
        out.cd += r.cd;
        out.hd += r.hd;
        out.f1 += r.f1;
        out.precision += r.precision;
        out.recall += r.recall;
        out.threshold += r.threshold;
        match (&mut out.emd, r.emd) {
            (Some(acc), Some(v)) => *acc += v,
            _ => have_emd = false,
        }
    }
    out.cd /= n;
    out.hd /= n;
    out.f1 /= n;
    out.precision /= n;
    out.recall /= n;
    out.threshold /= n;
    out.emd = if have_emd { out.emd.map(|v| v / n) } else { None };
    Ok(out)
}
