//! Evaluation: IoU matrix, optimal matching, detection and segmentation
//! scores, per-bin partition scores, offset loss and tree attributes.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{check_len, voxel_subsample};
use crate::hull::{hull_measures, HullKind};
use crate::features::{verticality_of_points, DEFAULT_VERTICALITY_RADIUS};
use crate::predictor::{compute_tree_bases, Alignment, TreeBase};
use crate::{Error, Point3, PointCloud, PointLabel, Result, Scalar};

/// Voxel size of the evaluation subsample (m).
pub const EVAL_VOXEL_SIZE: f64 = 0.1;
/// Minimum IoU of a valid match.
pub const MATCH_IOU: f64 = 0.5;
pub const N_BINS: usize = 10;

/// Ground truth and prediction carried onto one subsampled point set.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalPair<T> {
    pub points: Vec<Point3<T>>,
    pub gt: Vec<PointLabel>,
    pub pred: Vec<PointLabel>,
}

/// Subsamples the ground truth and keeps both label sets of every kept point.
/// Both clouds must hold the same points in the same order.
pub fn eval_subsample<T: Scalar>(gt: &PointCloud<T>, pred: &PointCloud<T>, voxel_size: f64) -> Result<EvalPair<T>> {
    let gt_labels = gt.labels().ok_or_else(|| Error::MissingLabels("ground-truth cloud".into()))?;
    let pred_labels = pred.labels().ok_or_else(|| Error::MissingLabels("prediction cloud".into()))?;
    let (a, b) = (Alignment::of(gt.points()), Alignment::of(pred.points()));
    if a != b {
        return Err(Error::Misalignment(format!(
            "ground truth has {} points (digest {:016x}), prediction {} (digest {:016x})",
            a.count, a.digest, b.count, b.digest
        )));
    }
    let (sub, map) = voxel_subsample(gt, T::lit(voxel_size))?;
    Ok(EvalPair {
        points: sub.points().to_vec(),
        gt: map.kept.iter().map(|&i| gt_labels[i]).collect(),
        pred: map.kept.iter().map(|&i| pred_labels[i]).collect(),
    })
}

/// Pairwise point counts between ground-truth and predicted instances.
/// Points that are non-annotated in the ground truth are left out of every
/// count except `pred_total`.
#[derive(Clone, Debug, PartialEq)]
pub struct IouMatrix {
    /// Ground-truth instance ids, ascending (rows).
    pub gt_ids: Vec<u32>,
    /// Predicted instance ids, ascending (columns).
    pub pred_ids: Vec<u32>,
    pub gt_sizes: Vec<usize>,
    pub pred_sizes: Vec<usize>,
    /// Per prediction: points on a ground-truth tree.
    pub pred_tree_points: Vec<usize>,
    /// Per prediction: all points, including non-annotated ones.
    pub pred_total: Vec<usize>,
    /// Row-major true-positive counts.
    intersection: Vec<usize>,
}

impl IouMatrix {
    pub fn n_gt(&self) -> usize {
        self.gt_ids.len()
    }

    pub fn n_pred(&self) -> usize {
        self.pred_ids.len()
    }

    pub fn tp(&self, i: usize, j: usize) -> usize {
        self.intersection[i * self.n_pred() + j]
    }

    pub fn iou(&self, i: usize, j: usize) -> f64 {
        let tp = self.tp(i, j);
        let union = self.gt_sizes[i] + self.pred_sizes[j] - tp;
        if union == 0 {
            0.0
        } else {
            tp as f64 / union as f64
        }
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_gt()).map(|i| (0..self.n_pred()).map(|j| self.iou(i, j)).collect()).collect()
    }
}

pub fn iou_matrix(gt: &[PointLabel], pred: &[PointLabel]) -> Result<IouMatrix> {
    check_len(gt.len(), pred.len())?;
    let ids = |labels: &[PointLabel]| {
        let mut v: Vec<u32> = labels.iter().filter_map(|l| l.tree_id()).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let gt_ids = ids(gt);
    let pred_ids = ids(pred);
    let gt_pos: HashMap<u32, usize> = gt_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let pred_pos: HashMap<u32, usize> = pred_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let (ng, np) = (gt_ids.len(), pred_ids.len());
    let mut gt_sizes = vec![0; ng];
    let mut pred_sizes = vec![0; np];
    let mut pred_tree_points = vec![0; np];
    let mut pred_total = vec![0; np];
    let mut intersection = vec![0; ng * np];
    for (g, p) in gt.iter().zip(pred) {
        let pj = p.tree_id().map(|id| pred_pos[&id]);
        if let Some(j) = pj {
            pred_total[j] += 1;
        }
        if !g.is_annotated() {
            continue;
        }
        let gi = g.tree_id().map(|id| gt_pos[&id]);
        if let Some(i) = gi {
            gt_sizes[i] += 1;
        }
        if let Some(j) = pj {
            pred_sizes[j] += 1;
            if let Some(i) = gi {
                pred_tree_points[j] += 1;
                intersection[i * np + j] += 1;
            }
        }
    }
    Ok(IouMatrix { gt_ids, pred_ids, gt_sizes, pred_sizes, pred_tree_points, pred_total, intersection })
}

/// Maximum-weight assignment of rows to columns (Hungarian method on the
/// zero-padded square matrix). Returns `(row, column)` pairs between real
/// rows and columns, ascending by row.
pub fn optimal_assignment(weights: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let rows = weights.len();
    let cols = weights.first().map_or(0, |r| r.len());
    let n = rows.max(cols);
    if n == 0 {
        return Vec::new();
    }
    let cost = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            -weights[i][j]
        } else {
            0.0
        }
    };
    // potentials and matching, 1-based with a virtual column 0
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut pairs: Vec<(usize, usize)> =
        (1..=n).filter(|&j| p[j] >= 1 && p[j] - 1 < rows && j - 1 < cols).map(|j| (p[j] - 1, j - 1)).collect();
    pairs.sort_unstable();
    pairs
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Match {
    /// Row in the IoU matrix.
    pub gt: usize,
    /// Column in the IoU matrix.
    pub pred: usize,
    pub iou: f64,
}

/// Optimal one-to-one matching by total IoU, keeping pairs with IoU >= 0.5.
pub fn hungarian_match(m: &IouMatrix) -> Vec<Match> {
    optimal_assignment(&m.to_rows())
        .into_iter()
        .map(|(gt, pred)| Match { gt, pred, iou: m.iou(gt, pred) })
        .filter(|mt| mt.iou >= MATCH_IOU)
        .collect()
}

/// Harmonic mean of `1 - e_om` and `1 - e_com`; 0 when both are 1.
pub fn f1_score(e_om: f64, e_com: f64) -> f64 {
    let (a, b) = (1.0 - e_om, 1.0 - e_com);
    if a + b == 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DetectionReport {
    pub matches: Vec<Match>,
    pub n_gt: usize,
    pub n_pred: usize,
    pub matched_gt: usize,
    pub unmatched_gt: usize,
    /// Unmatched predictions left after dropping those with fewer than half
    /// of their points on ground-truth trees.
    pub unmatched_pred: usize,
    pub completeness: f64,
    pub omission: f64,
    pub commission: f64,
    pub f1: f64,
}

pub fn detection_metrics(m: &IouMatrix, matches: &[Match]) -> Result<DetectionReport> {
    if m.n_gt() == 0 {
        return Err(Error::NoGroundTruth);
    }
    let mut matched = vec![false; m.n_pred()];
    for mt in matches {
        matched[mt.pred] = true;
    }
    let unmatched_pred = (0..m.n_pred()).filter(|&j| !matched[j] && 2 * m.pred_tree_points[j] >= m.pred_total[j]).count();
    let matched_gt = matches.len();
    let n_gt = m.n_gt();
    let completeness = matched_gt as f64 / n_gt as f64;
    let omission = (n_gt - matched_gt) as f64 / n_gt as f64;
    let denom = matched_gt + unmatched_pred;
    let commission = if denom == 0 { 0.0 } else { unmatched_pred as f64 / denom as f64 };
    Ok(DetectionReport {
        matches: matches.to_vec(),
        n_gt,
        n_pred: m.n_pred(),
        matched_gt,
        unmatched_gt: n_gt - matched_gt,
        unmatched_pred,
        completeness,
        omission,
        commission,
        f1: f1_score(omission, commission),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SegmentationReport {
    /// Per ground-truth row: column of the highest-IoU prediction, if any.
    pub pairing: Vec<Option<usize>>,
    pub iou: Vec<f64>,
    pub precision_per_tree: Vec<f64>,
    pub recall_per_tree: Vec<f64>,
    pub precision: f64,
    pub recall: f64,
    pub coverage: f64,
}

/// Pairs each ground truth with its highest-IoU prediction (lowest column on
/// ties) and averages IoU, precision and recall over ground-truth trees.
pub fn segmentation_metrics(m: &IouMatrix) -> Result<SegmentationReport> {
    if m.n_gt() == 0 {
        return Err(Error::NoGroundTruth);
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let mut pairing = Vec::with_capacity(m.n_gt());
    let (mut iou, mut prec, mut rec) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..m.n_gt() {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..m.n_pred() {
            let v = m.iou(i, j);
            if best.map_or(true, |(_, b)| v > b) {
                best = Some((j, v));
            }
        }
        pairing.push(best.map(|b| b.0));
        match best {
            Some((j, v)) => {
                iou.push(v);
                prec.push(ratio(m.tp(i, j), m.pred_sizes[j]));
                rec.push(ratio(m.tp(i, j), m.gt_sizes[i]));
            }
            None => {
                iou.push(0.0);
                prec.push(0.0);
                rec.push(0.0);
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(SegmentationReport {
        coverage: mean(&iou),
        precision: mean(&prec),
        recall: mean(&rec),
        pairing,
        iou,
        precision_per_tree: prec,
        recall_per_tree: rec,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    /// Horizontal distance to the ground-truth trunk.
    Horizontal,
    /// Height above the ground-truth tree's lowest point.
    Vertical,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Horizontal => "horizontal",
            Axis::Vertical => "vertical",
        }
    }
}

/// Per-bin scores averaged over trees; NaN where no tree defines a value.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PartitionReport {
    pub axis: Axis,
    pub precision: [f64; N_BINS],
    pub recall: [f64; N_BINS],
    pub coverage: [f64; N_BINS],
    /// Trees contributing (non-degenerate extent).
    pub trees: usize,
}

/// Bin of a coordinate `d` within `[0, extent]`; the last bin is closed.
fn bin_of(d: f64, extent: f64) -> Option<usize> {
    if !(d >= 0.0) || d > extent {
        return None;
    }
    Some(((d / extent * N_BINS as f64).floor() as usize).min(N_BINS - 1))
}

/// Splits every ground-truth tree and its paired prediction into ten bins
/// along `axis` and averages per-bin precision, recall and IoU over trees.
/// Prediction points beyond the ground-truth extent are ignored. Trees with
/// zero extent, or without a base for the horizontal axis, are skipped.
pub fn partition_metrics<T: Scalar>(
    points: &[Point3<T>],
    gt: &[PointLabel],
    pred: &[PointLabel],
    m: &IouMatrix,
    seg: &SegmentationReport,
    bases: &BTreeMap<u32, TreeBase>,
    axis: Axis,
) -> Result<PartitionReport> {
    check_len(points.len(), gt.len())?;
    check_len(points.len(), pred.len())?;
    let mut gt_members: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    let mut pred_members: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for i in 0..points.len() {
        if !gt[i].is_annotated() {
            continue;
        }
        if let Some(id) = gt[i].tree_id() {
            gt_members.entry(id).or_default().push(i);
        }
        if let Some(id) = pred[i].tree_id() {
            pred_members.entry(id).or_default().push(i);
        }
    }
    let empty = Vec::new();
    let per_tree: Vec<Option<[[f64; N_BINS]; 3]>> = (0..m.n_gt())
        .into_par_iter()
        .map(|row| {
            let gid = m.gt_ids[row];
            let g = &gt_members[&gid];
            let coord: Box<dyn Fn(usize) -> f64 + Sync> = match axis {
                Axis::Horizontal => {
                    let Some(b) = bases.get(&gid).copied() else {
                        warn!("tree {gid}: no base, skipped in horizontal partition");
                        return None;
                    };
                    Box::new(move |i: usize| {
                        let p = points[i];
                        ((p.x.as_f64() - b.x).powi(2) + (p.y.as_f64() - b.y).powi(2)).sqrt()
                    })
                }
                Axis::Vertical => {
                    let z0 = g.iter().map(|&i| points[i].z.as_f64()).fold(f64::INFINITY, f64::min);
                    Box::new(move |i: usize| points[i].z.as_f64() - z0)
                }
            };
            let extent = g.iter().map(|&i| coord(i)).fold(0.0, f64::max);
            if !(extent > 0.0) {
                warn!("tree {gid}: zero {} extent, skipped in partition metrics", axis.name());
                return None;
            }
            let p = seg.pairing[row].map_or(&empty, |j| pred_members.get(&m.pred_ids[j]).unwrap_or(&empty));
            let pid = seg.pairing[row].map(|j| m.pred_ids[j]);
            let (mut tp, mut fp, mut fnn) = ([0usize; N_BINS], [0usize; N_BINS], [0usize; N_BINS]);
            for &i in g {
                if let Some(b) = bin_of(coord(i), extent) {
                    if pred[i].tree_id().is_some() && pred[i].tree_id() == pid {
                        tp[b] += 1;
                    } else {
                        fnn[b] += 1;
                    }
                }
            }
            for &i in p {
                if gt[i].tree_id() != Some(gid) {
                    if let Some(b) = bin_of(coord(i), extent) {
                        fp[b] += 1;
                    }
                }
            }
            let ratio = |a: usize, b: usize| if b == 0 { f64::NAN } else { a as f64 / b as f64 };
            let mut out = [[f64::NAN; N_BINS]; 3];
            for b in 0..N_BINS {
                out[0][b] = ratio(tp[b], tp[b] + fp[b]);
                out[1][b] = ratio(tp[b], tp[b] + fnn[b]);
                out[2][b] = ratio(tp[b], tp[b] + fp[b] + fnn[b]);
            }
            Some(out)
        })
        .collect();
    let trees = per_tree.iter().flatten().count();
    let mut avg = [[f64::NAN; N_BINS]; 3];
    for (k, row) in avg.iter_mut().enumerate() {
        for (b, cell) in row.iter_mut().enumerate() {
            let vals: Vec<f64> = per_tree.iter().flatten().map(|t| t[k][b]).filter(|v| !v.is_nan()).collect();
            if !vals.is_empty() {
                *cell = vals.iter().sum::<f64>() / vals.len() as f64;
            }
        }
    }
    Ok(PartitionReport { axis, precision: avg[0], recall: avg[1], coverage: avg[2], trees })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossMode {
    /// Full 3D Euclidean error.
    ThreeD,
    /// z-difference ignored.
    Xy,
}

/// Mean Euclidean norm of the offset error over masked points.
pub fn offset_loss<T: Scalar>(pred: &[Point3<T>], gt: &[Point3<T>], tree_mask: &[bool], mode: LossMode) -> Result<f64> {
    check_len(pred.len(), gt.len())?;
    check_len(pred.len(), tree_mask.len())?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for ((p, g), _) in pred.iter().zip(gt).zip(tree_mask).filter(|(_, m)| **m) {
        let d = (*p - *g).cast::<f64>();
        sum += match mode {
            LossMode::ThreeD => d.norm(),
            LossMode::Xy => (d.x * d.x + d.y * d.y).sqrt(),
        };
        n += 1;
    }
    if n == 0 {
        return Err(Error::NoTreePoints);
    }
    Ok(sum / n as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TreeAttributes {
    pub height: f64,
    pub crown_diameter: f64,
    pub canopy_cover: f64,
}

/// Height as the 5th-highest minus the 5th-lowest z (max - min below 10
/// points); crown diameter and canopy cover from the hull of the xy
/// projection.
pub fn tree_attributes<T: Scalar>(points: &[Point3<T>], hull: HullKind) -> Result<TreeAttributes> {
    if points.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut z: Vec<f64> = points.iter().map(|p| p.z.as_f64()).collect();
    z.sort_by(f64::total_cmp);
    let n = z.len();
    let height = if n >= 10 { z[n - 5] - z[4] } else { z[n - 1] - z[0] };
    let xy: Vec<[f64; 2]> = points.iter().map(|p| [p.x.as_f64(), p.y.as_f64()]).collect();
    let (canopy_cover, crown_diameter) = hull_measures(&xy, hull);
    Ok(TreeAttributes { height, crown_diameter, canopy_cover })
}

/// Attributes of every labeled tree, keyed by tree id.
pub fn all_tree_attributes<T: Scalar>(cloud: &PointCloud<T>, hull: HullKind) -> Result<BTreeMap<u32, TreeAttributes>> {
    if cloud.labels().is_none() {
        return Err(Error::MissingLabels("tree attributes".into()));
    }
    let members: Vec<(u32, Vec<usize>)> = cloud.tree_members().into_iter().collect();
    members
        .into_par_iter()
        .map(|(id, idx)| {
            let pts: Vec<_> = idx.iter().map(|&i| cloud.points()[i]).collect();
            Ok((id, tree_attributes(&pts, hull)?))
        })
        .collect()
}

/// Detection, segmentation and optional partition results of one evaluation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub detection: DetectionReport,
    pub segmentation: SegmentationReport,
    pub partitions: Vec<PartitionReport>,
    /// Points in the evaluated (subsampled) set.
    pub points: usize,
}

/// Full evaluation of aligned label sets. Partition metrics are computed for
/// the horizontal axis only when `bases` is given.
pub fn evaluate_labels<T: Scalar>(
    points: &[Point3<T>],
    gt: &[PointLabel],
    pred: &[PointLabel],
    bases: Option<&BTreeMap<u32, TreeBase>>,
) -> Result<EvalReport> {
    let m = iou_matrix(gt, pred)?;
    let matches = hungarian_match(&m);
    let detection = detection_metrics(&m, &matches)?;
    let segmentation = segmentation_metrics(&m)?;
    let none = BTreeMap::new();
    let mut partitions = Vec::new();
    if let Some(b) = bases {
        partitions.push(partition_metrics(points, gt, pred, &m, &segmentation, b, Axis::Horizontal)?);
    }
    partitions.push(partition_metrics(points, gt, pred, &m, &segmentation, &none, Axis::Vertical)?);
    Ok(EvalReport { detection, segmentation, partitions, points: points.len() })
}

/// Evaluates a predicted labeling of the ground-truth points on the 0.1 m
/// evaluation subsample, with horizontal partitions around bases recomputed
/// from the subsampled ground truth.
pub fn evaluate_clouds<T: Scalar>(gt: &PointCloud<T>, pred: &PointCloud<T>) -> Result<EvalReport> {
    let pair = eval_subsample(gt, pred, EVAL_VOXEL_SIZE)?;
    let truth = PointCloud::with_labels(pair.points.clone(), pair.gt.clone())?;
    let vert = verticality_of_points(&pair.points, T::lit(DEFAULT_VERTICALITY_RADIUS))?;
    let bases = compute_tree_bases(&truth, &vert)?;
    evaluate_labels(&pair.points, &pair.gt, &pair.pred, Some(&bases))
}

const CSV_HEADER: &str =
    "points,n_gt,n_pred,matched_gt,unmatched_gt,unmatched_pred,completeness,omission,commission,f1,precision,recall,coverage";

impl EvalReport {
    /// Header plus one row.
    pub fn to_csv(&self) -> String {
        let d = &self.detection;
        let s = &self.segmentation;
        format!(
            "{CSV_HEADER}\n{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            self.points,
            d.n_gt,
            d.n_pred,
            d.matched_gt,
            d.unmatched_gt,
            d.unmatched_pred,
            d.completeness,
            d.omission,
            d.commission,
            d.f1,
            s.precision,
            s.recall,
            s.coverage
        )
    }

    /// Human-readable summary with percentages.
    pub fn to_table(&self) -> String {
        let d = &self.detection;
        let s = &self.segmentation;
        let mut t = String::new();
        let _ = writeln!(t, "{:<22}{:>10}", "metric", "value");
        let _ = writeln!(t, "{}", "-".repeat(32));
        for (k, v) in [("ground-truth trees", d.n_gt), ("predicted trees", d.n_pred), ("matched", d.matched_gt)] {
            let _ = writeln!(t, "{k:<22}{v:>10}");
        }
        for (k, v) in [
            ("C (%)", d.completeness),
            ("E_om (%)", d.omission),
            ("E_com (%)", d.commission),
            ("F1 (%)", d.f1),
            ("Prec (%)", s.precision),
            ("Rec (%)", s.recall),
            ("Cov (%)", s.coverage),
        ] {
            let _ = writeln!(t, "{k:<22}{:>10.1}", 100.0 * v);
        }
        t
    }

    pub fn partition(&self, axis: Axis) -> Option<&PartitionReport> {
        self.partitions.iter().find(|p| p.axis == axis)
    }
}

impl PartitionReport {
    /// Ten rows `bin,lower,upper,precision,recall,coverage`; bounds are
    /// fractions of the tree extent.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin,lower,upper,precision,recall,coverage\n");
        for b in 0..N_BINS {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                b + 1,
                b as f64 / N_BINS as f64,
                (b + 1) as f64 / N_BINS as f64,
                self.precision[b],
                self.recall[b],
                self.coverage[b]
            );
        }
        s
    }
}
