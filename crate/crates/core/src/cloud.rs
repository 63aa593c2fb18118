//! Point-cloud data model, voxel subsampling and statistical outlier removal.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;

use crate::spatial::{Dim, NeighborIndex};
use crate::{Error, Point3, Result, Scalar};

/// Per-point annotation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PointLabel {
    #[default]
    NonTree,
    /// Tree instance, id >= 1. Ids need not be contiguous.
    Tree(u32),
    /// Belongs to some tree but carries no instance label; excluded from
    /// targets and metric counts.
    NonAnnotated,
}

impl PointLabel {
    /// `Tree(id)` for `id >= 1`, `NonTree` for 0.
    pub fn from_tree_id(id: u32) -> Self {
        if id == 0 {
            PointLabel::NonTree
        } else {
            PointLabel::Tree(id)
        }
    }

    pub fn tree_id(self) -> Option<u32> {
        match self {
            PointLabel::Tree(id) => Some(id),
            _ => None,
        }
    }

    pub fn is_tree(self) -> bool {
        matches!(self, PointLabel::Tree(_))
    }

    pub fn is_annotated(self) -> bool {
        !matches!(self, PointLabel::NonAnnotated)
    }
}

/// An ordered point set. Point indices are identities: every label and
/// attribute channel is aligned to `points`.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud<T> {
    points: Vec<Point3<T>>,
    labels: Option<Vec<PointLabel>>,
    attributes: BTreeMap<String, Vec<T>>,
}

impl<T: Scalar> PointCloud<T> {
    /// Fails on the first non-finite coordinate.
    pub fn new(points: Vec<Point3<T>>) -> Result<Self> {
        if let Some(index) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { points, labels: None, attributes: BTreeMap::new() })
    }

    pub fn with_labels(points: Vec<Point3<T>>, labels: Vec<PointLabel>) -> Result<Self> {
        let mut cloud = Self::new(points)?;
        cloud.set_labels(labels)?;
        Ok(cloud)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3<T>] {
        &self.points
    }

    pub fn labels(&self) -> Option<&[PointLabel]> {
        self.labels.as_deref()
    }

    pub fn set_labels(&mut self, labels: Vec<PointLabel>) -> Result<()> {
        check_len(self.len(), labels.len())?;
        if labels.iter().any(|l| matches!(l, PointLabel::Tree(0))) {
            return Err(Error::InvalidParameter("tree id 0 is reserved for non-tree points".into()));
        }
        self.labels = Some(labels);
        Ok(())
    }

    pub fn clear_labels(&mut self) {
        self.labels = None;
    }

    pub fn attribute(&self, name: &str) -> Option<&[T]> {
        self.attributes.get(name).map(Vec::as_slice)
    }

    pub fn attributes(&self) -> &BTreeMap<String, Vec<T>> {
        &self.attributes
    }

    pub fn set_attribute(&mut self, name: impl Into<String>, values: Vec<T>) -> Result<()> {
        check_len(self.len(), values.len())?;
        self.attributes.insert(name.into(), values);
        Ok(())
    }

    /// New cloud with the given points in the given order, carrying labels and attributes.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            labels: self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect()),
            attributes: self
                .attributes
                .iter()
                .map(|(k, v)| (k.clone(), indices.iter().map(|&i| v[i]).collect()))
                .collect(),
        }
    }

    /// Indices of points grouped by tree id, ascending ids.
    pub fn tree_members(&self) -> BTreeMap<u32, Vec<usize>> {
        let mut out: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        if let Some(labels) = &self.labels {
            for (i, l) in labels.iter().enumerate() {
                if let PointLabel::Tree(id) = l {
                    out.entry(*id).or_default().push(i);
                }
            }
        }
        out
    }
}

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::LengthMismatch { expected, found });
    }
    Ok(())
}

/// Correspondence between an original cloud and its voxel-subsampled version.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelIndexMap {
    pub voxel_size: f64,
    /// original index -> subsampled index
    pub representative_of: Vec<usize>,
    /// subsampled index -> original indices, ascending
    pub members_of: Vec<Vec<usize>>,
    /// subsampled index -> original index of the kept point
    pub kept: Vec<usize>,
}

impl VoxelIndexMap {
    pub fn original_len(&self) -> usize {
        self.representative_of.len()
    }

    pub fn subsampled_len(&self) -> usize {
        self.members_of.len()
    }
}

#[inline]
fn voxel_key<T: Scalar>(p: Point3<T>, size: T) -> (i64, i64, i64) {
    let k = |v: T| (v / size).floor().to_i64().unwrap_or(i64::MAX);
    (k(p.x), k(p.y), k(p.z))
}

/// Keeps one point per occupied voxel on the lattice `floor(p / voxel_size)`.
///
/// The kept point is the one nearest the voxel center (lowest index on ties).
/// Output points are ordered by the original index of the kept point.
pub fn voxel_subsample<T: Scalar>(cloud: &PointCloud<T>, voxel_size: T) -> Result<(PointCloud<T>, VoxelIndexMap)> {
    if cloud.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(voxel_size > T::zero()) || !voxel_size.is_finite() {
        return Err(Error::InvalidParameter(format!("voxel size must be positive, got {voxel_size}")));
    }
    let half = T::lit(0.5);
    // key -> (best index, best squared distance to center)
    let mut best: HashMap<(i64, i64, i64), (usize, T)> = HashMap::with_capacity(cloud.len() / 2);
    let keys: Vec<_> = cloud.points().par_iter().map(|p| voxel_key(*p, voxel_size)).collect();
    for (i, (p, key)) in cloud.points().iter().zip(&keys).enumerate() {
        let center = Point3::new(
            (T::lit(key.0 as f64) + half) * voxel_size,
            (T::lit(key.1 as f64) + half) * voxel_size,
            (T::lit(key.2 as f64) + half) * voxel_size,
        );
        let d = p.distance_squared(center);
        best.entry(*key)
            .and_modify(|e| {
                if d < e.1 {
                    *e = (i, d);
                }
            })
            .or_insert((i, d));
    }
    let mut kept: Vec<usize> = best.values().map(|e| e.0).collect();
    kept.sort_unstable();
    let sub_of_key: HashMap<(i64, i64, i64), usize> = kept.iter().enumerate().map(|(s, &i)| (keys[i], s)).collect();
    let representative_of: Vec<usize> = keys.iter().map(|k| sub_of_key[k]).collect();
    let mut members_of = vec![Vec::new(); kept.len()];
    for (i, &s) in representative_of.iter().enumerate() {
        members_of[s].push(i);
    }
    let sub = cloud.select(&kept);
    Ok((sub, VoxelIndexMap { voxel_size: voxel_size.as_f64(), representative_of, members_of, kept }))
}

/// Gives every original point the value of its voxel representative.
pub fn propagate_to_original<L: Clone>(sub_values: &[L], map: &VoxelIndexMap) -> Result<Vec<L>> {
    check_len(map.subsampled_len(), sub_values.len())?;
    Ok(map.representative_of.iter().map(|&s| sub_values[s].clone()).collect())
}

/// Mean distance from each point to its `k` nearest neighbours (self excluded).
pub fn mean_knn_distances<T: Scalar>(points: &[Point3<T>], k: usize) -> Result<Vec<T>> {
    let index = NeighborIndex::build(points, Dim::Three)?;
    Ok(points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let nn = index.k_nearest_with_distance(*p, k + 1);
            let mut sum = T::zero();
            let mut n = 0usize;
            for (j, d2) in nn {
                if j != i && n < k {
                    sum += d2.sqrt();
                    n += 1;
                }
            }
            sum / T::lit(n.max(1) as f64)
        })
        .collect())
}

/// Removes points whose mean k-neighbour distance exceeds
/// `mean + std_ratio * std` of that statistic over the cloud.
pub fn statistical_outlier_removal<T: Scalar>(cloud: &PointCloud<T>, k: usize, std_ratio: T) -> Result<PointCloud<T>> {
    Ok(cloud.select(&outlier_inliers(cloud.points(), k, std_ratio)?))
}

/// Indices kept by [`statistical_outlier_removal`], ascending.
pub fn outlier_inliers<T: Scalar>(points: &[Point3<T>], k: usize, std_ratio: T) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if points.len() <= k {
        return Err(Error::InvalidParameter(format!("cloud has {} points, need more than k = {k}", points.len())));
    }
    if std_ratio.is_nan() || std_ratio < T::zero() {
        return Err(Error::InvalidParameter(format!("std_ratio must be non-negative, got {std_ratio}")));
    }
    let stats = mean_knn_distances(points, k)?;
    let n = T::lit(stats.len() as f64);
    let mean = stats.iter().copied().sum::<T>() / n;
    let var = stats.iter().map(|&s| (s - mean) * (s - mean)).sum::<T>() / n;
    // absorbs rounding noise when the statistic is constant
    let slack = mean.abs() * T::lit(1e-9);
    let threshold = mean + std_ratio * var.sqrt() + slack;
    Ok((0..points.len()).filter(|&i| stats[i] <= threshold).collect())
}
