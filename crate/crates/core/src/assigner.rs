//! Assignment of the remaining tree points to clusters by k-nearest-neighbour
//! vote in projected space, and propagation back to the original cloud.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{check_len, propagate_to_original, VoxelIndexMap};
use crate::spatial::{Dim, NeighborIndex};
use crate::{Error, Point3, PointLabel, Result, Scalar};

pub const DEFAULT_K: usize = 10;

/// How a point obtained its final label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    Clustered,
    Assigned,
    /// Tree probability at or below the threshold.
    SemanticRejected,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InstanceMap {
    pub labels: Vec<PointLabel>,
    pub provenance: Vec<Provenance>,
}

impl InstanceMap {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Distinct instance ids, ascending.
    pub fn instance_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.labels.iter().filter_map(|l| l.tree_id()).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssignParams {
    pub k: usize,
    /// Use 3D projected coordinates instead of xy.
    pub use_3d: bool,
    pub tree_threshold: f64,
}

impl Default for AssignParams {
    fn default() -> Self {
        Self { k: DEFAULT_K, use_3d: false, tree_threshold: 0.5 }
    }
}

/// Labels every point of the (subsampled) cloud.
///
/// `cluster_of[i]` is the cluster id of point `i`, 0 when unclustered. Points
/// with `p_tree <= threshold` become `NonTree`. Every other unclustered point
/// takes the majority cluster id among its `k` nearest clustered points;
/// among tied majorities the one appearing first in distance order wins,
/// i.e. the nearest neighbour's label when it is part of the tie.
pub fn assign_remaining<T: Scalar>(
    projected: &[Point3<T>],
    p_tree: &[T],
    cluster_of: &[u32],
    params: &AssignParams,
) -> Result<InstanceMap> {
    check_len(projected.len(), p_tree.len())?;
    check_len(projected.len(), cluster_of.len())?;
    if params.k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let thr = T::lit(params.tree_threshold);
    let clustered: Vec<usize> = (0..projected.len()).filter(|&i| cluster_of[i] > 0).collect();
    let pending = (0..projected.len()).any(|i| cluster_of[i] == 0 && p_tree[i] > thr);
    let index = if clustered.is_empty() {
        if pending {
            return Err(Error::NoInstances);
        }
        None
    } else {
        let pts: Vec<_> = clustered.iter().map(|&i| projected[i]).collect();
        Some(NeighborIndex::build(&pts, if params.use_3d { Dim::Three } else { Dim::Two })?)
    };
    let (labels, provenance) = (0..projected.len())
        .into_par_iter()
        .map(|i| {
            if cluster_of[i] > 0 {
                return (PointLabel::Tree(cluster_of[i]), Provenance::Clustered);
            }
            if !(p_tree[i] > thr) {
                return (PointLabel::NonTree, Provenance::SemanticRejected);
            }
            let index = index.as_ref().expect("checked above");
            let nn = index.k_nearest(projected[i], params.k);
            let votes: Vec<u32> = nn.iter().map(|&j| cluster_of[clustered[j]]).collect();
            (PointLabel::Tree(majority(&votes)), Provenance::Assigned)
        })
        .unzip();
    Ok(InstanceMap { labels, provenance })
}

/// Most frequent value; ties resolved by earliest first occurrence.
pub(crate) fn majority(votes: &[u32]) -> u32 {
    let mut counts: HashMap<u32, (usize, usize)> = HashMap::new();
    for (pos, &v) in votes.iter().enumerate() {
        counts.entry(v).or_insert((0, pos)).0 += 1;
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
        .map(|(v, _)| v)
        .expect("at least one vote")
}

/// Carries a subsampled instance map onto the original cloud.
pub fn finalize(map: &InstanceMap, voxels: &VoxelIndexMap) -> Result<InstanceMap> {
    Ok(InstanceMap {
        labels: propagate_to_original(&map.labels, voxels)?,
        provenance: propagate_to_original(&map.provenance, voxels)?,
    })
}
