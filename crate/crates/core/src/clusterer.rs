//! Trunk-point selection and single-linkage clustering of projected coordinates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::predictor::PredictionField;
use crate::spatial::{Dim, NeighborIndex};
use crate::{Error, Point3, Result, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterParams {
    /// Minimum verticality of a clustered point.
    pub min_verticality: f64,
    /// Maximum |z offset| of a clustered point (m).
    pub max_offset_z: f64,
    /// Single-linkage grouping radius on projected xy (m).
    pub group_radius: f64,
    /// Minimum component size for a valid cluster.
    pub min_points: usize,
    /// A point counts as tree when its probability is strictly above this.
    pub tree_threshold: f64,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self { min_verticality: 0.6, max_offset_z: 2.0, group_radius: 0.15, min_points: 100, tree_threshold: 0.5 }
    }
}

impl ClusterParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.min_verticality > 0.0
            && self.min_verticality <= 1.0
            && self.max_offset_z > 0.0
            && self.group_radius > 0.0
            && self.min_points >= 1
            && (0.0..1.0).contains(&self.tree_threshold);
        if !ok {
            return Err(Error::InvalidParameter(format!("invalid cluster parameters {self:?}")));
        }
        Ok(())
    }
}

/// Indices with `p_tree > threshold`, `verticality >= min_verticality` and
/// `|o_z| <= max_offset_z`.
pub fn select_cluster_points<T: Scalar>(
    field: &PredictionField<T>,
    verticality: &[T],
    params: &ClusterParams,
) -> Result<Vec<usize>> {
    crate::cloud::check_len(field.len(), verticality.len())?;
    let thr = T::lit(params.tree_threshold);
    let vmin = T::lit(params.min_verticality);
    let zmax = T::lit(params.max_offset_z);
    Ok((0..field.len())
        .filter(|&i| field.p_tree()[i] > thr && verticality[i] >= vmin && field.offset()[i].z.abs() <= zmax)
        .collect())
}

/// Disjoint-set forest with path compression and union by size.
#[derive(Clone, Debug)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), size: vec![1; n] }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[x] != root {
            let next = self.parent[x];
            self.parent[x] = root;
            x = next;
        }
        root
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
        true
    }
}

/// Connected components of the graph linking points closer than `radius`.
/// Components are returned with ascending members, ordered by smallest member.
pub fn radius_components<T: Scalar>(points: &[Point3<T>], radius: T, dim: Dim) -> Result<Vec<Vec<usize>>> {
    if points.is_empty() {
        return Ok(Vec::new());
    }
    let index = NeighborIndex::build(points, dim)?;
    let edges: Vec<Vec<usize>> = points
        .par_iter()
        .enumerate()
        .map_init(Vec::new, |buf, (i, p)| {
            index.radius_neighbors_into(*p, radius, buf);
            buf.iter().copied().filter(|&j| j > i).collect()
        })
        .collect();
    let mut uf = UnionFind::new(points.len());
    for (i, list) in edges.iter().enumerate() {
        for &j in list {
            uf.union(i, j);
        }
    }
    let mut slot = vec![usize::MAX; points.len()];
    let mut comps: Vec<Vec<usize>> = Vec::new();
    for i in 0..points.len() {
        let r = uf.find(i);
        if slot[r] == usize::MAX {
            slot[r] = comps.len();
            comps.push(Vec::new());
        }
        comps[slot[r]].push(i);
    }
    Ok(comps)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cluster {
    /// Contiguous from 1.
    pub id: u32,
    /// Positions in the clustered point list, ascending.
    pub members: Vec<usize>,
    pub centroid_xy: (f64, f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterResult {
    /// Per input point: cluster id, 0 when unclustered.
    pub cluster_id: Vec<u32>,
    pub clusters: Vec<Cluster>,
    /// Number of components before the minimum-size filter.
    pub raw_components: usize,
}

/// Single-linkage clusters on the xy of `projected`; components smaller than
/// `min_points` are discarded and their points left unclustered.
pub fn connected_components<T: Scalar>(projected: &[Point3<T>], params: &ClusterParams) -> Result<ClusterResult> {
    let comps = radius_components(projected, T::lit(params.group_radius), Dim::Two)?;
    let raw_components = comps.len();
    let mut cluster_id = vec![0u32; projected.len()];
    let mut clusters = Vec::new();
    for members in comps.into_iter().filter(|m| m.len() >= params.min_points) {
        let id = clusters.len() as u32 + 1;
        let (mut sx, mut sy) = (0.0, 0.0);
        for &m in &members {
            cluster_id[m] = id;
            sx += projected[m].x.as_f64();
            sy += projected[m].y.as_f64();
        }
        let n = members.len() as f64;
        clusters.push(Cluster { id, members, centroid_xy: (sx / n, sy / n) });
    }
    Ok(ClusterResult { cluster_id, clusters, raw_components })
}
