//! Exact fixed-radius and k-nearest-neighbor queries over 2D or 3D points.
//!
//! The index is a static kd-tree. Every node stores its bounding box and the
//! smallest original index it contains, so k-nearest queries can prune
//! subtrees on the lexicographic key `(distance, index)` and stay exact under
//! the lowest-index tie-break even when many points coincide (which is the
//! normal case for offset-projected coordinates).

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::{Error, Point3, Result, Scalar};

const LEAF_SIZE: usize = 12;

/// Number of coordinates taken into account by distance computations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Dim {
    /// x and y only.
    Two,
    Three,
}

impl Dim {
    #[inline]
    fn axes(self) -> usize {
        match self {
            Dim::Two => 2,
            Dim::Three => 3,
        }
    }
}

#[derive(Debug, Clone)]
struct Node<T> {
    lo: [T; 3],
    hi: [T; 3],
    start: usize,
    end: usize,
    min_id: usize,
    children: Option<(usize, usize)>,
}

/// Read-only neighbor index. Query results are identical to a brute-force scan.
#[derive(Debug, Clone)]
pub struct NeighborIndex<T> {
    dim: Dim,
    coords: Vec<[T; 3]>,
    ids: Vec<usize>,
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> NeighborIndex<T> {
    /// Builds an index over `points`; result indices refer to positions in this slice.
    pub fn build(points: &[Point3<T>], dim: Dim) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut entries = Vec::with_capacity(points.len());
        for (i, p) in points.iter().enumerate() {
            let c = match dim {
                Dim::Two => [p.x, p.y, T::zero()],
                Dim::Three => p.to_array(),
            };
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { index: i });
            }
            entries.push((c, i));
        }
        let mut nodes = Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1);
        build_node(&mut entries, 0, dim.axes(), &mut nodes);
        let (coords, ids) = entries.into_iter().unzip();
        Ok(Self { dim, coords, ids, nodes })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    #[inline]
    fn dist2(&self, a: &[T; 3], q: &[T; 3]) -> T {
        let mut s = T::zero();
        for k in 0..self.dim.axes() {
            let d = a[k] - q[k];
            s += d * d;
        }
        s
    }

    #[inline]
    fn box_dist2(&self, node: &Node<T>, q: &[T; 3]) -> T {
        let mut s = T::zero();
        for k in 0..self.dim.axes() {
            let d = if q[k] < node.lo[k] {
                node.lo[k] - q[k]
            } else if q[k] > node.hi[k] {
                q[k] - node.hi[k]
            } else {
                T::zero()
            };
            s += d * d;
        }
        s
    }

    /// Indices of all points at distance strictly less than `r`, ascending.
    pub fn radius_neighbors(&self, query: Point3<T>, r: T) -> Vec<usize> {
        let mut out = Vec::new();
        self.radius_neighbors_into(query, r, &mut out);
        out
    }

    /// Like [`radius_neighbors`](Self::radius_neighbors) but reuses `out`.
    pub fn radius_neighbors_into(&self, query: Point3<T>, r: T, out: &mut Vec<usize>) {
        out.clear();
        let q = query.to_array();
        let r2 = r * r;
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if self.box_dist2(node, &q) >= r2 {
                continue;
            }
            match node.children {
                Some((l, rr)) => {
                    stack.push(rr);
                    stack.push(l);
                }
                None => {
                    for j in node.start..node.end {
                        if self.dist2(&self.coords[j], &q) < r2 {
                            out.push(self.ids[j]);
                        }
                    }
                }
            }
        }
        out.sort_unstable();
    }

    /// The `k` nearest points ordered by `(distance, index)`. Returns all points
    /// when fewer than `k` exist.
    pub fn k_nearest(&self, query: Point3<T>, k: usize) -> Vec<usize> {
        self.k_nearest_with_distance(query, k).into_iter().map(|(i, _)| i).collect()
    }

    /// As [`k_nearest`](Self::k_nearest), paired with squared distances.
    pub fn k_nearest_with_distance(&self, query: Point3<T>, k: usize) -> Vec<(usize, T)> {
        if k == 0 {
            return Vec::new();
        }
        let q = query.to_array();
        let mut heap: BinaryHeap<Candidate<T>> = BinaryHeap::with_capacity(k + 1);
        self.knn_visit(0, &q, k, &mut heap);
        let mut found: Vec<_> = heap.into_iter().map(|c| (c.id, c.d2)).collect();
        found.sort_by(|a, b| key_cmp(a.1, a.0, b.1, b.0));
        found
    }

    fn knn_visit(&self, ni: usize, q: &[T; 3], k: usize, heap: &mut BinaryHeap<Candidate<T>>) {
        let node = &self.nodes[ni];
        match node.children {
            None => {
                for j in node.start..node.end {
                    let cand = Candidate { d2: self.dist2(&self.coords[j], q), id: self.ids[j] };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand < *heap.peek().expect("heap is full") {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            Some((l, r)) => {
                let dl = self.box_dist2(&self.nodes[l], q);
                let dr = self.box_dist2(&self.nodes[r], q);
                let mut order = [(dl, l), (dr, r)];
                if key_cmp(dr, self.nodes[r].min_id, dl, self.nodes[l].min_id) == Ordering::Less {
                    order.swap(0, 1);
                }
                for (d, child) in order {
                    if heap.len() == k {
                        let worst = heap.peek().expect("heap is full");
                        let bound = Candidate { d2: d, id: self.nodes[child].min_id };
                        if bound > *worst {
                            continue;
                        }
                    }
                    self.knn_visit(child, q, k, heap);
                }
            }
        }
    }
}

#[inline]
fn key_cmp<T: Scalar>(da: T, ia: usize, db: T, ib: usize) -> Ordering {
    da.partial_cmp(&db).unwrap_or(Ordering::Equal).then(ia.cmp(&ib))
}

#[derive(Clone, Copy, Debug)]
struct Candidate<T> {
    d2: T,
    id: usize,
}

impl<T: Scalar> PartialEq for Candidate<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<T: Scalar> Eq for Candidate<T> {}
impl<T: Scalar> PartialOrd for Candidate<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Scalar> Ord for Candidate<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        key_cmp(self.d2, self.id, other.d2, other.id)
    }
}

fn build_node<T: Scalar>(
    entries: &mut [([T; 3], usize)],
    offset: usize,
    axes: usize,
    nodes: &mut Vec<Node<T>>,
) -> usize {
    let mut lo = entries[0].0;
    let mut hi = entries[0].0;
    let mut min_id = entries[0].1;
    for (c, id) in entries.iter() {
        for k in 0..3 {
            lo[k] = lo[k].min(c[k]);
            hi[k] = hi[k].max(c[k]);
        }
        min_id = min_id.min(*id);
    }
    let me = nodes.len();
    nodes.push(Node { lo, hi, start: offset, end: offset + entries.len(), min_id, children: None });
    if entries.len() <= LEAF_SIZE {
        return me;
    }
    let axis = (0..axes)
        .max_by(|&a, &b| (hi[a] - lo[a]).partial_cmp(&(hi[b] - lo[b])).unwrap_or(Ordering::Equal))
        .unwrap_or(0);
    let mid = entries.len() / 2;
    // (coordinate, index) key: among coincident points the lower indices go left.
    entries.select_nth_unstable_by(mid, |a, b| key_cmp(a.0[axis], a.1, b.0[axis], b.1));
    let (left, right) = entries.split_at_mut(mid);
    let l = build_node(left, offset, axes, nodes);
    let r = build_node(right, offset + mid, axes, nodes);
    nodes[me].children = Some((l, r));
    me
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_radius(points: &[Point3<f64>], q: Point3<f64>, r: f64, dim: Dim) -> Vec<usize> {
        (0..points.len())
            .filter(|&i| {
                let p = points[i];
                let d = match dim {
                    Dim::Two => ((p.x - q.x).powi(2) + (p.y - q.y).powi(2)).sqrt(),
                    Dim::Three => ((p.x - q.x).powi(2) + (p.y - q.y).powi(2) + (p.z - q.z).powi(2)).sqrt(),
                };
                d < r
            })
            .collect()
    }

    fn brute_knn(points: &[Point3<f64>], q: Point3<f64>, k: usize, dim: Dim) -> Vec<usize> {
        let mut all: Vec<(f64, usize)> = points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let mut d = (p.x - q.x).powi(2) + (p.y - q.y).powi(2);
                if dim == Dim::Three {
                    d += (p.z - q.z).powi(2);
                }
                (d, i)
            })
            .collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        all.into_iter().take(k).map(|(_, i)| i).collect()
    }

    fn random_cloud(n: usize, seed: u64) -> Vec<Point3<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Point3::new(rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0), rng.gen_range(0.0..5.0)))
            .collect()
    }

    #[test]
    fn single_point() {
        let idx = NeighborIndex::build(&[Point3::new(1.0, 2.0, 3.0)], Dim::Three).unwrap();
        assert_eq!(idx.len(), 1);
        assert_eq!(idx.k_nearest(Point3::zero(), 5), vec![0]);
    }

    #[test]
    fn nan_is_reported_with_index() {
        let pts = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, f64::NAN, 0.0)];
        match NeighborIndex::build(&pts, Dim::Three) {
            Err(Error::NonFinite { index }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
        // z is irrelevant in 2D mode
        let pts = vec![Point3::new(0.0, 0.0, f64::NAN)];
        assert!(NeighborIndex::build(&pts, Dim::Two).is_ok());
    }

    #[test]
    fn isolated_point_finds_itself() {
        let pts = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(5.0, 0.0, 0.0)];
        let idx = NeighborIndex::build(&pts, Dim::Three).unwrap();
        assert_eq!(idx.radius_neighbors(pts[1], 1.0), vec![1]);
    }

    #[test]
    fn grid_four_connectivity() {
        let mut pts = Vec::new();
        for y in 0..5 {
            for x in 0..5 {
                pts.push(Point3::new(x as f64, y as f64, 0.0));
            }
        }
        let idx = NeighborIndex::build(&pts, Dim::Two).unwrap();
        // center (2,2) = 12; neighbours 7, 11, 13, 17
        assert_eq!(idx.radius_neighbors(pts[12], 1.2), vec![7, 11, 12, 13, 17]);
        assert_eq!(idx.radius_neighbors(pts[12], 1.5), vec![6, 7, 8, 11, 12, 13, 16, 17, 18]);
        // boundary at exactly r is excluded
        assert_eq!(idx.radius_neighbors(pts[12], 1.0), vec![12]);
    }

    #[test]
    fn knn_tie_prefers_lower_index() {
        let pts = vec![Point3::new(1.0, 0.0, 0.0), Point3::new(-1.0, 0.0, 0.0), Point3::new(0.0, 3.0, 0.0)];
        let idx = NeighborIndex::build(&pts, Dim::Three).unwrap();
        assert_eq!(idx.k_nearest(Point3::zero(), 1), vec![0]);
        assert_eq!(idx.k_nearest(Point3::zero(), 2), vec![0, 1]);
        assert_eq!(idx.k_nearest(pts[2], 1), vec![2]);
    }

    #[test]
    fn duplicates_use_lowest_indices() {
        let mut pts = vec![Point3::new(1.0, 1.0, 0.0); 300];
        pts.push(Point3::new(0.0, 0.0, 0.0));
        let idx = NeighborIndex::build(&pts, Dim::Two).unwrap();
        assert_eq!(idx.k_nearest(Point3::new(1.0, 1.0, 0.0), 4), vec![0, 1, 2, 3]);
        assert_eq!(idx.k_nearest(Point3::new(0.1, 0.1, 0.0), 2), vec![300, 0]);
    }

    #[test]
    fn matches_brute_force() {
        let pts = random_cloud(500, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for dim in [Dim::Two, Dim::Three] {
            let idx = NeighborIndex::build(&pts, dim).unwrap();
            for _ in 0..100 {
                let q = Point3::new(rng.gen_range(-1.0..11.0), rng.gen_range(-1.0..11.0), rng.gen_range(-1.0..6.0));
                let r = rng.gen_range(0.01..2.5);
                assert_eq!(idx.radius_neighbors(q, r), brute_radius(&pts, q, r, dim));
                let k = rng.gen_range(1..40);
                assert_eq!(idx.k_nearest(q, k), brute_knn(&pts, q, k, dim));
            }
            assert_eq!(idx.k_nearest(pts[0], 1000).len(), 500);
        }
    }

    #[test]
    fn large_build_spot_checked() {
        let pts = random_cloud(100_000, 11);
        let idx = NeighborIndex::build(&pts, Dim::Three).unwrap();
        let sub: Vec<_> = pts.iter().step_by(200).copied().collect();
        let sub_idx = NeighborIndex::build(&sub, Dim::Three).unwrap();
        for (i, q) in sub.iter().enumerate().take(50) {
            assert_eq!(sub_idx.radius_neighbors(*q, 1.0), brute_radius(&sub, *q, 1.0, Dim::Three));
            assert_eq!(sub_idx.k_nearest(*q, 7), brute_knn(&sub, *q, 7, Dim::Three));
            assert_eq!(idx.radius_neighbors(*q, 0.2), brute_radius(&pts, *q, 0.2, Dim::Three));
            assert_eq!(idx.k_nearest(*q, 1), vec![i * 200]);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn radius_symmetry_and_determinism(
                raw in prop::collection::vec((0.0f64..3.0, 0.0f64..3.0, 0.0f64..3.0), 1..120),
                r in 0.05f64..1.5,
            ) {
                let pts: Vec<_> = raw.iter().map(|&(x, y, z)| Point3::new(x, y, z)).collect();
                let idx = NeighborIndex::build(&pts, Dim::Three).unwrap();
                let lists: Vec<_> = pts.iter().map(|p| idx.radius_neighbors(*p, r)).collect();
                for (i, list) in lists.iter().enumerate() {
                    prop_assert_eq!(list, &idx.radius_neighbors(pts[i], r));
                    for &j in list {
                        prop_assert!(lists[j].binary_search(&i).is_ok());
                    }
                }
            }
        }
    }
}
