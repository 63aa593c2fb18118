//! Rebuilds a fully labeled plot from separately labeled trees and the raw
//! plot cloud.

use rayon::prelude::*;
use serde::Serialize;

use crate::assigner::majority;
use crate::clusterer::radius_components;
use crate::spatial::{Dim, NeighborIndex};
use crate::{Error, Point3, PointCloud, PointLabel, Result, Scalar};

pub const DEFAULT_LABEL_RADIUS: f64 = 0.10;
pub const DEFAULT_LINK_RADIUS: f64 = 0.30;

/// Tree id of every full-cloud point: the most common id among labeled tree
/// points closer than `radius`, `None` without such neighbors. Ties go to the
/// tied id of the nearest labeled point.
pub fn propagate_instance_labels<T: Scalar>(
    labeled: &PointCloud<T>,
    full: &PointCloud<T>,
    radius: T,
) -> Result<Vec<Option<u32>>> {
    if !(radius > T::zero()) {
        return Err(Error::InvalidParameter(format!("label radius must be positive, got {radius}")));
    }
    let labels = labeled.labels().ok_or_else(|| Error::MissingLabels("labeled tree cloud".into()))?;
    let (pts, ids): (Vec<Point3<T>>, Vec<u32>) =
        labeled.points().iter().zip(labels).filter_map(|(p, l)| l.tree_id().map(|id| (*p, id))).unzip();
    if pts.is_empty() {
        return Err(Error::EmptyInput);
    }
    let index = NeighborIndex::build(&pts, Dim::Three)?;
    Ok(full
        .points()
        .par_iter()
        .map_init(Vec::new, |buf, q| {
            index.radius_neighbors_into(*q, radius, buf);
            if buf.is_empty() {
                return None;
            }
            let mut by_dist: Vec<(T, usize)> = buf.iter().map(|&j| (pts[j].distance_squared(*q), j)).collect();
            by_dist.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite").then(a.1.cmp(&b.1)));
            let votes: Vec<u32> = by_dist.iter().map(|&(_, j)| ids[j]).collect();
            Some(majority(&votes))
        })
        .collect())
}

/// Splits the points left unlabeled into non-tree points (the largest
/// component linked at `link_radius`, ties to the smallest member index) and
/// non-annotated ones. Returns `(non_tree, non_annotated)` as ascending
/// indices into `points`.
pub fn identify_nontree<T: Scalar>(points: &[Point3<T>], link_radius: T) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(link_radius > T::zero()) {
        return Err(Error::InvalidParameter(format!("link radius must be positive, got {link_radius}")));
    }
    let comps = radius_components(points, link_radius, Dim::Three)?;
    // components are ordered by smallest member, so the first maximum wins ties
    let Some(largest) = comps.iter().enumerate().rev().max_by_key(|(_, c)| c.len()).map(|(i, _)| i) else {
        return Ok((Vec::new(), Vec::new()));
    };
    let mut rest: Vec<usize> = comps.iter().enumerate().filter(|(i, _)| *i != largest).flat_map(|(_, c)| c.iter().copied()).collect();
    rest.sort_unstable();
    Ok((comps[largest].clone(), rest))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PropagationSummary {
    pub tree: usize,
    pub non_tree: usize,
    pub non_annotated: usize,
    pub trees: usize,
}

/// Both steps: the full cloud with every point labeled.
pub fn reconstruct_labels<T: Scalar>(
    labeled: &PointCloud<T>,
    full: &PointCloud<T>,
    label_radius: T,
    link_radius: T,
) -> Result<(PointCloud<T>, PropagationSummary)> {
    let partial = propagate_instance_labels(labeled, full, label_radius)?;
    let remainder: Vec<usize> = (0..partial.len()).filter(|&i| partial[i].is_none()).collect();
    let rem_pts: Vec<Point3<T>> = remainder.iter().map(|&i| full.points()[i]).collect();
    let (non_tree, _) = identify_nontree(&rem_pts, link_radius)?;
    let mut labels: Vec<PointLabel> = partial.iter().map(|l| l.map_or(PointLabel::NonAnnotated, PointLabel::Tree)).collect();
    for &k in &non_tree {
        labels[remainder[k]] = PointLabel::NonTree;
    }
    let mut ids: Vec<u32> = partial.iter().flatten().copied().collect();
    ids.sort_unstable();
    ids.dedup();
    let summary = PropagationSummary {
        tree: partial.len() - remainder.len(),
        non_tree: non_tree.len(),
        non_annotated: remainder.len() - non_tree.len(),
        trees: ids.len(),
    };
    let mut out = full.clone();
    out.set_labels(labels)?;
    Ok((out, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::VecDeque;

    fn labeled(pts: Vec<Point3<f64>>, ids: Vec<u32>) -> PointCloud<f64> {
        PointCloud::with_labels(pts, ids.into_iter().map(PointLabel::Tree).collect()).unwrap()
    }

    #[test]
    fn coincident_and_majority() {
        let l = labeled(
            vec![Point3::new(0.0, 0.0, 0.0), Point3::new(0.05, 0.0, 0.0), Point3::new(-0.05, 0.0, 0.0), Point3::new(0.0, 0.04, 0.0), Point3::new(5.0, 0.0, 0.0)],
            vec![1, 1, 1, 2, 7],
        );
        let full = PointCloud::new(vec![Point3::new(0.0, 0.0, 0.0), Point3::new(5.0, 0.0, 0.0), Point3::new(9.0, 0.0, 0.0)]).unwrap();
        assert_eq!(propagate_instance_labels(&l, &full, 0.1).unwrap(), vec![Some(1), Some(7), None]);
    }

    #[test]
    fn tie_goes_to_nearest() {
        let l = labeled(vec![Point3::new(0.03, 0.0, 0.0), Point3::new(-0.02, 0.0, 0.0)], vec![4, 9]);
        let full = PointCloud::new(vec![Point3::new(0.0, 0.0, 0.0)]).unwrap();
        assert_eq!(propagate_instance_labels(&l, &full, 0.1).unwrap(), vec![Some(9)]);
    }

    #[test]
    fn empty_labeled_cloud_is_error() {
        let l = PointCloud::with_labels(vec![Point3::new(0.0, 0.0, 0.0)], vec![PointLabel::NonTree]).unwrap();
        let full = PointCloud::new(vec![Point3::new(0.0, 0.0, 0.0)]).unwrap();
        assert!(matches!(propagate_instance_labels(&l, &full, 0.1), Err(Error::EmptyInput)));
    }

    #[test]
    fn jittered_copy_recovers_all_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        // three separated stems sampled every 5 cm
        let mut pts = Vec::new();
        let mut ids = Vec::new();
        for t in 0..3u32 {
            for k in 0..200 {
                pts.push(Point3::new(t as f64 * 2.0, 0.0, k as f64 * 0.05));
                ids.push(t + 1);
            }
        }
        let l = labeled(pts.clone(), ids.clone());
        let jit: Vec<_> = pts
            .iter()
            .map(|p| {
                let d = Point3::<f64>::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                *p + d * (0.05 * rng.gen::<f64>() / d.norm().max(1e-12))
            })
            .collect();
        let full = PointCloud::new(jit).unwrap();
        let got = propagate_instance_labels(&l, &full, 0.1).unwrap();
        assert_eq!(got, ids.into_iter().map(Some).collect::<Vec<_>>());
    }

    #[test]
    fn ground_sheet_and_floating_tuft() {
        let mut pts = Vec::new();
        for i in 0..40 {
            for j in 0..40 {
                pts.push(Point3::new(i as f64 * 0.2, j as f64 * 0.2, 0.0));
            }
        }
        let (nt, na) = identify_nontree(&pts, 0.3).unwrap();
        assert_eq!((nt.len(), na.len()), (1600, 0));
        for k in 0..50 {
            pts.push(Point3::new(3.0 + (k % 5) as f64 * 0.1, 3.0 + (k / 5) as f64 * 0.1, 2.0));
        }
        let (nt, na) = identify_nontree(&pts, 0.3).unwrap();
        assert_eq!(nt.len(), 1600);
        assert_eq!(na, (1600..1650).collect::<Vec<_>>());
        assert_eq!(identify_nontree::<f64>(&[], 0.3).unwrap(), (vec![], vec![]));
    }

    #[test]
    fn largest_component_tie_prefers_smallest_index() {
        let pts = vec![Point3::new(10.0, 0.0, 0.0), Point3::new(0.0, 0.0, 0.0), Point3::new(10.1, 0.0, 0.0), Point3::new(0.1, 0.0, 0.0)];
        assert_eq!(identify_nontree(&pts, 0.3).unwrap(), (vec![0, 2], vec![1, 3]));
    }

    fn bfs_components(pts: &[Point3<f64>], r: f64) -> Vec<Vec<usize>> {
        let n = pts.len();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for s in 0..n {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            let mut comp = vec![s];
            let mut q = VecDeque::from([s]);
            while let Some(a) = q.pop_front() {
                for b in 0..n {
                    if !seen[b] && pts[a].distance_squared(pts[b]) < r * r {
                        seen[b] = true;
                        comp.push(b);
                        q.push_back(b);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    #[test]
    fn matches_bfs_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let n = rng.gen_range(1..=500);
            let pts: Vec<Point3<f64>> = (0..n).map(|_| Point3::new(rng.gen_range(0.0..4.0), rng.gen_range(0.0..4.0), rng.gen_range(0.0..1.0))).collect();
            let comps = bfs_components(&pts, 0.3);
            let best = comps.iter().map(|c| c.len()).max().unwrap();
            let expect = comps.iter().find(|c| c.len() == best).unwrap().clone();
            let (nt, na) = identify_nontree(&pts, 0.3).unwrap();
            assert_eq!(nt, expect);
            assert_eq!(nt.len() + na.len(), n);
        }
    }

    #[test]
    fn reconstruction_is_total() {
        let l = labeled(vec![Point3::new(0.0, 0.0, 1.0), Point3::new(0.0, 0.0, 1.05)], vec![3, 3]);
        let full = PointCloud::new(vec![
            Point3::new(0.0, 0.0, 1.0),
            Point3::new(0.0, 0.0, 1.02),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(1.2, 0.0, 0.0),
            Point3::new(5.0, 5.0, 5.0),
        ])
        .unwrap();
        let (c, s) = reconstruct_labels(&l, &full, 0.1, 0.3).unwrap();
        use PointLabel::*;
        assert_eq!(c.labels().unwrap(), &[Tree(3), Tree(3), NonTree, NonTree, NonAnnotated]);
        assert_eq!(s, PropagationSummary { tree: 2, non_tree: 2, non_annotated: 1, trees: 1 });
    }
}
