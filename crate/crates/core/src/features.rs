//! Local covariance eigen-analysis and the verticality feature.

use rayon::prelude::*;

use crate::spatial::{Dim, NeighborIndex};
use crate::{Error, Point3, PointCloud, Result, Scalar};

/// Name of the attribute channel verticality is stored under.
pub const VERTICALITY: &str = "verticality";

/// Default neighbourhood radius for verticality on a 10 cm subsampled cloud.
pub const DEFAULT_VERTICALITY_RADIUS: f64 = 0.5;

/// Eigen-decomposition of a 3x3 neighbourhood covariance.
///
/// `values` are sorted descending and clamped at zero; `vectors[i]` is the unit
/// eigenvector of `values[i]`, oriented so that its largest-magnitude
/// component is non-negative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigenFrame<T> {
    pub values: [T; 3],
    pub vectors: [Point3<T>; 3],
}

impl<T: Scalar> EigenFrame<T> {
    /// Rebuilds `sum_i values[i] * v_i v_i^T`.
    pub fn reconstruct(&self) -> [[T; 3]; 3] {
        let mut m = [[T::zero(); 3]; 3];
        for (l, v) in self.values.iter().zip(&self.vectors) {
            let a = v.to_array();
            for r in 0..3 {
                for c in 0..3 {
                    m[r][c] += *l * a[r] * a[c];
                }
            }
        }
        m
    }
}

/// Mean-centred covariance with divisor `n`.
pub fn covariance<T: Scalar>(points: &[Point3<T>]) -> [[T; 3]; 3] {
    let n = T::lit(points.len() as f64);
    let mut mean = Point3::zero();
    for p in points {
        mean += *p;
    }
    let mean = mean * (T::one() / n);
    let mut m = [[T::zero(); 3]; 3];
    for p in points {
        let d = (*p - mean).to_array();
        for r in 0..3 {
            for c in r..3 {
                m[r][c] += d[r] * d[c];
            }
        }
    }
    for r in 0..3 {
        for c in r..3 {
            m[r][c] /= n;
            m[c][r] = m[r][c];
        }
    }
    m
}

/// Eigen-analysis of the covariance of a neighbourhood of at least three points.
pub fn local_eigen<T: Scalar>(neighborhood: &[Point3<T>]) -> Result<EigenFrame<T>> {
    if neighborhood.len() < 3 {
        return Err(Error::DegenerateNeighborhood { count: neighborhood.len() });
    }
    Ok(symmetric_eigen(covariance(neighborhood)))
}

/// Cyclic Jacobi eigen-solver for a symmetric 3x3 matrix.
pub fn symmetric_eigen<T: Scalar>(mut a: [[T; 3]; 3]) -> EigenFrame<T> {
    let mut v = [[T::zero(); 3]; 3];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = T::one();
    }
    let scale = a.iter().flatten().fold(T::zero(), |m, x| m.max(x.abs()));
    if scale > T::zero() {
        for _sweep in 0..64 {
            let off = a[0][1].abs() + a[0][2].abs() + a[1][2].abs();
            if off <= scale * T::epsilon() * T::lit(1e-3) {
                break;
            }
            for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
                if a[p][q] == T::zero() {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (T::lit(2.0) * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                // A <- J^T A J
                for k in 0..3 {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..3 {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| a[j][j].partial_cmp(&a[i][i]).unwrap_or(std::cmp::Ordering::Equal));
    let mut values = [T::zero(); 3];
    let mut vectors = [Point3::zero(); 3];
    for (slot, &i) in order.iter().enumerate() {
        values[slot] = a[i][i].max(T::zero());
        let mut e = Point3::new(v[0][i], v[1][i], v[2][i]);
        e = e * (T::one() / e.norm());
        let comps = e.to_array();
        let dominant = (0..3)
            .max_by(|&x, &y| comps[x].abs().partial_cmp(&comps[y].abs()).unwrap_or(std::cmp::Ordering::Equal).then(y.cmp(&x)))
            .unwrap_or(0);
        if comps[dominant] < T::zero() {
            e = -e;
        }
        vectors[slot] = e;
    }
    EigenFrame { values, vectors }
}

/// Verticality from a neighbourhood: `1 - |e3 . z|`, with the degenerate rules
/// `< 3 points -> 0` and line-like neighbourhoods (`l2 / l1 < 1e-9`) -> `|e1 . z|`.
pub fn neighborhood_verticality<T: Scalar>(neighborhood: &[Point3<T>]) -> T {
    let Ok(frame) = local_eigen(neighborhood) else {
        return T::zero();
    };
    let [l1, l2, _] = frame.values;
    if !(l1 > T::zero()) {
        return T::zero();
    }
    let v = if l2 / l1 < T::lit(1e-9) {
        frame.vectors[0].z.abs()
    } else {
        T::one() - frame.vectors[2].z.abs()
    };
    v.max(T::zero()).min(T::one())
}

/// Per-point verticality using all neighbours within `radius` (3D).
pub fn verticality<T: Scalar>(cloud: &PointCloud<T>, radius: T) -> Result<Vec<T>> {
    verticality_of_points(cloud.points(), radius)
}

pub fn verticality_of_points<T: Scalar>(points: &[Point3<T>], radius: T) -> Result<Vec<T>> {
    if !(radius > T::zero()) {
        return Err(Error::InvalidParameter(format!("verticality radius must be positive, got {radius}")));
    }
    if points.is_empty() {
        return Ok(Vec::new());
    }
    let index = NeighborIndex::build(points, Dim::Three)?;
    Ok(points
        .par_iter()
        .map_init(
            || (Vec::new(), Vec::new()),
            |(ids, hood), p| {
                index.radius_neighbors_into(*p, radius, ids);
                hood.clear();
                hood.extend(ids.iter().map(|&j| points[j]));
                neighborhood_verticality(hood)
            },
        )
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn p(x: f64, y: f64, z: f64) -> Point3<f64> {
        Point3::new(x, y, z)
    }

    #[test]
    fn collinear_points() {
        let f = local_eigen(&[p(0.0, 0.0, 0.0), p(1.0, 0.0, 0.0), p(2.0, 0.0, 0.0)]).unwrap();
        assert!((f.values[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!(f.values[1].abs() < 1e-12 && f.values[2].abs() < 1e-12);
        assert!((f.vectors[0].x - 1.0).abs() < 1e-12);
    }

    #[test]
    fn planar_square() {
        let f = local_eigen(&[p(0.0, 0.0, 0.0), p(1.0, 0.0, 0.0), p(0.0, 1.0, 0.0), p(1.0, 1.0, 0.0)]).unwrap();
        assert!(f.values[2].abs() < 1e-12);
        assert!((f.vectors[2] - p(0.0, 0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn too_few_points() {
        assert!(matches!(local_eigen(&[p(0.0, 0.0, 0.0), p(1.0, 0.0, 0.0)]), Err(Error::DegenerateNeighborhood { count: 2 })));
    }

    fn gaussian_cloud(n: usize, seed: u64) -> Vec<Point3<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                let c: f64 = rng.sample(StandardNormal);
                p(3.0 * a + 0.5 * b, b - 0.3 * c, 0.2 * c + 0.1 * a)
            })
            .collect()
    }

    #[test]
    fn frame_invariants_and_reconstruction() {
        for seed in 0..50 {
            let pts = gaussian_cloud(40, seed);
            let f = local_eigen(&pts).unwrap();
            assert!(f.values[0] >= f.values[1] && f.values[1] >= f.values[2] && f.values[2] >= -1e-12);
            for i in 0..3 {
                assert!((f.vectors[i].norm() - 1.0).abs() < 1e-9);
                for j in (i + 1)..3 {
                    assert!(f.vectors[i].dot(f.vectors[j]).abs() < 1e-9);
                }
                let a = f.vectors[i].to_array();
                let dom = a.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
                assert!(dom >= 0.0);
            }
            let cov = covariance(&pts);
            let rec = f.reconstruct();
            let scale = cov.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
            for r in 0..3 {
                for c in 0..3 {
                    assert!((cov[r][c] - rec[r][c]).abs() <= 1e-9 * scale);
                }
            }
        }
    }

    #[test]
    fn vertical_line_and_horizontal_plane() {
        let line: Vec<_> = (0..40).map(|i| p(1.0, 2.0, i as f64 * 0.1)).collect();
        let v = verticality(&PointCloud::new(line).unwrap(), 0.5).unwrap();
        for x in &v[5..35] {
            assert!((x - 1.0).abs() < 1e-6);
        }
        let horizontal: Vec<_> = (0..40).map(|i| p(i as f64 * 0.1, 0.0, 0.0)).collect();
        assert!(verticality(&PointCloud::new(horizontal).unwrap(), 0.5).unwrap().iter().all(|x| x.abs() < 1e-6));

        let mut plane = Vec::new();
        for i in 0..20 {
            for j in 0..20 {
                plane.push(p(i as f64 * 0.1, j as f64 * 0.1, 1.0));
            }
        }
        let v = verticality(&PointCloud::new(plane).unwrap(), 0.5).unwrap();
        assert!(v.iter().all(|x| x.abs() < 1e-6));
    }

    #[test]
    fn isolated_point_is_zero() {
        let v = verticality(&PointCloud::new(vec![p(0.0, 0.0, 0.0), p(5.0, 0.0, 0.0)]).unwrap(), 0.5).unwrap();
        assert_eq!(v, vec![0.0, 0.0]);
    }

    #[test]
    fn trunk_cylinder_is_vertical() {
        // r = 0.2 m cylinder sampled on a 0.1 m pitch around and along
        let r = 0.2;
        let per_ring = (std::f64::consts::TAU * r / 0.1).round() as usize;
        let mut pts = Vec::new();
        for k in 0..60 {
            for j in 0..per_ring {
                let a = j as f64 / per_ring as f64 * std::f64::consts::TAU + 0.3 * k as f64;
                pts.push(p(3.0 + r * a.cos(), 4.0 + r * a.sin(), k as f64 * 0.1));
            }
        }
        let v = verticality_of_points(&pts, 0.5).unwrap();
        // brute-force neighbourhoods for the middle section
        for (i, q) in pts.iter().enumerate() {
            if q.z < 1.0 || q.z > 5.0 {
                continue;
            }
            let hood: Vec<_> = pts.iter().copied().filter(|o| o.distance_squared(*q).sqrt() < 0.5).collect();
            let brute = neighborhood_verticality(&hood);
            assert!((brute - v[i]).abs() < 1e-12);
            assert!(v[i] >= 0.9, "mid-trunk verticality {}", v[i]);
        }
    }

    #[test]
    fn f32_works() {
        let line: Vec<Point3<f32>> = (0..20).map(|i| Point3::new(0.0, 0.0, i as f32 * 0.1)).collect();
        let v = verticality_of_points(&line, 0.5).unwrap();
        assert!((v[10] - 1.0).abs() < 1e-5);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]
            #[test]
            fn range_rotation_translation(seed in 0u64..10_000, angle in 0.0f64..6.28, tx in -100.0f64..100.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let pts: Vec<_> = (0..200)
                    .map(|_| p(rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0), rng.gen_range(0.0..3.0)))
                    .collect();
                let base = verticality_of_points(&pts, 0.6).unwrap();
                prop_assert!(base.iter().all(|v| (0.0..=1.0).contains(v)));
                let (s, c) = angle.sin_cos();
                let rotated: Vec<_> = pts.iter().map(|q| p(c * q.x - s * q.y, s * q.x + c * q.y, q.z)).collect();
                let moved: Vec<_> = pts.iter().map(|q| p(q.x + tx, q.y - tx, q.z + 0.5 * tx)).collect();
                let vr = verticality_of_points(&rotated, 0.6).unwrap();
                let vt = verticality_of_points(&moved, 0.6).unwrap();
                for i in 0..pts.len() {
                    prop_assert!((base[i] - vr[i]).abs() < 1e-9, "rotation {} vs {}", base[i], vr[i]);
                    prop_assert!((base[i] - vt[i]).abs() < 1e-9, "translation {} vs {}", base[i], vt[i]);
                }
            }
        }
    }
}
