//! Parametric forest generator with exact ground truth.
//!
//! Trees are vertical (optionally leaning) cylinders topped by ellipsoid crown
//! shells, standing on a flat ground plane at `z = 0` with small understory
//! tufts. Every tree is drawn from its own random stream so generation is
//! parallel and reproducible.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::predictor::{TreeBase, BASE_HEIGHT};
use crate::{Error, Point3, PointCloud, PointLabel, Result, Scalar};

const PLACEMENT_STREAM: u64 = 0;
const GROUND_STREAM: u64 = u64::MAX;
const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestSpec {
    pub n_trees: usize,
    /// Minimum xy distance between trunk axes at base height (m).
    pub min_trunk_spacing: f64,
    /// Explicit trunk positions at base height; random placement when empty.
    pub positions: Vec<[f64; 2]>,
    /// Height of the clear bole below the crown (m).
    pub trunk_height: [f64; 2],
    pub trunk_radius: [f64; 2],
    /// Horizontal crown semi-axis (m), before the overlap cap.
    pub crown_radius: [f64; 2],
    /// Vertical crown semi-axis (m).
    pub crown_half_height: [f64; 2],
    /// Horizontal crown semi-axes are capped at this factor times half the
    /// distance to the nearest other trunk; values above 1 make crowns overlap.
    pub crown_overlap: f64,
    /// Maximum trunk lean from vertical (degrees).
    pub max_lean_deg: f64,
    /// Points per m² of trunk surface.
    pub trunk_density: f64,
    /// Points per m² of crown surface.
    pub crown_density: f64,
    /// Points per m² of ground.
    pub ground_density: f64,
    /// Side of the square plot (m).
    pub extent: f64,
    /// Understory tufts per m² of ground.
    pub understory_density: f64,
    pub seed: u64,
}

impl Default for ForestSpec {
    fn default() -> Self {
        Self {
            n_trees: 50,
            min_trunk_spacing: 2.0,
            positions: Vec::new(),
            trunk_height: [7.0, 12.0],
            trunk_radius: [0.15, 0.3],
            crown_radius: [4.4, 6.7],
            crown_half_height: [6.0, 11.0],
            crown_overlap: 1.3,
            max_lean_deg: 0.0,
            trunk_density: 500.0,
            crown_density: 110.0,
            ground_density: 300.0,
            extent: 40.0,
            understory_density: 0.01,
            seed: 0,
        }
    }
}

fn check_range(name: &str, r: [f64; 2], min: f64) -> Result<()> {
    if !(r[0].is_finite() && r[1].is_finite() && r[0] >= min && r[0] <= r[1]) {
        return Err(Error::InvalidParameter(format!("{name} range {r:?} must satisfy {min} <= lo <= hi")));
    }
    Ok(())
}

impl ForestSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
            }
        };
        positive("min_trunk_spacing", self.min_trunk_spacing)?;
        positive("crown_overlap", self.crown_overlap)?;
        positive("trunk_density", self.trunk_density)?;
        positive("crown_density", self.crown_density)?;
        positive("ground_density", self.ground_density)?;
        positive("extent", self.extent)?;
        check_range("trunk_height", self.trunk_height, BASE_HEIGHT + 2.0)?;
        check_range("trunk_radius", self.trunk_radius, 1e-3)?;
        check_range("crown_radius", self.crown_radius, 1e-3)?;
        check_range("crown_half_height", self.crown_half_height, 1e-3)?;
        if !(0.0..45.0).contains(&self.max_lean_deg) {
            return Err(Error::InvalidParameter(format!("max_lean_deg must be in [0, 45), got {}", self.max_lean_deg)));
        }
        if !(self.understory_density >= 0.0) {
            return Err(Error::InvalidParameter("understory_density must be >= 0".into()));
        }
        if !self.positions.is_empty() && self.positions.len() != self.n_trees {
            return Err(Error::InvalidParameter(format!(
                "{} positions given for {} trees",
                self.positions.len(),
                self.n_trees
            )));
        }
        Ok(())
    }
}

/// Geometry of one generated tree.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeShape {
    pub id: u32,
    /// Axis position at base height.
    pub base_xy: [f64; 2],
    pub trunk_radius: f64,
    pub trunk_height: f64,
    pub crown_radius: f64,
    pub crown_half_height: f64,
    /// Horizontal axis drift per meter of height.
    pub lean: [f64; 2],
}

impl TreeShape {
    fn axis_at(&self, z: f64) -> [f64; 2] {
        let dz = z - BASE_HEIGHT;
        [self.base_xy[0] + self.lean[0] * dz, self.base_xy[1] + self.lean[1] * dz]
    }

    /// Total height: crown top.
    pub fn height(&self) -> f64 {
        self.trunk_height + 2.0 * self.crown_half_height
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticForest<T> {
    pub cloud: PointCloud<T>,
    pub bases: BTreeMap<u32, TreeBase>,
    /// `base - p` for tree points, zero elsewhere.
    pub offsets: Vec<Point3<T>>,
    pub trees: Vec<TreeShape>,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.gen_range(r[0]..=r[1])
    }
}

/// Trunk xy positions by rejection sampling within a 1 m margin.
fn place_trunks(spec: &ForestSpec) -> Result<Vec<[f64; 2]>> {
    if !spec.positions.is_empty() {
        return Ok(spec.positions.clone());
    }
    let mut rng = stream(spec.seed, PLACEMENT_STREAM);
    let margin = 1.0f64.min(spec.extent / 4.0);
    let span = [margin, spec.extent - margin];
    let min2 = spec.min_trunk_spacing * spec.min_trunk_spacing;
    let mut placed: Vec<[f64; 2]> = Vec::with_capacity(spec.n_trees);
    let mut attempts = 0;
    while placed.len() < spec.n_trees {
        attempts += 1;
        if attempts > MAX_PLACEMENT_ATTEMPTS * spec.n_trees.max(1) {
            return Err(Error::Infeasible(format!(
                "placed {} of {} trunks {} m apart in a {} m plot",
                placed.len(),
                spec.n_trees,
                spec.min_trunk_spacing,
                spec.extent
            )));
        }
        let c = [rng.gen_range(span[0]..span[1]), rng.gen_range(span[0]..span[1])];
        if placed.iter().all(|q| (q[0] - c[0]).powi(2) + (q[1] - c[1]).powi(2) >= min2) {
            placed.push(c);
        }
    }
    Ok(placed)
}

fn shape_tree(spec: &ForestSpec, id: u32, xy: [f64; 2], nn_dist: f64) -> TreeShape {
    let mut rng = stream(spec.seed, id as u64);
    let trunk_radius = uniform(&mut rng, spec.trunk_radius);
    let trunk_height = uniform(&mut rng, spec.trunk_height);
    let crown_radius = uniform(&mut rng, spec.crown_radius).min(spec.crown_overlap * nn_dist / 2.0).max(trunk_radius * 2.0);
    let crown_half_height = uniform(&mut rng, spec.crown_half_height);
    let tilt = uniform(&mut rng, [0.0, spec.max_lean_deg]).to_radians().tan();
    let dir = rng.gen_range(0.0..TAU);
    TreeShape {
        id,
        base_xy: xy,
        trunk_radius,
        trunk_height,
        crown_radius,
        crown_half_height,
        lean: [tilt * dir.cos(), tilt * dir.sin()],
    }
}

/// Trunk surface on a jittered grid: rows at exact heights `j * dz` starting
/// at `z = 0`, angles jittered within equal sectors.
fn trunk_points(t: &TreeShape, density: f64, rng: &mut ChaCha8Rng, out: &mut Vec<[f64; 3]>) {
    let step = 1.0 / density.sqrt();
    let top = t.trunk_height + t.crown_half_height;
    let sectors = ((TAU * t.trunk_radius / step).round() as usize).max(3);
    let rows = (top / step).floor() as usize + 1;
    for j in 0..rows {
        let z = j as f64 * step;
        let a = t.axis_at(z);
        for k in 0..sectors {
            let th = (k as f64 + rng.gen::<f64>()) * TAU / sectors as f64;
            out.push([a[0] + t.trunk_radius * th.cos(), a[1] + t.trunk_radius * th.sin(), z]);
        }
    }
}

/// Approximate surface area of an ellipsoid with semi-axes `a, a, c`.
fn spheroid_area(a: f64, c: f64) -> f64 {
    let p = 1.6075;
    let ap = a.powf(p);
    let cp = c.powf(p);
    4.0 * PI * ((ap * ap + 2.0 * ap * cp) / 3.0).powf(1.0 / p)
}

/// Crown shell points, uniform over the spheroid surface by rejection on the
/// area element.
fn crown_points(t: &TreeShape, density: f64, rng: &mut ChaCha8Rng, out: &mut Vec<[f64; 3]>) {
    let (a, c) = (t.crown_radius, t.crown_half_height);
    let cz = t.trunk_height + c;
    let center = t.axis_at(cz);
    let n = (spheroid_area(a, c) * density).round() as usize;
    // area element of (a cos u cos v, a cos u sin v, c sin u) relative to its maximum
    let g = |su: f64| {
        let cu2 = 1.0 - su * su;
        (c * c * cu2 + a * a * su * su).sqrt()
    };
    let gmax = a.max(c);
    let mut made = 0;
    while made < n {
        let su = rng.gen_range(-1.0..1.0f64);
        let v = rng.gen_range(0.0..TAU);
        if rng.gen::<f64>() * gmax > g(su) {
            continue;
        }
        let cu = (1.0 - su * su).sqrt();
        out.push([center[0] + a * cu * v.cos(), center[1] + a * cu * v.sin(), cz + c * su]);
        made += 1;
    }
}

fn ground_points(spec: &ForestSpec, trunks: &[TreeShape]) -> (Vec<[f64; 3]>, usize) {
    let mut rng = stream(spec.seed, GROUND_STREAM);
    let step = 1.0 / spec.ground_density.sqrt();
    let cells = (spec.extent / step).ceil() as usize;
    let mut out = Vec::with_capacity(cells * cells);
    for i in 0..cells {
        for j in 0..cells {
            let x = (i as f64 + rng.gen::<f64>()) * step;
            let y = (j as f64 + rng.gen::<f64>()) * step;
            if x < spec.extent && y < spec.extent {
                out.push([x, y, 0.0]);
            }
        }
    }
    let ground = out.len();
    // tufts: small blobs below 1.5 m, at least 1 m from every trunk axis
    let n_tufts = (spec.understory_density * spec.extent * spec.extent).round() as usize;
    let mut made = 0;
    let mut attempts = 0;
    while made < n_tufts && attempts < 100 * n_tufts {
        attempts += 1;
        let c = [rng.gen_range(0.0..spec.extent), rng.gen_range(0.0..spec.extent), rng.gen_range(0.4..0.9)];
        if trunks.iter().any(|t| (t.base_xy[0] - c[0]).powi(2) + (t.base_xy[1] - c[1]).powi(2) < 1.0) {
            continue;
        }
        for _ in 0..200 {
            let d = [rng.gen_range(-0.4..0.4), rng.gen_range(-0.4..0.4), rng.gen_range(-0.35..0.35)];
            out.push([c[0] + d[0], c[1] + d[1], c[2] + d[2]]);
        }
        made += 1;
    }
    (out, ground)
}

/// Generates a labeled forest. Tree ids run from 1 in placement order. The
/// true base of a tree is its axis position at 3 m; trunks start at `z = 0`,
/// so this is the base a perfect annotation yields.
pub fn generate_forest<T: Scalar>(spec: &ForestSpec) -> Result<SyntheticForest<T>> {
    spec.validate()?;
    let xy = place_trunks(spec)?;
    let trees: Vec<TreeShape> = (0..xy.len())
        .map(|i| {
            let nn = (0..xy.len())
                .filter(|&j| j != i)
                .map(|j| ((xy[i][0] - xy[j][0]).powi(2) + (xy[i][1] - xy[j][1]).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min);
            shape_tree(spec, i as u32 + 1, xy[i], nn)
        })
        .collect();
    let per_tree: Vec<Vec<[f64; 3]>> = trees
        .par_iter()
        .map(|t| {
            // points come from a stream separate from the shape draws
            let mut rng = stream(spec.seed ^ 0x9e37_79b9_7f4a_7c15, t.id as u64);
            let mut pts = Vec::new();
            trunk_points(t, spec.trunk_density, &mut rng, &mut pts);
            crown_points(t, spec.crown_density, &mut rng, &mut pts);
            pts
        })
        .collect();
    let (ground, n_ground) = ground_points(spec, &trees);
    let total = ground.len() + per_tree.iter().map(Vec::len).sum::<usize>();
    let mut points = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    let mut offsets = Vec::with_capacity(total);
    let mut bases = BTreeMap::new();
    for (t, pts) in trees.iter().zip(&per_tree) {
        let b = TreeBase { x: t.base_xy[0], y: t.base_xy[1], z: BASE_HEIGHT };
        bases.insert(t.id, b);
        for p in pts {
            let q = Point3::from_f64(p[0], p[1], p[2]);
            points.push(q);
            labels.push(PointLabel::Tree(t.id));
            offsets.push(b.point::<T>() - q);
        }
    }
    debug_assert!(n_ground <= ground.len());
    for p in &ground {
        points.push(Point3::from_f64(p[0], p[1], p[2]));
        labels.push(PointLabel::NonTree);
        offsets.push(Point3::zero());
    }
    Ok(SyntheticForest { cloud: PointCloud::with_labels(points, labels)?, bases, offsets, trees })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::verticality;
    use crate::predictor::compute_tree_bases;

    fn light(n: usize, seed: u64) -> ForestSpec {
        ForestSpec {
            n_trees: n,
            crown_density: 10.0,
            ground_density: 20.0,
            trunk_density: 400.0,
            trunk_height: [6.0, 8.0],
            crown_half_height: [3.0, 5.0],
            seed,
            ..ForestSpec::default()
        }
    }

    #[test]
    fn single_tree_with_configured_position() {
        let spec = ForestSpec { positions: vec![[12.5, 7.25]], ..light(1, 3) };
        let f = generate_forest::<f64>(&spec).unwrap();
        assert_eq!(f.bases.len(), 1);
        assert_eq!(f.bases[&1], TreeBase { x: 12.5, y: 7.25, z: 3.0 });
        let members = f.cloud.tree_members();
        assert_eq!(members.keys().copied().collect::<Vec<_>>(), vec![1]);
        let ground = f.cloud.labels().unwrap().iter().filter(|l| **l == PointLabel::NonTree).count();
        assert!(ground > 0);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_forest::<f64>(&light(8, 5)).unwrap();
        let b = generate_forest::<f64>(&light(8, 5)).unwrap();
        assert_eq!(a, b);
        let c = generate_forest::<f64>(&light(8, 6)).unwrap();
        assert_ne!(a.cloud.points(), c.cloud.points());
    }

    #[test]
    fn infeasible_spacing() {
        let spec = ForestSpec { n_trees: 100, min_trunk_spacing: 10.0, extent: 20.0, ..light(100, 0) };
        assert!(matches!(generate_forest::<f64>(&spec), Err(Error::Infeasible(_))));
        let bad = ForestSpec { trunk_radius: [0.3, 0.1], ..light(1, 0) };
        assert!(matches!(bad.validate(), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn offsets_point_to_bases() {
        let f = generate_forest::<f64>(&ForestSpec { max_lean_deg: 10.0, ..light(5, 9) }).unwrap();
        for ((p, o), l) in f.cloud.points().iter().zip(&f.offsets).zip(f.cloud.labels().unwrap()) {
            match l {
                PointLabel::Tree(id) => {
                    let b = f.bases[id];
                    let q = *p + *o;
                    assert!((q.x - b.x).abs() < 1e-12 && (q.y - b.y).abs() < 1e-12 && (q.z - 3.0).abs() < 1e-12);
                }
                _ => assert_eq!(*o, Point3::zero()),
            }
        }
    }

    #[test]
    fn fifty_trees_spacing_and_bases() {
        let spec = ForestSpec { max_lean_deg: 5.0, ..light(50, 1) };
        let f = generate_forest::<f64>(&spec).unwrap();
        let xy: Vec<[f64; 2]> = f.trees.iter().map(|t| t.base_xy).collect();
        for i in 0..xy.len() {
            for j in i + 1..xy.len() {
                assert!(((xy[i][0] - xy[j][0]).powi(2) + (xy[i][1] - xy[j][1]).powi(2)).sqrt() >= 2.0);
            }
        }
        let vert = verticality(&f.cloud, 0.5).unwrap();
        let bases = compute_tree_bases(&f.cloud, &vert).unwrap();
        assert_eq!(bases.len(), 50);
        for (id, b) in &bases {
            let t = f.bases[id];
            assert!(((b.x - t.x).powi(2) + (b.y - t.y).powi(2)).sqrt() < 0.05, "tree {id}");
            assert!((b.z - t.z).abs() < 1e-12);
        }
    }

    #[test]
    fn trunk_slice_holds_enough_points() {
        let f = generate_forest::<f64>(&ForestSpec::default()).unwrap();
        let labels = f.cloud.labels().unwrap();
        for t in &f.trees {
            let n = f
                .cloud
                .points()
                .iter()
                .zip(labels)
                .filter(|(p, l)| **l == PointLabel::Tree(t.id) && p.z >= 2.75 && p.z <= 3.25)
                .count();
            assert!(n >= 100, "tree {} has {n} slice points", t.id);
        }
        assert!((1_700_000..2_300_000).contains(&f.cloud.len()), "{}", f.cloud.len());
    }
}
