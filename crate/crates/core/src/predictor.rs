//! Per-point semantic and offset predictions: the field type, tree-base
//! targets, the ground-truth oracle and the binary prediction file format.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::tiler::{TilePrediction, TileView};
use crate::{point, Error, Point3, PointCloud, PointLabel, Result, Scalar};

/// Lower and upper bound of the trunk slice used for the tree base, in meters
/// above the tree's lowest point.
pub const BASE_SLICE: (f64, f64) = (2.75, 3.25);
/// Height of the tree base above the tree's lowest point.
pub const BASE_HEIGHT: f64 = 3.0;
pub const BASE_MIN_VERTICALITY: f64 = 0.6;

/// Identifies the cloud a prediction field belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Alignment {
    pub count: u64,
    pub digest: u64,
}

impl Alignment {
    pub fn of<T: Scalar>(points: &[Point3<T>]) -> Self {
        Self { count: points.len() as u64, digest: point::coordinate_digest(points) }
    }
}

/// Per-point tree probability and offset vector for one cloud.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionField<T> {
    p_tree: Vec<T>,
    offset: Vec<Point3<T>>,
    alignment: Alignment,
}

impl<T: Scalar> PredictionField<T> {
    pub fn new(p_tree: Vec<T>, offset: Vec<Point3<T>>, alignment: Alignment) -> Result<Self> {
        crate::cloud::check_len(p_tree.len(), offset.len())?;
        crate::cloud::check_len(alignment.count as usize, p_tree.len())?;
        if let Some(index) = p_tree.iter().position(|p| !(*p >= T::zero() && *p <= T::one())) {
            return Err(Error::ProbabilityOutOfRange { index, value: p_tree[index].as_f64() });
        }
        if let Some(index) = offset.iter().position(|o| !o.is_finite()) {
            return Err(Error::NonFiniteOffset { index });
        }
        Ok(Self { p_tree, offset, alignment })
    }

    pub fn len(&self) -> usize {
        self.p_tree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_tree.is_empty()
    }

    pub fn p_tree(&self) -> &[T] {
        &self.p_tree
    }

    pub fn offset(&self) -> &[Point3<T>] {
        &self.offset
    }

    pub fn alignment(&self) -> Alignment {
        self.alignment
    }

    /// Fails unless the field was built for exactly these points.
    pub fn check_aligned(&self, points: &[Point3<T>]) -> Result<()> {
        let expected = Alignment::of(points);
        if expected != self.alignment {
            return Err(Error::Misalignment(format!(
                "field has {} points (digest {:016x}), cloud has {} (digest {:016x})",
                self.alignment.count, self.alignment.digest, expected.count, expected.digest
            )));
        }
        Ok(())
    }
}

/// Tree base: trunk position at 3 m above the tree's lowest point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeBase {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl TreeBase {
    pub fn point<T: Scalar>(&self) -> Point3<T> {
        Point3::from_f64(self.x, self.y, self.z)
    }
}

/// Tree base from one tree's points.
///
/// xy is the mean over points 2.75-3.25 m above the lowest point with
/// verticality >= 0.6; if there are none the verticality condition is dropped,
/// and if the slice is still empty the lowest decile of points is used.
pub fn tree_base<T: Scalar>(points: &[Point3<T>], verticality: &[T]) -> Result<TreeBase> {
    if points.is_empty() {
        return Err(Error::EmptyInput);
    }
    crate::cloud::check_len(points.len(), verticality.len())?;
    let z_min = points.iter().map(|p| p.z).fold(T::infinity(), T::min);
    let lo = z_min + T::lit(BASE_SLICE.0);
    let hi = z_min + T::lit(BASE_SLICE.1);
    let in_slice = |p: &Point3<T>| p.z >= lo && p.z <= hi;
    let mean_xy = |sel: &mut dyn Iterator<Item = &Point3<T>>| -> Option<(f64, f64)> {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for p in sel {
            sx += p.x.as_f64();
            sy += p.y.as_f64();
            n += 1;
        }
        (n > 0).then(|| (sx / n as f64, sy / n as f64))
    };
    let vmin = T::lit(BASE_MIN_VERTICALITY);
    let xy = mean_xy(&mut points.iter().zip(verticality).filter(|(p, v)| in_slice(p) && **v >= vmin).map(|(p, _)| p))
        .or_else(|| mean_xy(&mut points.iter().filter(|p| in_slice(p))))
        .unwrap_or_else(|| {
            let mut order: Vec<usize> = (0..points.len()).collect();
            order.sort_by(|&a, &b| points[a].z.partial_cmp(&points[b].z).unwrap().then(a.cmp(&b)));
            let take = points.len().div_ceil(10);
            mean_xy(&mut order[..take].iter().map(|&i| &points[i])).expect("non-empty")
        });
    Ok(TreeBase { x: xy.0, y: xy.1, z: z_min.as_f64() + BASE_HEIGHT })
}

/// Bases for every labeled tree of a cloud.
pub fn compute_tree_bases<T: Scalar>(cloud: &PointCloud<T>, verticality: &[T]) -> Result<BTreeMap<u32, TreeBase>> {
    if cloud.labels().is_none() {
        return Err(Error::MissingLabels("tree bases need labeled points".into()));
    }
    crate::cloud::check_len(cloud.len(), verticality.len())?;
    cloud
        .tree_members()
        .into_iter()
        .map(|(id, members)| {
            let pts: Vec<_> = members.iter().map(|&i| cloud.points()[i]).collect();
            let vert: Vec<_> = members.iter().map(|&i| verticality[i]).collect();
            Ok((id, tree_base(&pts, &vert)?))
        })
        .collect()
}

/// Ground-truth offset `base - p` for every tree point; zero elsewhere.
pub fn ground_truth_offsets<T: Scalar>(
    cloud: &PointCloud<T>,
    bases: &BTreeMap<u32, TreeBase>,
) -> Result<Vec<Point3<T>>> {
    let labels = cloud.labels().ok_or_else(|| Error::MissingLabels("offset targets".into()))?;
    cloud
        .points()
        .iter()
        .zip(labels)
        .map(|(p, l)| match l {
            PointLabel::Tree(id) => {
                let b = bases.get(id).ok_or(Error::MissingBase { tree_id: *id })?;
                Ok(b.point::<T>() - *p)
            }
            _ => Ok(Point3::zero()),
        })
        .collect()
}

/// Perturbation applied by the oracle predictor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleNoise {
    /// Standard deviation of the Gaussian added to each offset component (m).
    pub offset_sigma: f64,
    /// Probability of flipping the tree probability `p -> 1 - p`.
    pub label_flip_prob: f64,
    pub seed: u64,
    /// When set, the xy part of every noise draw is redrawn until its length is
    /// at most this value (truncated Gaussian).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_xy_displacement: Option<f64>,
}

impl Default for OracleNoise {
    fn default() -> Self {
        Self { offset_sigma: 0.0, label_flip_prob: 0.0, seed: 0, max_xy_displacement: None }
    }
}

impl OracleNoise {
    pub fn validate(&self) -> Result<()> {
        if !(self.offset_sigma >= 0.0) || !self.offset_sigma.is_finite() {
            return Err(Error::InvalidParameter(format!("offset sigma must be >= 0, got {}", self.offset_sigma)));
        }
        if !(0.0..=1.0).contains(&self.label_flip_prob) {
            return Err(Error::InvalidParameter(format!("flip probability must be in [0, 1], got {}", self.label_flip_prob)));
        }
        if let Some(m) = self.max_xy_displacement {
            if !(m > 0.0) {
                return Err(Error::InvalidParameter(format!("max displacement must be > 0, got {m}")));
            }
        }
        Ok(())
    }

    /// Per-tile random stream derived from `(seed, tile id)`.
    pub fn rng_for_tile(&self, tile_id: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(tile_id as u64);
        rng
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> (bool, [f64; 3]) {
        let flip = rng.gen::<f64>() < self.label_flip_prob;
        let mut n = [0.0f64; 3];
        for v in n.iter_mut() {
            *v = rng.sample::<f64, _>(StandardNormal) * self.offset_sigma;
        }
        if let Some(max) = self.max_xy_displacement {
            let mut attempts = 0;
            while (n[0] * n[0] + n[1] * n[1]).sqrt() > max {
                attempts += 1;
                if attempts > 64 {
                    let s = max / (n[0] * n[0] + n[1] * n[1]).sqrt();
                    n[0] *= s;
                    n[1] *= s;
                    break;
                }
                n[0] = rng.sample::<f64, _>(StandardNormal) * self.offset_sigma;
                n[1] = rng.sample::<f64, _>(StandardNormal) * self.offset_sigma;
            }
        }
        (flip, n)
    }
}

/// Oracle predictions for the inner points of a tile from ground-truth labels.
///
/// Tree points get `p = 1` and `offset = base - p`; non-tree points `p = 0` and
/// a zero offset; non-annotated points `p = 0.5` and a zero offset. Noise is
/// drawn per inner point in ascending index order from the tile's stream:
/// flips apply to annotated points, offset noise to tree points.
pub fn oracle_predict<T: Scalar>(
    tile: &TileView<T>,
    cloud: &PointCloud<T>,
    bases: &BTreeMap<u32, TreeBase>,
    noise: &OracleNoise,
) -> Result<TilePrediction<T>> {
    let labels = cloud.labels().ok_or_else(|| Error::MissingLabels("oracle predictor".into()))?;
    let mut rng = noise.rng_for_tile(tile.spec.id);
    let inner = tile.inner_indices();
    let mut p_tree = Vec::with_capacity(inner.len());
    let mut offset = Vec::with_capacity(inner.len());
    for i in inner {
        let p = cloud.points()[i];
        let (flip, n) = noise.draw(&mut rng);
        let (prob, off) = match labels[i] {
            PointLabel::Tree(id) => {
                let b = bases.get(&id).ok_or(Error::MissingBase { tree_id: id })?;
                let o = b.point::<T>() - p + Point3::from_f64(n[0], n[1], n[2]);
                (T::one(), o)
            }
            PointLabel::NonTree => (T::zero(), Point3::zero()),
            PointLabel::NonAnnotated => (T::lit(0.5), Point3::zero()),
        };
        let prob = if flip && labels[i].is_annotated() { T::one() - prob } else { prob };
        p_tree.push(prob);
        offset.push(off);
    }
    Ok(TilePrediction { p_tree, offset })
}

const PRED_MAGIC: &[u8; 4] = b"FPRD";
const PRED_VERSION: u16 = 1;
const PRED_HEADER_LEN: u64 = 4 + 2 + 8 + 8;

/// Writes `FPRD` v1: magic, u16 version, u64 count, u64 digest, then per point
/// f32 p_tree followed by three f32 offset components, little-endian.
pub fn save_predictions<T: Scalar>(field: &PredictionField<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_predictions(field, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_predictions<T: Scalar, W: Write>(field: &PredictionField<T>, w: &mut W) -> Result<()> {
    w.write_all(PRED_MAGIC)?;
    w.write_u16::<LittleEndian>(PRED_VERSION)?;
    w.write_u64::<LittleEndian>(field.alignment.count)?;
    w.write_u64::<LittleEndian>(field.alignment.digest)?;
    for (p, o) in field.p_tree.iter().zip(&field.offset) {
        for v in [p.as_f64(), o.x.as_f64(), o.y.as_f64(), o.z.as_f64()] {
            w.write_f32::<LittleEndian>(v as f32)?;
        }
    }
    Ok(())
}

/// Reads a prediction file and checks it against the target points.
pub fn load_predictions<T: Scalar>(path: impl AsRef<Path>, points: &[Point3<T>]) -> Result<PredictionField<T>> {
    let field = read_predictions(&mut BufReader::new(File::open(path)?))?;
    field.check_aligned(points)?;
    Ok(field)
}

/// Reads a prediction file without an alignment check.
pub fn read_predictions<T: Scalar, R: Read>(r: &mut R) -> Result<PredictionField<T>> {
    let fmt = |offset: u64, message: &str| Error::Format { offset, message: message.to_string() };
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| fmt(0, "truncated header"))?;
    if &magic != PRED_MAGIC {
        return Err(fmt(0, "bad magic, expected FPRD"));
    }
    let version = r.read_u16::<LittleEndian>().map_err(|_| fmt(4, "truncated header"))?;
    if version != PRED_VERSION {
        return Err(fmt(4, &format!("unsupported version {version}")));
    }
    let count = r.read_u64::<LittleEndian>().map_err(|_| fmt(6, "truncated header"))?;
    let digest = r.read_u64::<LittleEndian>().map_err(|_| fmt(14, "truncated header"))?;
    let mut p_tree = Vec::with_capacity(count.min(1 << 26) as usize);
    let mut offset = Vec::with_capacity(count.min(1 << 26) as usize);
    for i in 0..count {
        let at = PRED_HEADER_LEN + i * 16;
        let mut v = [0f32; 4];
        r.read_f32_into::<LittleEndian>(&mut v).map_err(|_| fmt(at, &format!("truncated record {i}")))?;
        p_tree.push(T::lit(v[0] as f64));
        offset.push(Point3::from_f64(v[1] as f64, v[2] as f64, v[3] as f64));
    }
    PredictionField::new(p_tree, offset, Alignment { count, digest })
}
