//! Overlapping square tiles with an inner prediction region, and merging of
//! per-tile predictions into one field over the whole cloud.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::predictor::{Alignment, PredictionField};
use crate::{point, Error, Point3, PointCloud, Result, Scalar};

/// Tile geometry defaults in meters.
pub const DEFAULT_OUTER_EDGE: f64 = 35.0;
pub const DEFAULT_INNER_EDGE: f64 = 8.0;
pub const DEFAULT_STRIDE: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TileParams {
    pub outer_edge: f64,
    pub inner_edge: f64,
    pub stride: f64,
}

impl Default for TileParams {
    fn default() -> Self {
        Self { outer_edge: DEFAULT_OUTER_EDGE, inner_edge: DEFAULT_INNER_EDGE, stride: DEFAULT_STRIDE }
    }
}

impl TileParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.stride > 0.0 && self.stride <= self.inner_edge && self.inner_edge <= self.outer_edge;
        if !ok || !self.outer_edge.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "tile sizes must satisfy 0 < stride <= inner <= outer, got stride {} inner {} outer {}",
                self.stride, self.inner_edge, self.outer_edge
            )));
        }
        Ok(())
    }
}

/// One tile: an outer context square with a centred inner prediction square.
/// Squares are half-open, `[lo, lo + edge)` on both axes; z is unbounded.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TileSpec<T> {
    pub id: usize,
    pub outer_origin: [T; 2],
    pub outer_edge: T,
    pub inner_origin: [T; 2],
    pub inner_edge: T,
    pub stride: T,
}

impl<T: Scalar> TileSpec<T> {
    #[inline]
    pub fn in_outer(&self, p: &Point3<T>) -> bool {
        in_square(p, self.outer_origin, self.outer_edge)
    }

    #[inline]
    pub fn in_inner(&self, p: &Point3<T>) -> bool {
        in_square(p, self.inner_origin, self.inner_edge)
    }
}

#[inline]
fn in_square<T: Scalar>(p: &Point3<T>, origin: [T; 2], edge: T) -> bool {
    p.x >= origin[0] && p.x < origin[0] + edge && p.y >= origin[1] && p.y < origin[1] + edge
}

/// Points of a cloud inside one tile.
#[derive(Clone, Debug, PartialEq)]
pub struct TileView<T> {
    pub spec: TileSpec<T>,
    /// Cloud indices inside the outer square, ascending.
    pub point_indices: Vec<usize>,
    /// Per entry of `point_indices`: inside the inner square.
    pub inner_mask: Vec<bool>,
}

impl<T: Scalar> TileView<T> {
    /// Cloud indices of the inner-square points, ascending.
    pub fn inner_indices(&self) -> Vec<usize> {
        self.point_indices.iter().zip(&self.inner_mask).filter(|(_, m)| **m).map(|(i, _)| *i).collect()
    }

    pub fn inner_count(&self) -> usize {
        self.inner_mask.iter().filter(|m| **m).count()
    }
}

/// Lays inner squares on a stride lattice anchored at the xy bounding-box
/// minimum and keeps the tiles whose inner square holds at least one point.
/// Ids are assigned in row-major order (y outer, x inner) after dropping.
pub fn generate_tiles<T: Scalar>(cloud: &PointCloud<T>, params: &TileParams) -> Result<Vec<TileSpec<T>>> {
    params.validate()?;
    let (lo, hi) = point::bounds(cloud.points()).ok_or(Error::EmptyInput)?;
    let stride = T::lit(params.stride);
    let inner = T::lit(params.inner_edge);
    let outer = T::lit(params.outer_edge);
    let margin = (outer - inner) / T::lit(2.0);
    // smallest count n with (n - 1) * stride + inner > extent
    let count = |extent: T| -> usize {
        if extent < inner {
            1
        } else {
            ((extent - inner) / stride).floor().to_usize().unwrap_or(0) + 2
        }
    };
    let nx = count(hi.x - lo.x);
    let ny = count(hi.y - lo.y);
    let mut occupied = vec![false; nx * ny];
    for p in cloud.points() {
        let fx = ((p.x - lo.x) / stride).floor().to_usize().unwrap_or(0);
        let fy = ((p.y - lo.y) / stride).floor().to_usize().unwrap_or(0);
        // all lattice squares that may contain p
        let span = (params.inner_edge / params.stride).ceil() as usize + 1;
        for iy in fy.saturating_sub(span)..=(fy + 1).min(ny - 1) {
            for ix in fx.saturating_sub(span)..=(fx + 1).min(nx - 1) {
                let origin = [lo.x + T::lit(ix as f64) * stride, lo.y + T::lit(iy as f64) * stride];
                if in_square(p, origin, inner) {
                    occupied[iy * nx + ix] = true;
                }
            }
        }
    }
    let mut tiles = Vec::new();
    for iy in 0..ny {
        for ix in 0..nx {
            if !occupied[iy * nx + ix] {
                continue;
            }
            let inner_origin = [lo.x + T::lit(ix as f64) * stride, lo.y + T::lit(iy as f64) * stride];
            tiles.push(TileSpec {
                id: tiles.len(),
                outer_origin: [inner_origin[0] - margin, inner_origin[1] - margin],
                outer_edge: outer,
                inner_origin,
                inner_edge: inner,
                stride,
            });
        }
    }
    Ok(tiles)
}

pub fn crop_tile<T: Scalar>(cloud: &PointCloud<T>, spec: &TileSpec<T>) -> TileView<T> {
    let mut point_indices = Vec::new();
    let mut inner_mask = Vec::new();
    for (i, p) in cloud.points().iter().enumerate() {
        if spec.in_outer(p) {
            point_indices.push(i);
            inner_mask.push(spec.in_inner(p));
        }
    }
    TileView { spec: *spec, point_indices, inner_mask }
}

/// Predictions for the inner points of one tile, in ascending cloud-index order.
#[derive(Clone, Debug, PartialEq)]
pub struct TilePrediction<T> {
    pub p_tree: Vec<T>,
    pub offset: Vec<Point3<T>>,
}

/// Running per-point means of tile predictions. Tiles must be added in
/// ascending id order for the result to be reproducible bit for bit.
///
/// The incremental form `m += (x - m) / k` returns a constant input unchanged.
#[derive(Clone, Debug)]
pub struct PredictionAccumulator<T> {
    mean_p: Vec<T>,
    mean_offset: Vec<Point3<T>>,
    count: Vec<u32>,
}

impl<T: Scalar> PredictionAccumulator<T> {
    pub fn new(n_points: usize) -> Self {
        Self { mean_p: vec![T::zero(); n_points], mean_offset: vec![Point3::zero(); n_points], count: vec![0; n_points] }
    }

    pub fn add(&mut self, inner_indices: &[usize], pred: &TilePrediction<T>) -> Result<()> {
        crate::cloud::check_len(inner_indices.len(), pred.p_tree.len())?;
        crate::cloud::check_len(inner_indices.len(), pred.offset.len())?;
        for (k, &i) in inner_indices.iter().enumerate() {
            self.count[i] += 1;
            let w = T::one() / T::lit(self.count[i] as f64);
            let (mp, mo) = (self.mean_p[i], self.mean_offset[i]);
            self.mean_p[i] = mp + (pred.p_tree[k] - mp) * w;
            self.mean_offset[i] = mo + (pred.offset[k] - mo) * w;
        }
        Ok(())
    }

    /// Per-point coverage counts.
    pub fn counts(&self) -> &[u32] {
        &self.count
    }

    pub fn finish(self, alignment: Alignment) -> Result<PredictionField<T>> {
        let uncovered: Vec<usize> = self.count.iter().enumerate().filter(|(_, c)| **c == 0).map(|(i, _)| i).collect();
        if !uncovered.is_empty() {
            return Err(Error::UncoveredPoints(uncovered));
        }
        PredictionField::new(self.mean_p, self.mean_offset, alignment)
    }
}

/// Averages all per-tile predictions covering each point. Tile order in the
/// input does not matter; accumulation follows ascending tile id.
pub fn merge_predictions<T: Scalar>(
    cloud: &PointCloud<T>,
    tile_results: &[(TileView<T>, TilePrediction<T>)],
) -> Result<PredictionField<T>> {
    let mut order: Vec<usize> = (0..tile_results.len()).collect();
    order.sort_by_key(|&i| tile_results[i].0.spec.id);
    let mut acc = PredictionAccumulator::new(cloud.len());
    for i in order {
        let (view, pred) = &tile_results[i];
        acc.add(&view.inner_indices(), pred)?;
    }
    acc.finish(Alignment::of(cloud.points()))
}

/// Offset-projected coordinates `p + o`.
pub fn project<T: Scalar>(cloud: &PointCloud<T>, field: &PredictionField<T>) -> Result<Vec<Point3<T>>> {
    crate::cloud::check_len(cloud.len(), field.len())?;
    Ok(cloud.points().iter().zip(field.offset()).map(|(p, o)| *p + *o).collect())
}

/// Text manifest: one line per tile with bounds and point counts.
pub fn tile_manifest<T: Scalar>(views: &[TileView<T>]) -> String {
    let mut s = String::from("# id outer_xmin outer_ymin outer_xmax outer_ymax inner_xmin inner_ymin inner_xmax inner_ymax n_outer n_inner\n");
    for v in views {
        let t = &v.spec;
        let _ = writeln!(
            s,
            "{} {} {} {} {} {} {} {} {} {} {}",
            t.id,
            t.outer_origin[0],
            t.outer_origin[1],
            t.outer_origin[0] + t.outer_edge,
            t.outer_origin[1] + t.outer_edge,
            t.inner_origin[0],
            t.inner_origin[1],
            t.inner_origin[0] + t.inner_edge,
            t.inner_origin[1] + t.inner_edge,
            v.point_indices.len(),
            v.inner_count()
        );
    }
    s
}
