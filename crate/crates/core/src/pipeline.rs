//! End-to-end segmentation: subsample, verticality, tiling, per-tile
//! prediction, merge and projection, clustering, assignment and propagation
//! back to the input cloud. Also the grouping-radius sweep.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assigner::{assign_remaining, finalize, AssignParams, InstanceMap};
use crate::cloud::{voxel_subsample, VoxelIndexMap};
use crate::clusterer::{connected_components, select_cluster_points, ClusterParams, ClusterResult};
use crate::features::{verticality, DEFAULT_VERTICALITY_RADIUS};
use crate::metrics::{evaluate_labels, EVAL_VOXEL_SIZE};
use crate::predictor::{compute_tree_bases, load_predictions, oracle_predict, OracleNoise};
use crate::tiler::{crop_tile, generate_tiles, merge_predictions, project, TileParams, TilePrediction, TileView};
use crate::{Error, Point3, PointCloud, PointLabel, PredictionField, Result, Scalar, TreeBase};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineParams {
    pub voxel_size: f64,
    pub verticality_radius: f64,
    pub tiles: TileParams,
    pub cluster: ClusterParams,
    /// Neighbours voting in the assignment step.
    pub k: usize,
    /// Assignment vote on 3D projected coordinates instead of xy.
    pub assign_3d: bool,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            voxel_size: 0.1,
            verticality_radius: DEFAULT_VERTICALITY_RADIUS,
            tiles: TileParams::default(),
            cluster: ClusterParams::default(),
            k: crate::assigner::DEFAULT_K,
            assign_3d: false,
        }
    }
}

impl PipelineParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.voxel_size > 0.0) || !(self.verticality_radius > 0.0) {
            return Err(Error::InvalidParameter("voxel size and verticality radius must be positive".into()));
        }
        if self.k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        self.tiles.validate()?;
        self.cluster.validate()
    }

    pub fn assign(&self) -> AssignParams {
        AssignParams { k: self.k, use_3d: self.assign_3d, tree_threshold: self.cluster.tree_threshold }
    }
}

/// Source of per-tile predictions.
pub trait TilePredictor<T: Scalar>: Sync {
    fn name(&self) -> &'static str;

    /// Called once with the subsampled cloud before any tile is predicted.
    fn prepare(&mut self, _cloud: &PointCloud<T>, _verticality: &[T]) -> Result<()> {
        Ok(())
    }

    /// Predictions for the inner points of `tile`, in ascending index order.
    fn predict(&self, tile: &TileView<T>, cloud: &PointCloud<T>) -> Result<TilePrediction<T>>;
}

/// Predictions derived from ground-truth labels.
#[derive(Clone, Debug, Default)]
pub struct OraclePredictor {
    pub noise: OracleNoise,
    /// Tree bases; computed from the subsampled cloud when not given.
    pub bases: Option<BTreeMap<u32, TreeBase>>,
}

impl OraclePredictor {
    pub fn new(noise: OracleNoise) -> Self {
        Self { noise, bases: None }
    }
}

impl<T: Scalar> TilePredictor<T> for OraclePredictor {
    fn name(&self) -> &'static str {
        "oracle"
    }

    fn prepare(&mut self, cloud: &PointCloud<T>, verticality: &[T]) -> Result<()> {
        self.noise.validate()?;
        if self.bases.is_none() {
            self.bases = Some(compute_tree_bases(cloud, verticality)?);
        }
        Ok(())
    }

    fn predict(&self, tile: &TileView<T>, cloud: &PointCloud<T>) -> Result<TilePrediction<T>> {
        let bases = self.bases.as_ref().ok_or_else(|| Error::InvalidParameter("oracle used before prepare".into()))?;
        oracle_predict(tile, cloud, bases, &self.noise)
    }
}

/// Predictions read from one file per tile, listed in a manifest of
/// `tile_id path` lines (`#` starts a comment; relative paths resolve against
/// the manifest directory). Each file holds the tile's inner points.
#[derive(Clone, Debug, PartialEq)]
pub struct FilePredictor {
    pub files: BTreeMap<usize, PathBuf>,
}

impl FilePredictor {
    pub fn from_manifest(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        Self::parse_manifest(&text, dir)
    }

    pub fn parse_manifest(text: &str, dir: &Path) -> Result<Self> {
        let mut files = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse { line: n + 1, message };
            let mut it = line.split_whitespace();
            let (Some(id), Some(file), None) = (it.next(), it.next(), it.next()) else {
                return Err(err("expected `tile_id path`".into()));
            };
            let id: usize = id.parse().map_err(|_| err(format!("invalid tile id `{id}`")))?;
            if files.insert(id, dir.join(file)).is_some() {
                return Err(err(format!("tile {id} listed twice")));
            }
        }
        Ok(Self { files })
    }

    /// Manifest text for `files`, paths written as given.
    pub fn manifest_text(files: &BTreeMap<usize, PathBuf>) -> String {
        let mut s = String::from("# tile_id path\n");
        for (id, p) in files {
            let _ = writeln!(s, "{id} {}", p.display());
        }
        s
    }
}

impl<T: Scalar> TilePredictor<T> for FilePredictor {
    fn name(&self) -> &'static str {
        "files"
    }

    fn predict(&self, tile: &TileView<T>, cloud: &PointCloud<T>) -> Result<TilePrediction<T>> {
        let path = self.files.get(&tile.spec.id).ok_or(Error::MissingTile(tile.spec.id))?;
        let inner: Vec<Point3<T>> = tile.inner_indices().iter().map(|&i| cloud.points()[i]).collect();
        let field: PredictionField<T> = load_predictions(path, &inner)?;
        Ok(TilePrediction { p_tree: field.p_tree().to_vec(), offset: field.offset().to_vec() })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageTiming {
    pub stage: &'static str,
    pub seconds: f64,
}

/// Everything computed by one run. Per-point vectors other than `instances`
/// refer to the subsampled cloud.
#[derive(Clone, Debug)]
pub struct PipelineOutput<T> {
    pub subsampled: PointCloud<T>,
    pub voxels: VoxelIndexMap,
    pub verticality: Vec<T>,
    pub tiles: usize,
    pub field: PredictionField<T>,
    pub projected: Vec<Point3<T>>,
    /// Subsampled indices passing the trunk-point filter.
    pub selected: Vec<usize>,
    /// Clusters over `selected`.
    pub clusters: ClusterResult,
    pub sub_instances: InstanceMap,
    /// Final labels of the input cloud.
    pub instances: InstanceMap,
    pub timings: Vec<StageTiming>,
}

impl<T: Scalar> PipelineOutput<T> {
    /// The input points carrying the predicted labels.
    pub fn labeled_cloud(&self, input: &PointCloud<T>) -> Result<PointCloud<T>> {
        let mut out = PointCloud::new(input.points().to_vec())?;
        out.set_labels(self.instances.labels.clone())?;
        Ok(out)
    }

    pub fn n_instances(&self) -> usize {
        self.clusters.clusters.len()
    }
}

struct Stages(Vec<StageTiming>);

impl Stages {
    fn run<R>(&mut self, stage: &'static str, f: impl FnOnce() -> Result<R>) -> Result<R> {
        let start = Instant::now();
        let r = f().map_err(|e| e.in_stage(stage))?;
        let seconds = start.elapsed().as_secs_f64();
        info!("{stage}: {seconds:.3} s");
        self.0.push(StageTiming { stage, seconds });
        Ok(r)
    }
}

/// Cluster ids over the whole subsampled cloud from clusters over `selected`.
fn scatter_clusters(n: usize, selected: &[usize], clusters: &ClusterResult) -> Vec<u32> {
    let mut out = vec![0u32; n];
    for (k, &i) in selected.iter().enumerate() {
        out[i] = clusters.cluster_id[k];
    }
    out
}

pub fn run_pipeline<T: Scalar>(
    cloud: &PointCloud<T>,
    params: &PipelineParams,
    predictor: &mut dyn TilePredictor<T>,
) -> Result<PipelineOutput<T>> {
    params.validate()?;
    let mut st = Stages(Vec::new());
    let (sub, voxels) = st.run("subsample", || voxel_subsample(cloud, T::lit(params.voxel_size)))?;
    let vert = st.run("verticality", || verticality(&sub, T::lit(params.verticality_radius)))?;
    let specs = st.run("tile", || generate_tiles(&sub, &params.tiles))?;
    st.run("prepare", || predictor.prepare(&sub, &vert))?;
    let predictor: &dyn TilePredictor<T> = predictor;
    let results = st.run("predict", || {
        let all: Vec<Result<(TileView<T>, TilePrediction<T>)>> = specs
            .par_iter()
            .map(|spec| {
                let view = crop_tile(&sub, spec);
                let pred = predictor.predict(&view, &sub)?;
                Ok((view, pred))
            })
            .collect();
        // report the error of the lowest tile id
        all.into_iter().collect::<Result<Vec<_>>>()
    })?;
    let field = st.run("merge", || merge_predictions(&sub, &results))?;
    drop(results);
    let projected = st.run("project", || project(&sub, &field))?;
    let (selected, clusters) = st.run("cluster", || {
        let selected = select_cluster_points(&field, &vert, &params.cluster)?;
        let pts: Vec<Point3<T>> = selected.iter().map(|&i| projected[i]).collect();
        let clusters = connected_components(&pts, &params.cluster)?;
        Ok((selected, clusters))
    })?;
    let sub_instances = st.run("assign", || {
        let cluster_of = scatter_clusters(sub.len(), &selected, &clusters);
        assign_remaining(&projected, field.p_tree(), &cluster_of, &params.assign())
    })?;
    let instances = st.run("finalize", || finalize(&sub_instances, &voxels))?;
    Ok(PipelineOutput {
        tiles: specs.len(),
        subsampled: sub,
        voxels,
        verticality: vert,
        field,
        projected,
        selected,
        clusters,
        sub_instances,
        instances,
        timings: st.0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub radius: f64,
    pub raw_components: usize,
    pub clusters: usize,
    /// Present when ground truth is available.
    pub omission: Option<f64>,
    pub commission: Option<f64>,
}

/// Ground truth prepared once for repeated evaluation of label sets that live
/// on the pipeline's subsampled cloud.
struct SweepTruth<T> {
    points: Vec<Point3<T>>,
    gt: Vec<PointLabel>,
    /// Per evaluation point: subsampled index in the pipeline output.
    sub_index: Vec<usize>,
}

impl<T: Scalar> SweepTruth<T> {
    fn new(truth: &PointCloud<T>, out: &PipelineOutput<T>) -> Result<Self> {
        let labels = truth.labels().ok_or_else(|| Error::MissingLabels("sweep ground truth".into()))?;
        crate::cloud::check_len(out.voxels.original_len(), truth.len())?;
        let (sub, map) = voxel_subsample(truth, T::lit(EVAL_VOXEL_SIZE))?;
        Ok(Self {
            points: sub.points().to_vec(),
            gt: map.kept.iter().map(|&i| labels[i]).collect(),
            sub_index: map.kept.iter().map(|&i| out.voxels.representative_of[i]).collect(),
        })
    }

    fn errors(&self, sub_labels: &[PointLabel]) -> Result<(f64, f64)> {
        let pred: Vec<PointLabel> = self.sub_index.iter().map(|&s| sub_labels[s]).collect();
        let r = evaluate_labels(&self.points, &self.gt, &pred, None)?;
        Ok((r.detection.omission, r.detection.commission))
    }
}

/// Re-clusters and re-assigns the stored prediction field for every radius.
/// With a labeled `truth` (the pipeline input) rows carry omission and
/// commission errors. A radius yielding no cluster labels every point non-tree.
pub fn sweep_grouping_radius<T: Scalar>(
    out: &PipelineOutput<T>,
    truth: Option<&PointCloud<T>>,
    params: &PipelineParams,
    radii: &[f64],
) -> Result<Vec<SweepRow>> {
    if radii.is_empty() {
        return Err(Error::InvalidParameter("empty radius list".into()));
    }
    let truth = truth.map(|t| SweepTruth::new(t, out)).transpose()?;
    let pts: Vec<Point3<T>> = out.selected.iter().map(|&i| out.projected[i]).collect();
    radii
        .iter()
        .map(|&radius| {
            let cp = ClusterParams { group_radius: radius, ..params.cluster };
            cp.validate()?;
            let clusters = connected_components(&pts, &cp)?;
            let (omission, commission) = match &truth {
                None => (None, None),
                Some(t) => {
                    let labels = if clusters.clusters.is_empty() {
                        vec![PointLabel::NonTree; out.subsampled.len()]
                    } else {
                        let cluster_of = scatter_clusters(out.subsampled.len(), &out.selected, &clusters);
                        assign_remaining(&out.projected, out.field.p_tree(), &cluster_of, &params.assign())?.labels
                    };
                    let (o, c) = t.errors(&labels)?;
                    (Some(o), Some(c))
                }
            };
            Ok(SweepRow {
                radius,
                raw_components: clusters.raw_components,
                clusters: clusters.clusters.len(),
                omission,
                commission,
            })
        })
        .collect()
}

/// `radius,raw_components,clusters[,omission,commission]` with a header.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let with_errors = rows.iter().all(|r| r.omission.is_some());
    let mut s = String::from("radius,raw_components,clusters");
    s.push_str(if with_errors { ",omission,commission\n" } else { "\n" });
    for r in rows {
        let _ = write!(s, "{},{},{}", r.radius, r.raw_components, r.clusters);
        match (with_errors, r.omission, r.commission) {
            (true, Some(o), Some(c)) => {
                let _ = writeln!(s, ",{o},{c}");
            }
            _ => s.push('\n'),
        }
    }
    s
}

/// `n` evenly spaced radii from `a` to `b` inclusive.
pub fn radius_range(a: f64, b: f64, n: usize) -> Result<Vec<f64>> {
    if n == 0 || !(a > 0.0) || !(b >= a) {
        return Err(Error::InvalidParameter(format!("invalid radius range {a}:{b}:{n}")));
    }
    if n == 1 {
        return Ok(vec![a]);
    }
    Ok((0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::save_predictions;
    use crate::synthetic::{generate_forest, ForestSpec};
    use crate::Alignment;

    fn small_forest(n: usize, seed: u64) -> PointCloud<f64> {
        let spec = ForestSpec {
            n_trees: n,
            extent: 20.0,
            crown_density: 20.0,
            ground_density: 50.0,
            crown_radius: [1.5, 3.0],
            seed,
            ..ForestSpec::default()
        };
        generate_forest::<f64>(&spec).unwrap().cloud
    }

    fn run_oracle(cloud: &PointCloud<f64>, noise: OracleNoise) -> PipelineOutput<f64> {
        run_pipeline(cloud, &PipelineParams::default(), &mut OraclePredictor::new(noise)).unwrap()
    }

    #[test]
    fn oracle_run_finds_every_tree() {
        let cloud = small_forest(8, 1);
        let out = run_oracle(&cloud, OracleNoise::default());
        assert_eq!(out.n_instances(), 8);
        assert_eq!(out.instances.len(), cloud.len());
        let stages: Vec<_> = out.timings.iter().map(|t| t.stage).collect();
        assert_eq!(stages, ["subsample", "verticality", "tile", "prepare", "predict", "merge", "project", "cluster", "assign", "finalize"]);
        let labeled = out.labeled_cloud(&cloud).unwrap();
        let r = crate::metrics::evaluate_labels(labeled.points(), cloud.labels().unwrap(), labeled.labels().unwrap(), None).unwrap();
        assert_eq!(r.detection.completeness, 1.0);
        assert_eq!(r.detection.commission, 0.0);
        assert!(r.segmentation.coverage > 0.99, "{}", r.segmentation.coverage);
    }

    #[test]
    fn oracle_run_is_repeatable() {
        let cloud = small_forest(4, 2);
        let noise = OracleNoise { offset_sigma: 0.05, label_flip_prob: 0.01, seed: 7, max_xy_displacement: None };
        let a = run_oracle(&cloud, noise);
        let b = run_oracle(&cloud, noise);
        assert_eq!(a.instances, b.instances);
        assert_eq!(a.field, b.field);
    }

    #[test]
    fn file_predictor_round_trip_and_missing_tile() {
        let cloud = small_forest(3, 3);
        let oracle = run_oracle(&cloud, OracleNoise::default());
        let dir = tempfile::tempdir().unwrap();
        // write the oracle's per-tile predictions as files
        let specs = generate_tiles(&oracle.subsampled, &TileParams::default()).unwrap();
        let mut pred = OraclePredictor::new(OracleNoise::default());
        TilePredictor::<f64>::prepare(&mut pred, &oracle.subsampled, &oracle.verticality).unwrap();
        let mut files = BTreeMap::new();
        for spec in &specs {
            let view = crop_tile(&oracle.subsampled, spec);
            let p = pred.predict(&view, &oracle.subsampled).unwrap();
            let inner: Vec<_> = view.inner_indices().iter().map(|&i| oracle.subsampled.points()[i]).collect();
            let field = PredictionField::new(p.p_tree, p.offset, Alignment::of(&inner)).unwrap();
            let name = format!("tile_{}.fprd", spec.id);
            save_predictions(&field, dir.path().join(&name)).unwrap();
            files.insert(spec.id, PathBuf::from(name));
        }
        let manifest = dir.path().join("predictions.txt");
        std::fs::write(&manifest, FilePredictor::manifest_text(&files)).unwrap();
        let mut fp = FilePredictor::from_manifest(&manifest).unwrap();
        let out = run_pipeline(&cloud, &PipelineParams::default(), &mut fp).unwrap();
        // f32 storage rounds offsets, so the partition matches but fields differ slightly
        assert_eq!(out.n_instances(), oracle.n_instances());
        assert_eq!(out.instances.labels, oracle.instances.labels);

        let missing = *files.keys().nth(1).unwrap();
        files.remove(&missing);
        std::fs::write(&manifest, FilePredictor::manifest_text(&files)).unwrap();
        let mut fp = FilePredictor::from_manifest(&manifest).unwrap();
        match run_pipeline(&cloud, &PipelineParams::default(), &mut fp) {
            Err(Error::Stage { stage: "predict", source }) => {
                assert!(matches!(*source, Error::MissingTile(id) if id == missing));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn manifest_parsing() {
        let fp = FilePredictor::parse_manifest("# c\n3 a.fprd\n\n7 sub/b.fprd # x\n", Path::new("/d")).unwrap();
        assert_eq!(fp.files[&7], PathBuf::from("/d/sub/b.fprd"));
        assert!(matches!(FilePredictor::parse_manifest("3 a\n3 b\n", Path::new(".")), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(FilePredictor::parse_manifest("x a\n", Path::new(".")), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn oracle_without_labels_fails_in_prepare() {
        let cloud = PointCloud::new(small_forest(1, 4).points().to_vec()).unwrap();
        let err = run_pipeline(&cloud, &PipelineParams::default(), &mut OraclePredictor::default()).unwrap_err();
        assert!(matches!(err, Error::Stage { stage: "prepare", .. }));
        assert!(err.to_string().contains("prepare"));
    }

    #[test]
    fn sweep_single_radius_equals_plain_run() {
        let cloud = small_forest(5, 5);
        let noise = OracleNoise { offset_sigma: 0.03, seed: 2, ..OracleNoise::default() };
        let out = run_oracle(&cloud, noise);
        let rows = sweep_grouping_radius(&out, Some(&cloud), &PipelineParams::default(), &[0.15]).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].raw_components, out.clusters.raw_components);
        assert_eq!(rows[0].clusters, out.n_instances());
        let labeled = out.labeled_cloud(&cloud).unwrap();
        let pair = crate::metrics::eval_subsample(&cloud, &labeled, EVAL_VOXEL_SIZE).unwrap();
        let r = evaluate_labels(&pair.points, &pair.gt, &pair.pred, None).unwrap();
        assert_eq!(rows[0].omission, Some(r.detection.omission));
        assert_eq!(rows[0].commission, Some(r.detection.commission));
        assert!(sweep_grouping_radius(&out, None, &PipelineParams::default(), &[]).is_err());
    }

    #[test]
    fn sweep_is_monotone_and_csv_shaped() {
        let cloud = small_forest(6, 6);
        let out = run_oracle(&cloud, OracleNoise { offset_sigma: 0.05, seed: 1, ..OracleNoise::default() });
        let radii = radius_range(0.025, 0.7, 28).unwrap();
        let rows = sweep_grouping_radius(&out, Some(&cloud), &PipelineParams::default(), &radii).unwrap();
        assert!(rows.windows(2).all(|w| w[1].raw_components <= w[0].raw_components));
        let csv = sweep_csv(&rows);
        assert_eq!(csv.lines().count(), 29);
        assert!(csv.starts_with("radius,raw_components,clusters,omission,commission\n"));
        let plain = sweep_grouping_radius(&out, None, &PipelineParams::default(), &radii[..2]).unwrap();
        assert_eq!(sweep_csv(&plain).lines().next(), Some("radius,raw_components,clusters"));
    }

    #[test]
    fn radius_range_endpoints() {
        let r = radius_range(0.025, 0.7, 28).unwrap();
        assert_eq!((r.len(), r[0], r[27]), (28, 0.025, 0.7));
        assert!(radius_range(0.1, 0.05, 3).is_err());
    }
}
