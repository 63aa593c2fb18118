//! Command-line front end: segmentation runs, evaluation, radius sweeps,
//! label propagation, synthetic forests and small cloud tools.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data errors.

mod manifest;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use forestseg::cloud::statistical_outlier_removal;
use forestseg::hull::HullKind;
use forestseg::io::read_cloud;
use forestseg::label_propagation::{reconstruct_labels, DEFAULT_LABEL_RADIUS, DEFAULT_LINK_RADIUS};
use forestseg::metrics::{all_tree_attributes, evaluate_clouds, Axis};
use forestseg::pipeline::{
    radius_range, run_pipeline, sweep_csv, sweep_grouping_radius, FilePredictor, OraclePredictor, PipelineOutput,
    PipelineParams, TilePredictor,
};
use forestseg::predictor::{save_predictions, OracleNoise};
use forestseg::synthetic::{generate_forest, ForestSpec};
use forestseg::tiler::{crop_tile, generate_tiles, tile_manifest};
use forestseg::{Alignment, Cloud, Field};
use serde::{Deserialize, Serialize};

use manifest::{Manifest, Outputs};

#[derive(Parser, Debug)]
#[command(name = "forestseg", version, about = "Individual tree segmentation of forest point clouds")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Manifest path (default: next to the main output).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Increase log detail (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Segment a cloud into tree instances.
    Run {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Detection and segmentation scores of a prediction against ground truth.
    Evaluate {
        ground_truth: PathBuf,
        prediction: PathBuf,
        /// CSV output (default: prediction path with `.eval.csv`).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Re-cluster one prediction field over a range of grouping radii.
    Sweep {
        input: PathBuf,
        /// `start:end:count` (inclusive) or single radii, comma separated.
        #[arg(long, required = true, value_delimiter = ',')]
        radii: Vec<String>,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Label a raw plot cloud from separately labeled trees.
    Propagate {
        labeled: PathBuf,
        full: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = DEFAULT_LABEL_RADIUS)]
        radius: f64,
        #[arg(long, default_value_t = DEFAULT_LINK_RADIUS)]
        link_radius: f64,
    },
    /// Generate a synthetic labeled forest with ground-truth sidecars.
    Synth {
        #[arg(short, long)]
        output: PathBuf,
        /// TOML forest specification; flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        n_trees: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        spacing: Option<f64>,
        #[arg(long)]
        extent: Option<f64>,
    },
    /// Per-tree height, crown diameter and canopy cover.
    Attrs {
        input: PathBuf,
        /// CSV output (default: input path with `.attrs.csv`).
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = HullChoice::Alpha)]
        hull: HullChoice,
        /// Alpha-shape circumradius limit (m).
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
    },
    /// Voxel subsampling.
    Subsample {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        voxel_size: f64,
    },
    /// Write the subsampled cloud's tiles and tile manifest for an external predictor.
    Tiles {
        input: PathBuf,
        /// Output directory.
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Statistical outlier removal.
    Outliers {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 8)]
        k: usize,
        #[arg(long, default_value_t = 2.0)]
        std_ratio: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum PredictorKind {
    Oracle,
    Files,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum HullChoice {
    Alpha,
    Convex,
}

/// Effective configuration of a segmentation run. A run manifest embeds it
/// under `[config]` and can be passed back through `--config`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    predictor: PredictorKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    predictions: Option<PathBuf>,
    noise: OracleNoise,
    pipeline: PipelineParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            predictor: PredictorKind::Oracle,
            predictions: None,
            noise: OracleNoise::default(),
            pipeline: PipelineParams::default(),
        }
    }
}

#[derive(Args, Debug, Clone, Default)]
struct PipelineArgs {
    /// TOML configuration or a previous run manifest; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    predictor: Option<PredictorKind>,
    /// Prediction manifest (`tile_id path` lines) for `--predictor files`.
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Oracle offset noise standard deviation (m).
    #[arg(long)]
    sigma: Option<f64>,
    /// Oracle label flip probability.
    #[arg(long)]
    flip: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Oracle bound on the xy length of each noise draw (m).
    #[arg(long)]
    max_xy: Option<f64>,
    #[arg(long)]
    voxel_size: Option<f64>,
    #[arg(long)]
    verticality_radius: Option<f64>,
    #[arg(long)]
    outer_edge: Option<f64>,
    #[arg(long)]
    inner_edge: Option<f64>,
    #[arg(long)]
    stride: Option<f64>,
    #[arg(long)]
    min_verticality: Option<f64>,
    #[arg(long)]
    max_offset_z: Option<f64>,
    #[arg(long)]
    group_radius: Option<f64>,
    #[arg(long)]
    min_points: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    assign_3d: bool,
}

impl PipelineArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => load_run_config(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($flag:expr, $field:expr) => {
                if let Some(v) = $flag {
                    $field = v;
                }
            };
        }
        set!(self.predictor, c.predictor);
        if self.predictions.is_some() {
            c.predictions = self.predictions.clone();
        }
        set!(self.sigma, c.noise.offset_sigma);
        set!(self.flip, c.noise.label_flip_prob);
        set!(self.seed, c.noise.seed);
        if self.max_xy.is_some() {
            c.noise.max_xy_displacement = self.max_xy;
        }
        let p = &mut c.pipeline;
        set!(self.voxel_size, p.voxel_size);
        set!(self.verticality_radius, p.verticality_radius);
        set!(self.outer_edge, p.tiles.outer_edge);
        set!(self.inner_edge, p.tiles.inner_edge);
        set!(self.stride, p.tiles.stride);
        set!(self.min_verticality, p.cluster.min_verticality);
        set!(self.max_offset_z, p.cluster.max_offset_z);
        set!(self.group_radius, p.cluster.group_radius);
        set!(self.min_points, p.cluster.min_points);
        set!(self.k, p.k);
        if self.assign_3d {
            p.assign_3d = true;
        }
        p.validate()?;
        c.noise.validate()?;
        if c.predictor == PredictorKind::Files && c.predictions.is_none() {
            bail!("--predictor files needs --predictions <manifest>");
        }
        Ok(c)
    }
}

fn load_run_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: toml::Table = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let table = match value.get("config") {
        Some(toml::Value::Table(t)) => t.clone(),
        _ => value,
    };
    let mut c: RunConfig = table.try_into().with_context(|| format!("invalid configuration in {}", path.display()))?;
    // prediction manifests in a configuration resolve against its directory
    if let (Some(p), Some(dir)) = (&c.predictions, path.parent()) {
        if p.is_relative() {
            c.predictions = Some(dir.join(p));
        }
    }
    Ok(c)
}

fn expand_radii(raw: &[String]) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for r in raw {
        let parts: Vec<&str> = r.split(':').collect();
        match parts.as_slice() {
            [v] => out.push(v.parse().with_context(|| format!("invalid radius `{v}`"))?),
            [a, b, n] => out.extend(radius_range(
                a.parse().with_context(|| format!("invalid radius `{a}`"))?,
                b.parse().with_context(|| format!("invalid radius `{b}`"))?,
                n.parse().with_context(|| format!("invalid count `{n}`"))?,
            )?),
            _ => bail!("radii must be `start:end:count` or a single value, got `{r}`"),
        }
    }
    Ok(out)
}

fn make_predictor(c: &RunConfig) -> Result<Box<dyn TilePredictor<f64>>> {
    Ok(match c.predictor {
        PredictorKind::Oracle => Box::new(OraclePredictor::new(c.noise)),
        PredictorKind::Files => {
            let path = c.predictions.as_ref().expect("checked in resolve");
            Box::new(FilePredictor::from_manifest(path).with_context(|| format!("reading {}", path.display()))?)
        }
    })
}

fn read(path: &Path) -> Result<Cloud> {
    read_cloud::<f64>(path, None).with_context(|| format!("reading {}", path.display()))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn replace_extension(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

fn cloud_summary(m: &mut Manifest, key: &str, cloud: &Cloud) {
    let a = Alignment::of(cloud.points());
    m.summary(&format!("{key}_points"), a.count as i64);
    m.summary(&format!("{key}_digest"), format!("{:016x}", a.digest));
}

fn run_segmentation(input: &Path, c: &RunConfig, m: &mut Manifest) -> Result<(Cloud, PipelineOutput<f64>)> {
    let cloud = read(input)?;
    m.input(input)?;
    cloud_summary(m, "input", &cloud);
    let mut predictor = make_predictor(c)?;
    let out = run_pipeline(&cloud, &c.pipeline, predictor.as_mut())?;
    for t in &out.timings {
        m.timing(t.stage, t.seconds);
    }
    m.summary("subsampled_points", out.subsampled.len() as i64);
    m.summary("tiles", out.tiles as i64);
    m.summary("instances", out.n_instances() as i64);
    m.summary("raw_components", out.clusters.raw_components as i64);
    Ok((cloud, out))
}

fn cmd_run(input: &Path, output: &Path, args: &PipelineArgs, m: &mut Manifest, outs: &mut Outputs) -> Result<()> {
    let c = args.resolve()?;
    m.set_config(&c)?;
    let (cloud, out) = run_segmentation(input, &c, m)?;
    let mut labeled = out.labeled_cloud(&cloud)?;
    let provenance = out.instances.provenance.iter().map(|p| *p as u8 as f64).collect();
    labeled.set_attribute("provenance", provenance)?;
    outs.cloud(&labeled, output)?;
    println!("{} instances from {} points", out.n_instances(), cloud.len());
    Ok(())
}

fn cmd_evaluate(gt: &Path, pred: &Path, output: &Path, m: &mut Manifest, outs: &mut Outputs) -> Result<()> {
    let g = read(gt)?;
    let p = read(pred)?;
    m.input(gt)?;
    m.input(pred)?;
    let report = evaluate_clouds(&g, &p)?;
    outs.text(output, &report.to_csv())?;
    for axis in [Axis::Horizontal, Axis::Vertical] {
        if let Some(part) = report.partition(axis) {
            outs.text(&with_suffix(&replace_extension(output, ""), &format!(".{}.csv", axis.name())), &part.to_csv())?;
        }
    }
    let d = &report.detection;
    m.summary("completeness", d.completeness);
    m.summary("omission", d.omission);
    m.summary("commission", d.commission);
    m.summary("f1", d.f1);
    m.summary("coverage", report.segmentation.coverage);
    print!("{}", report.to_table());
    Ok(())
}

fn cmd_sweep(input: &Path, radii: &[f64], output: &Path, args: &PipelineArgs, m: &mut Manifest, outs: &mut Outputs) -> Result<()> {
    let c = args.resolve()?;
    m.set_config(&c)?;
    let (cloud, out) = run_segmentation(input, &c, m)?;
    let truth = cloud.labels().is_some().then_some(&cloud);
    let rows = sweep_grouping_radius(&out, truth, &c.pipeline, radii)?;
    outs.text(output, &sweep_csv(&rows))?;
    m.summary("radii", rows.len() as i64);
    println!("{} radii", rows.len());
    Ok(())
}

fn cmd_propagate(labeled: &Path, full: &Path, output: &Path, radius: f64, link: f64, m: &mut Manifest, outs: &mut Outputs) -> Result<()> {
    let l = read(labeled)?;
    let f = read(full)?;
    m.input(labeled)?;
    m.input(full)?;
    m.summary("radius", radius);
    m.summary("link_radius", link);
    let (cloud, s) = reconstruct_labels(&l, &f, radius, link)?;
    outs.cloud(&cloud, output)?;
    m.summary("tree_points", s.tree as i64);
    m.summary("non_tree_points", s.non_tree as i64);
    m.summary("non_annotated_points", s.non_annotated as i64);
    m.summary("trees", s.trees as i64);
    println!("tree {} non-tree {} non-annotated {} trees {}", s.tree, s.non_tree, s.non_annotated, s.trees);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_synth(
    output: &Path,
    config: Option<&Path>,
    n_trees: Option<usize>,
    seed: Option<u64>,
    spacing: Option<f64>,
    extent: Option<f64>,
    m: &mut Manifest,
    outs: &mut Outputs,
) -> Result<()> {
    let mut spec: ForestSpec = match config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            m.input(p)?;
            toml::from_str(&text).with_context(|| format!("invalid forest specification in {}", p.display()))?
        }
        None => ForestSpec::default(),
    };
    if let Some(v) = n_trees {
        spec.n_trees = v;
    }
    if let Some(v) = seed {
        spec.seed = v;
    }
    if let Some(v) = spacing {
        spec.min_trunk_spacing = v;
    }
    if let Some(v) = extent {
        spec.extent = v;
    }
    m.set_value("forest", &spec)?;
    let forest = generate_forest::<f64>(&spec)?;
    outs.cloud(&forest.cloud, output)?;
    let labels = forest.cloud.labels().expect("generated clouds are labeled");
    let p_tree = labels.iter().map(|l| if l.is_tree() { 1.0 } else { 0.0 }).collect();
    let truth = Field::new(p_tree, forest.offsets.clone(), Alignment::of(forest.cloud.points()))?;
    let truth_path = with_suffix(output, ".truth.fprd");
    outs.track(&truth_path);
    save_predictions(&truth, &truth_path)?;
    let mut bases = String::from("tree_id,x,y,z\n");
    for (id, b) in &forest.bases {
        let _ = writeln!(bases, "{id},{},{},{}", b.x, b.y, b.z);
    }
    outs.text(&with_suffix(output, ".bases.csv"), &bases)?;
    cloud_summary(m, "output", &forest.cloud);
    m.summary("trees", forest.trees.len() as i64);
    println!("{} points, {} trees", forest.cloud.len(), forest.trees.len());
    Ok(())
}

fn cmd_attrs(input: &Path, output: &Path, hull: HullKind, m: &mut Manifest, outs: &mut Outputs) -> Result<()> {
    let cloud = read(input)?;
    m.input(input)?;
    m.summary(
        "hull",
        match hull {
            HullKind::Alpha(a) => format!("alpha {a}"),
            HullKind::Convex => "convex".to_string(),
        },
    );
    let attrs = all_tree_attributes(&cloud, hull)?;
    let members = cloud.tree_members();
    let mut csv = String::from("tree_id,points,height,crown_diameter,canopy_cover\n");
    for (id, a) in &attrs {
        let _ = writeln!(csv, "{id},{},{},{},{}", members[id].len(), a.height, a.crown_diameter, a.canopy_cover);
    }
    outs.text(output, &csv)?;
    m.summary("trees", attrs.len() as i64);
    println!("{} trees", attrs.len());
    Ok(())
}

fn cmd_subsample(input: &Path, output: &Path, voxel: f64, m: &mut Manifest, outs: &mut Outputs) -> Result<()> {
    let cloud = read(input)?;
    m.input(input)?;
    m.summary("voxel_size", voxel);
    let (sub, _) = forestseg::cloud::voxel_subsample(&cloud, voxel)?;
    outs.cloud(&sub, output)?;
    cloud_summary(m, "output", &sub);
    println!("{} of {} points kept", sub.len(), cloud.len());
    Ok(())
}

fn cmd_tiles(input: &Path, dir: &Path, args: &PipelineArgs, m: &mut Manifest, outs: &mut Outputs) -> Result<()> {
    let c = args.resolve()?;
    m.set_config(&c)?;
    let cloud = read(input)?;
    m.input(input)?;
    let (sub, _) = forestseg::cloud::voxel_subsample(&cloud, c.pipeline.voxel_size)?;
    let specs = generate_tiles(&sub, &c.pipeline.tiles)?;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut views = Vec::with_capacity(specs.len());
    for spec in &specs {
        let view = crop_tile(&sub, spec);
        let mut tile = sub.select(&view.point_indices);
        tile.set_attribute("inner", view.inner_mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())?;
        outs.cloud(&tile, &dir.join(format!("tile_{}.bin", spec.id)))?;
        views.push(view);
    }
    outs.text(&dir.join("tiles.txt"), &tile_manifest(&views))?;
    cloud_summary(m, "subsampled", &sub);
    m.summary("tiles", views.len() as i64);
    println!("{} tiles", views.len());
    Ok(())
}

fn cmd_outliers(input: &Path, output: &Path, k: usize, ratio: f64, m: &mut Manifest, outs: &mut Outputs) -> Result<()> {
    let cloud = read(input)?;
    m.input(input)?;
    m.summary("k", k as i64);
    m.summary("std_ratio", ratio);
    let kept = statistical_outlier_removal(&cloud, k, ratio)?;
    outs.cloud(&kept, output)?;
    cloud_summary(m, "output", &kept);
    println!("{} of {} points kept", kept.len(), cloud.len());
    Ok(())
}

fn dispatch(cli: &Cli, m: &mut Manifest, outs: &mut Outputs) -> Result<PathBuf> {
    // returns the default manifest location
    Ok(match &cli.command {
        Command::Run { input, output, pipeline } => {
            cmd_run(input, output, pipeline, m, outs)?;
            with_suffix(output, ".manifest.toml")
        }
        Command::Evaluate { ground_truth, prediction, output } => {
            let out = output.clone().unwrap_or_else(|| replace_extension(prediction, "eval.csv"));
            cmd_evaluate(ground_truth, prediction, &out, m, outs)?;
            with_suffix(&out, ".manifest.toml")
        }
        Command::Sweep { input, radii, output, pipeline } => {
            cmd_sweep(input, &expand_radii(radii)?, output, pipeline, m, outs)?;
            with_suffix(output, ".manifest.toml")
        }
        Command::Propagate { labeled, full, output, radius, link_radius } => {
            cmd_propagate(labeled, full, output, *radius, *link_radius, m, outs)?;
            with_suffix(output, ".manifest.toml")
        }
        Command::Synth { output, config, n_trees, seed, spacing, extent } => {
            cmd_synth(output, config.as_deref(), *n_trees, *seed, *spacing, *extent, m, outs)?;
            with_suffix(output, ".manifest.toml")
        }
        Command::Attrs { input, output, hull, alpha } => {
            let out = output.clone().unwrap_or_else(|| replace_extension(input, "attrs.csv"));
            let kind = match hull {
                HullChoice::Alpha => HullKind::Alpha(*alpha),
                HullChoice::Convex => HullKind::Convex,
            };
            cmd_attrs(input, &out, kind, m, outs)?;
            with_suffix(&out, ".manifest.toml")
        }
        Command::Subsample { input, output, voxel_size } => {
            cmd_subsample(input, output, *voxel_size, m, outs)?;
            with_suffix(output, ".manifest.toml")
        }
        Command::Tiles { input, output, pipeline } => {
            cmd_tiles(input, output, pipeline, m, outs)?;
            output.join("manifest.toml")
        }
        Command::Outliers { input, output, k, std_ratio } => {
            cmd_outliers(input, output, *k, *std_ratio, m, outs)?;
            with_suffix(output, ".manifest.toml")
        }
    })
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Run { .. } => "run",
        Command::Evaluate { .. } => "evaluate",
        Command::Sweep { .. } => "sweep",
        Command::Propagate { .. } => "propagate",
        Command::Synth { .. } => "synth",
        Command::Attrs { .. } => "attrs",
        Command::Subsample { .. } => "subsample",
        Command::Tiles { .. } => "tiles",
        Command::Outliers { .. } => "outliers",
    }
}

fn execute(cli: &Cli, argv: Vec<String>) -> Result<()> {
    let workers = rayon::current_num_threads();
    let mut m = Manifest::new(command_name(&cli.command), argv, workers);
    let mut outs = Outputs::default();
    let default_manifest = dispatch(cli, &mut m, &mut outs)?;
    let path = cli.manifest.clone().unwrap_or(default_manifest);
    m.outputs(&outs)?;
    outs.text(&path, &m.to_toml()?)?;
    outs.commit();
    Ok(())
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match execute(&cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radii_expand() {
        let r = expand_radii(&["0.025:0.7:28".into()]).unwrap();
        assert_eq!(r.len(), 28);
        assert_eq!(expand_radii(&["0.15".into()]).unwrap(), vec![0.15]);
        assert!(expand_radii(&["1:2".into()]).is_err());
    }

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "[pipeline.cluster]\ngroup_radius = 0.3\n[noise]\nseed = 4\n").unwrap();
        let args = PipelineArgs { config: Some(path.clone()), seed: Some(9), ..Default::default() };
        let c = args.resolve().unwrap();
        assert_eq!(c.pipeline.cluster.group_radius, 0.3);
        assert_eq!(c.noise.seed, 9);
        std::fs::write(&path, "[pipeline]\nbogus = 1\n").unwrap();
        assert!(args.resolve().is_err());
    }

    #[test]
    fn config_round_trips_through_toml() {
        let c = RunConfig { noise: OracleNoise { max_xy_displacement: Some(0.07), ..Default::default() }, ..Default::default() };
        let text = toml::to_string(&c).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, c);
    }
}
