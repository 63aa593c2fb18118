use std::collections::BTreeSet;

use forestseg::io::{read_cloud, write_cloud, Format};
use forestseg::pipeline::{run_pipeline, OraclePredictor, PipelineParams};
use forestseg::predictor::{load_predictions, save_predictions};
use forestseg::synthetic::{generate_forest, ForestSpec, SyntheticForest};
use forestseg::{Alignment, Cloud, Field, PointLabel};

fn light(n_trees: usize, seed: u64) -> SyntheticForest<f64> {
    let spec = ForestSpec {
        n_trees,
        extent: 20.0,
        crown_density: 20.0,
        ground_density: 80.0,
        crown_radius: [1.5, 3.0],
        seed,
        ..ForestSpec::default()
    };
    generate_forest(&spec).unwrap()
}

#[test]
fn zero_noise_labels_are_ground_truth_ids() {
    let f = light(8, 1);
    let out = run_pipeline(&f.cloud, &PipelineParams::default(), &mut OraclePredictor::default()).unwrap();
    assert_eq!(out.n_instances(), 8);
    // on the subsampled cloud each instance maps to exactly one ground-truth
    // tree and vice versa; full-resolution points inherit their voxel's label
    let gt = out.subsampled.labels().unwrap();
    let mut pairs = BTreeSet::new();
    for (g, p) in gt.iter().zip(&out.sub_instances.labels) {
        if let (PointLabel::Tree(a), PointLabel::Tree(b)) = (g, p) {
            pairs.insert((*b, *a));
        }
    }
    let preds: BTreeSet<u32> = pairs.iter().map(|p| p.0).collect();
    let gts: BTreeSet<u32> = pairs.iter().map(|p| p.1).collect();
    assert_eq!((pairs.len(), preds.len(), gts.len()), (8, 8, 8));
    // tree points keep a tree label and ground points stay non-tree
    for (g, p) in gt.iter().zip(&out.sub_instances.labels) {
        match g {
            PointLabel::Tree(_) => assert!(p.is_tree()),
            PointLabel::NonTree => assert_eq!(*p, PointLabel::NonTree),
            PointLabel::NonAnnotated => {}
        }
    }
}

#[test]
fn instance_maps_do_not_depend_on_k() {
    let f = light(6, 2);
    let maps: Vec<_> = [5, 10, 20]
        .iter()
        .map(|&k| {
            let params = PipelineParams { k, ..PipelineParams::default() };
            run_pipeline(&f.cloud, &params, &mut OraclePredictor::default()).unwrap().instances.labels
        })
        .collect();
    assert_eq!(maps[0], maps[1]);
    assert_eq!(maps[1], maps[2]);
}

#[test]
fn clouds_and_predictions_round_trip_through_files() {
    let f = light(4, 3);
    let dir = tempfile::tempdir().unwrap();
    for (name, exact) in [("c.bin", true), ("c.txt", true), ("c.las", false)] {
        let path = dir.path().join(name);
        write_cloud(&f.cloud, &path, None).unwrap();
        let back: Cloud = read_cloud(&path, Some(Format::from_path(&path).unwrap())).unwrap();
        assert_eq!(back.labels(), f.cloud.labels(), "{name}");
        for (a, b) in back.points().iter().zip(f.cloud.points()) {
            if exact {
                assert_eq!(a, b, "{name}");
            } else {
                assert!((*a - *b).norm() < 1e-3, "{name}");
            }
        }
    }
    let labels = f.cloud.labels().unwrap();
    let p: Vec<f64> = labels.iter().map(|l| if l.is_tree() { 1.0 } else { 0.0 }).collect();
    let field = Field::new(p, f.offsets.clone(), Alignment::of(f.cloud.points())).unwrap();
    let path = dir.path().join("p.fprd");
    save_predictions(&field, &path).unwrap();
    let back: Field = load_predictions(&path, f.cloud.points()).unwrap();
    assert_eq!(back.p_tree(), field.p_tree());
    for (a, b) in back.offset().iter().zip(field.offset()) {
        // stored as f32
        assert!((*a - *b).norm() < 1e-5);
    }
    let mut moved = f.cloud.points().to_vec();
    moved[0].x += 1.0;
    assert!(load_predictions::<f64>(&path, &moved).is_err());
}
