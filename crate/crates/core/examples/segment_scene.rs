//! Runs DBSCAN directly on points and then extracts instances from a scene
//! with a trained head.

use ndarray::array;
use pcinst::clustering::{dbscan, segment, DbscanConfig};
use pcinst::pipeline::generate_scenes;
use pcinst::scene::generate_scene;
use pcinst::trainer::{train, EmbeddingHead, TrainConfig};
use pcinst::SyntheticSceneSpec;

fn main() -> pcinst::Result<()> {
    let points = array![[0.0, 0.0], [0.1, 0.0], [0.0, 0.1], [5.0, 5.0], [5.1, 5.0], [5.0, 5.1], [9.0, 0.0]];
    println!("dbscan(eps 0.2, min_pts 3): {:?}", dbscan(points.view(), 0.2, 3));

    let spec = SyntheticSceneSpec::default();
    let scenes = generate_scenes(&spec, 1..=4)?;
    let cfg = TrainConfig {
        total_steps: 600,
        lr_drop_step: 450,
        ..TrainConfig::default()
    };
    let init = EmbeddingHead::init(scenes[0].0.feature_dim() + 3, 32, spec.n_categories, false, 0);
    let (head, _) = train(&init, &scenes, &cfg)?;

    let (cloud, truth) = generate_scene(&spec)?;
    let pred = segment(&head, &cloud, true, &DbscanConfig::default())?;
    let noise = pred.instance.iter().filter(|&&l| l < 0).count();
    println!(
        "test scene: {} true instances, {} predicted, {} noise points",
        truth.n_instances(),
        pred.n_instances(),
        noise
    );
    for (id, rows) in pred.members().iter().enumerate() {
        println!("  predicted {id}: {} points, category {}", rows.len(), pred.semantic[rows[0]]);
    }
    Ok(())
}
