//! Generates a synthetic scene and writes it in the scene text format.
//!
//! cargo run --example generate_scene -- [seed] [out.spc]

use pcinst::io::save_scene;
use pcinst::scene::generate_scene;
use pcinst::SyntheticSceneSpec;

fn main() -> pcinst::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed must be an integer"));
    let out = args.next().unwrap_or_else(|| "scene.spc".into());

    let spec = SyntheticSceneSpec {
        rng_seed: seed,
        ..SyntheticSceneSpec::default()
    };
    let (cloud, labels) = generate_scene(&spec)?;
    println!(
        "{} points, {} instances, {} categories, feature dim {}",
        cloud.n_points(),
        labels.n_instances(),
        spec.n_categories,
        cloud.feature_dim()
    );
    for (id, rows) in labels.members().iter().enumerate() {
        let c = cloud.coords();
        let centroid: Vec<f64> = (0..3)
            .map(|k| rows.iter().map(|&i| c[[i, k]]).sum::<f64>() / rows.len() as f64)
            .collect();
        println!(
            "  instance {id}: {} points, category {}, centroid ({:.2}, {:.2}, {:.2})",
            rows.len(),
            labels.semantic[rows[0]],
            centroid[0],
            centroid[1],
            centroid[2]
        );
    }
    save_scene(&out, &cloud, &labels, spec.n_categories)?;
    println!("wrote {out}");
    Ok(())
}
