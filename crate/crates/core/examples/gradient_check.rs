//! Checks the analytic loss gradients against central finite differences on
//! random scenes.

use ndarray::Array2;
use pcinst::loss::{finite_difference_check, LossConfig, LossKind};
use pcinst::{EmbeddingMatrix, SceneLabels};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn main() -> pcinst::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cosine = LossConfig::default();
    let euclid = LossConfig {
        delta_v: 0.5,
        delta_d: 1.5,
        ..LossConfig::default()
    };
    for trial in 0..5 {
        let (n, d, c) = (40, 4, 3);
        let instance: Vec<i32> = (0..n).map(|i| if i % 10 == 9 { -1 } else { (i % c) as i32 }).collect();
        let semantic: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let emb = Array2::from_shape_simple_fn((n, d), || rng.sample::<f64, _>(StandardNormal));
        let logits = Array2::from_shape_simple_fn((n, 2), || rng.sample::<f64, _>(StandardNormal));
        let emb = EmbeddingMatrix::new(emb)?;
        let labels = SceneLabels::new(semantic, instance)?;
        let a = finite_difference_check(LossKind::Cosine, &emb, logits.view(), &labels, &cosine, 1e-5)?;
        let b = finite_difference_check(LossKind::Discriminative, &emb, logits.view(), &labels, &euclid, 1e-5)?;
        println!("trial {trial}: max relative error cosine {a:.2e}, discriminative {b:.2e}");
    }
    Ok(())
}
