//! Compares the cosine-margin loss with the Euclidean discriminative loss on
//! two clusters as the embeddings are scaled.

use ndarray::{array, Array2};
use pcinst::loss::{cosine_loss, euclidean_discriminative_loss, LossConfig};
use pcinst::{EmbeddingMatrix, SceneLabels};

fn main() -> pcinst::Result<()> {
    let emb = array![[1.0, 0.1], [0.9, -0.1], [1.1, 0.0], [0.6, 0.8], [0.8, 0.7], [0.5, 0.9]];
    let labels = SceneLabels::new(vec![0, 0, 0, 1, 1, 1], vec![0, 0, 0, 1, 1, 1])?;
    let logits = Array2::zeros((6, 2));
    let cosine_cfg = LossConfig {
        delta_v: 0.99,
        ..LossConfig::default()
    };
    let euclid_cfg = LossConfig {
        delta_v: 0.5,
        delta_d: 1.5,
        ..LossConfig::default()
    };

    println!("{:>8} {:>10} {:>10} {:>12} {:>12}", "scale", "cos l_var", "cos l_dist", "euc l_var", "euc l_dist");
    for scale in [0.1, 1.0, 10.0, 100.0] {
        let e = EmbeddingMatrix::new(emb.mapv(|v| v * scale))?;
        let c = cosine_loss(&e, logits.view(), &labels, &cosine_cfg)?;
        let d = euclidean_discriminative_loss(&e, logits.view(), &labels, &euclid_cfg)?;
        println!("{scale:>8} {:>10.6} {:>10.6} {:>12.6} {:>12.6}", c.l_var, c.l_dist, d.l_var, d.l_dist);
    }

    let e = EmbeddingMatrix::new(emb)?;
    let r = cosine_loss(&e, logits.view(), &labels, &cosine_cfg)?;
    println!("\ncosine gradient w.r.t. embeddings:");
    for (i, row) in r.grad_embeddings.rows().into_iter().enumerate() {
        println!("  point {i}: [{:+.5}, {:+.5}]", row[0], row[1]);
    }
    Ok(())
}
