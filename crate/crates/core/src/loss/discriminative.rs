use ndarray::{Array2, ArrayView2};

use super::{
    check_inputs, cluster_stats, distance, scatter_centroid_grad, weighted_cross_entropy,
    LossConfig, LossReport,
};
use crate::error::Result;
use crate::scene::{EmbeddingMatrix, SceneLabels};

/// Euclidean discriminative loss `L_sem + α·L_var + β·L_dist + γ·L_reg`.
///
/// ```text
/// L_var  = 1/C · Σ_c 1/N_c · Σ_{i∈c} [‖μ_c − x_i‖ − δ_v]_+²
/// L_dist = 1/(C(C−1)) · Σ_{c_A≠c_B} [2δ_d − ‖μ_A − μ_B‖]_+²
/// L_reg  = 1/C · Σ_c ‖μ_c‖
/// ```
pub fn euclidean_discriminative_loss(
    emb: &EmbeddingMatrix,
    logits: ArrayView2<'_, f64>,
    labels: &SceneLabels,
    cfg: &LossConfig,
) -> Result<LossReport> {
    cfg.validate_discriminative()?;
    check_inputs(emb, logits, labels)?;
    let (l_sem, grad_logits) = weighted_cross_entropy(logits, &labels.semantic, &cfg.class_weights)?;
    let stats = cluster_stats(emb, labels)?;
    let x = emb.view();
    let mu = &stats.centroids;
    let c_count = stats.n_clusters;
    let cf = c_count as f64;
    let d = emb.dim();

    let mut grad_x = Array2::<f64>::zeros((x.nrows(), d));
    let mut grad_mu = Array2::<f64>::zeros((c_count, d));

    let mut per_cluster = vec![0.0; c_count];
    for (i, c) in stats.assignment.iter().enumerate() {
        let Some(c) = *c else { continue };
        let dist = distance(mu.row(c), x.row(i));
        let h = dist - cfg.delta_v;
        if h > 0.0 {
            per_cluster[c] += h * h;
            // d/dx_i of h² is 2h·(x_i − μ_c)/‖x_i − μ_c‖
            let coef = cfg.alpha * 2.0 * h / (dist * cf * stats.sizes[c] as f64);
            for k in 0..d {
                let g = coef * (x[[i, k]] - mu[[c, k]]);
                grad_x[[i, k]] += g;
                grad_mu[[c, k]] -= g;
            }
        }
    }
    let l_var = per_cluster
        .iter()
        .zip(&stats.sizes)
        .map(|(sum, &n)| sum / n as f64)
        .sum::<f64>()
        / cf;

    let mut l_dist = 0.0;
    if c_count >= 2 {
        let w = 1.0 / (cf * (cf - 1.0));
        for a in 0..c_count {
            for b in 0..c_count {
                if a == b {
                    continue;
                }
                let dist = distance(mu.row(a), mu.row(b));
                let h = 2.0 * cfg.delta_d - dist;
                if h > 0.0 {
                    l_dist += h * h;
                    if dist > 0.0 {
                        let coef = cfg.beta * w * 2.0 * h / dist;
                        for k in 0..d {
                            let g = coef * (mu[[a, k]] - mu[[b, k]]);
                            grad_mu[[a, k]] -= g;
                            grad_mu[[b, k]] += g;
                        }
                    }
                }
            }
        }
        l_dist *= w;
    }

    let mut l_reg = 0.0;
    for c in 0..c_count {
        let norm = mu.row(c).dot(&mu.row(c)).sqrt();
        l_reg += norm;
        if norm > 0.0 {
            let coef = cfg.gamma / (cf * norm);
            grad_mu.row_mut(c).scaled_add(coef, &mu.row(c));
        }
    }
    l_reg /= cf;

    scatter_centroid_grad(&stats, &grad_mu, &mut grad_x);
    Ok(LossReport {
        l_sem,
        l_var,
        l_dist,
        l_reg,
        total: l_sem + cfg.alpha * l_var + cfg.beta * l_dist + cfg.gamma * l_reg,
        grad_embeddings: grad_x,
        grad_logits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn cfg(delta_v: f64, delta_d: f64) -> LossConfig {
        LossConfig {
            delta_v,
            delta_d,
            ..Default::default()
        }
    }

    #[test]
    fn points_on_centroid_have_no_pull() {
        let emb = EmbeddingMatrix::new(array![[1.0, 2.0], [1.0, 2.0]]).unwrap();
        let labels = SceneLabels::new(vec![0; 2], vec![0; 2]).unwrap();
        let r = euclidean_discriminative_loss(&emb, Array2::zeros((2, 1)).view(), &labels, &cfg(0.5, 1.5))
            .unwrap();
        assert_eq!(r.l_var, 0.0);
    }

    #[test]
    fn regularizer_is_centroid_norm() {
        let emb = EmbeddingMatrix::new(array![[3.0, 4.0]]).unwrap();
        let labels = SceneLabels::new(vec![0], vec![0]).unwrap();
        let r = euclidean_discriminative_loss(&emb, Array2::zeros((1, 1)).view(), &labels, &cfg(0.5, 1.5))
            .unwrap();
        assert_eq!(r.l_reg, 5.0);
        assert_eq!(r.l_dist, 0.0);
    }

    #[test]
    fn push_term_over_ordered_pairs() {
        let emb = EmbeddingMatrix::new(array![[1.0, 1.0], [2.0, 1.0]]).unwrap();
        let labels = SceneLabels::new(vec![0; 2], vec![0, 1]).unwrap();
        let r = euclidean_discriminative_loss(&emb, Array2::zeros((2, 1)).view(), &labels, &cfg(0.5, 1.0))
            .unwrap();
        // both ordered pairs contribute (2·1 − 1)²
        let oracle = 0.5 * ((2.0f64 - 1.0).powi(2) * 2.0);
        assert!((r.l_dist - oracle).abs() < 1e-15);
        assert!((r.l_dist - 1.0).abs() < 1e-15);
        assert_eq!(
            r.total,
            r.l_sem + 0.5 * r.l_var + 0.5 * r.l_dist + 0.005 * r.l_reg
        );
    }
}
