use ndarray::{Array2, ArrayView2};

use super::{
    check_inputs, cluster_stats, cosine_grad_first, cosine_similarity, scatter_centroid_grad,
    weighted_cross_entropy, ClusterStats, LossConfig, LossReport,
};
use crate::error::{Error, Result};
use crate::scene::{EmbeddingMatrix, SceneLabels};

/// Cosine-margin loss `L_sem + α·L_var + β·L_dist`.
///
/// ```text
/// L_var  = 1/C · Σ_c 1/N_c · Σ_{i∈c} [δ_v − s(μ_c, x_i)]_+
/// L_dist = 1/(C(C−1)) · Σ_{c_A≠c_B} [s(μ_A, μ_B) − δ_d]_+     (0 when C < 2)
/// ```
///
/// Noise points carry no embedding term but still contribute to `L_sem`.
pub fn cosine_loss(
    emb: &EmbeddingMatrix,
    logits: ArrayView2<'_, f64>,
    labels: &SceneLabels,
    cfg: &LossConfig,
) -> Result<LossReport> {
    cfg.validate_cosine()?;
    check_inputs(emb, logits, labels)?;
    let (l_sem, grad_logits) = weighted_cross_entropy(logits, &labels.semantic, &cfg.class_weights)?;
    let stats = cluster_stats(emb, labels)?;
    let terms = margin_terms(emb, &stats, cfg)?;

    let mut grad_embeddings = terms.grad_var * cfg.alpha;
    grad_embeddings.scaled_add(cfg.beta, &terms.grad_dist);
    Ok(LossReport {
        l_sem,
        l_var: terms.l_var,
        l_dist: terms.l_dist,
        l_reg: 0.0,
        total: l_sem + cfg.alpha * terms.l_var + cfg.beta * terms.l_dist,
        grad_embeddings,
        grad_logits,
    })
}

struct MarginTerms {
    l_var: f64,
    l_dist: f64,
    grad_var: Array2<f64>,
    grad_dist: Array2<f64>,
}

fn margin_terms(emb: &EmbeddingMatrix, stats: &ClusterStats, cfg: &LossConfig) -> Result<MarginTerms> {
    let x = emb.view();
    let mu = &stats.centroids;
    let c_count = stats.n_clusters;
    let d = emb.dim();
    for (cluster, row) in mu.rows().into_iter().enumerate() {
        if row.iter().all(|&v| v == 0.0) {
            return Err(Error::ZeroCentroid { cluster });
        }
    }

    // pull
    let mut grad_var = Array2::<f64>::zeros((x.nrows(), d));
    let mut grad_mu = Array2::<f64>::zeros((c_count, d));
    let mut per_cluster = vec![0.0; c_count];
    for (i, c) in stats.assignment.iter().enumerate() {
        let Some(c) = *c else { continue };
        let s = cosine_similarity(mu.row(c), x.row(i))?;
        let margin = cfg.delta_v - s;
        if margin > 0.0 {
            per_cluster[c] += margin;
            let w = 1.0 / (c_count as f64 * stats.sizes[c] as f64);
            grad_var
                .row_mut(i)
                .scaled_add(-w, &cosine_grad_first(x.row(i), mu.row(c)));
            grad_mu
                .row_mut(c)
                .scaled_add(-w, &cosine_grad_first(mu.row(c), x.row(i)));
        }
    }
    let l_var = per_cluster
        .iter()
        .zip(&stats.sizes)
        .map(|(sum, &n)| sum / n as f64)
        .sum::<f64>()
        / c_count as f64;
    scatter_centroid_grad(stats, &grad_mu, &mut grad_var);

    // push, over ordered pairs
    let mut grad_dist = Array2::<f64>::zeros((x.nrows(), d));
    let mut l_dist = 0.0;
    if c_count >= 2 {
        let w = 1.0 / (c_count as f64 * (c_count as f64 - 1.0));
        let mut grad_mu = Array2::<f64>::zeros((c_count, d));
        for a in 0..c_count {
            for b in 0..c_count {
                if a == b {
                    continue;
                }
                let margin = cosine_similarity(mu.row(a), mu.row(b))? - cfg.delta_d;
                if margin > 0.0 {
                    l_dist += margin;
                    let ga = cosine_grad_first(mu.row(a), mu.row(b));
                    let gb = cosine_grad_first(mu.row(b), mu.row(a));
                    grad_mu.row_mut(a).scaled_add(w, &ga);
                    grad_mu.row_mut(b).scaled_add(w, &gb);
                }
            }
        }
        l_dist *= w;
        scatter_centroid_grad(stats, &grad_mu, &mut grad_dist);
    }

    Ok(MarginTerms {
        l_var,
        l_dist,
        grad_var,
        grad_dist,
    })
}
