//! Embedding losses and their analytic gradients.
//!
//! Two instance-embedding objectives share the same cluster bookkeeping:
//!
//! - [`cosine_loss`]: linear hinges on cosine similarity between points and
//!   their centroid (pull term) and between centroid pairs (push term).
//!   Only directions matter, so the loss is invariant to rescaling.
//! - [`euclidean_discriminative_loss`]: the squared-hinge Euclidean baseline
//!   with a centroid-norm regularizer.
//!
//! Both add a class-weighted softmax cross entropy on the semantic logits.
//! Gradients flow through the centroids (each `μ_c` is the raw mean of its
//! cluster's embeddings). At a hinge kink the subgradient is 0.

mod cosine;
mod cross_entropy;
mod discriminative;
mod gradcheck;

pub use cosine::cosine_loss;
pub use cross_entropy::{inverse_frequency_weights, weighted_cross_entropy};
pub use discriminative::euclidean_discriminative_loss;
pub use gradcheck::{
    finite_difference_check, move_off_kinks, relative_error, GRADCHECK_FLOOR,
};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::scene::{compact_instance_ids, EmbeddingMatrix, SceneLabels, NOISE};

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    /// Pull margin. Cosine: points need `s(μ_c, x_i) >= delta_v`.
    /// Euclidean: points need `‖μ_c − x_i‖ <= delta_v`.
    pub delta_v: f64,
    /// Push margin. Cosine: centroid pairs need `s <= delta_d`.
    /// Euclidean: centroid pairs need distance `>= 2·delta_d`.
    pub delta_d: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Weight of the centroid-norm regularizer (Euclidean baseline only).
    pub gamma: f64,
    /// Per-category cross-entropy weights; empty means all 1.
    pub class_weights: Vec<f64>,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            delta_v: 0.9,
            delta_d: 0.4,
            alpha: 0.5,
            beta: 0.5,
            gamma: 0.005,
            class_weights: Vec::new(),
        }
    }
}

impl LossConfig {
    fn check_common(&self) -> Result<()> {
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !(nonneg(self.alpha) && nonneg(self.beta) && nonneg(self.gamma)) {
            return Err(Error::InvalidConfig("alpha, beta and gamma must be >= 0".into()));
        }
        if self.class_weights.iter().any(|&w| !(w.is_finite() && w > 0.0)) {
            return Err(Error::InvalidConfig("class weights must be > 0".into()));
        }
        Ok(())
    }

    /// Constraints of the cosine-margin loss: `delta_v ∈ (0, 1]`,
    /// `delta_d ∈ [−1, 1)`, `delta_d < delta_v`.
    pub fn validate_cosine(&self) -> Result<()> {
        self.check_common()?;
        if !(self.delta_v > 0.0 && self.delta_v <= 1.0) {
            return Err(Error::InvalidConfig(format!("delta_v {} not in (0, 1]", self.delta_v)));
        }
        if !(-1.0..1.0).contains(&self.delta_d) {
            return Err(Error::InvalidConfig(format!("delta_d {} not in [-1, 1)", self.delta_d)));
        }
        if self.delta_d >= self.delta_v {
            return Err(Error::InvalidConfig("delta_d must be below delta_v".into()));
        }
        Ok(())
    }

    /// Euclidean margins are distances, so only non-negativity is required.
    pub fn validate_discriminative(&self) -> Result<()> {
        self.check_common()?;
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !(ok(self.delta_v) && ok(self.delta_d)) {
            return Err(Error::InvalidConfig("Euclidean margins must be >= 0".into()));
        }
        Ok(())
    }
}

/// Loss terms and gradients for one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub l_sem: f64,
    pub l_var: f64,
    pub l_dist: f64,
    /// Zero for the cosine loss.
    pub l_reg: f64,
    pub total: f64,
    pub grad_embeddings: Array2<f64>,
    pub grad_logits: Array2<f64>,
}

/// Centroids and sizes of the labeled clusters of a scene.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterStats {
    pub n_clusters: usize,
    /// `C × d_e`, raw means of member embeddings.
    pub centroids: Array2<f64>,
    pub sizes: Vec<usize>,
    /// Cluster of each point, `None` for noise.
    pub assignment: Vec<Option<usize>>,
}

/// Cosine of the angle between `a` and `b`.
pub fn cosine_similarity(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            what: "cosine operands",
            expected: a.len().to_string(),
            found: b.len().to_string(),
        });
    }
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 {
        return Err(Error::ZeroNorm { row: 0 });
    }
    if nb == 0.0 {
        return Err(Error::ZeroNorm { row: 1 });
    }
    Ok((a.dot(&b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Groups embeddings by compacted instance id and averages each group.
pub fn cluster_stats(emb: &EmbeddingMatrix, labels: &SceneLabels) -> Result<ClusterStats> {
    if labels.len() != emb.n_points() {
        return Err(Error::ShapeMismatch {
            what: "labels",
            expected: emb.n_points().to_string(),
            found: labels.len().to_string(),
        });
    }
    let compact = compact_instance_ids(labels);
    let assignment: Vec<Option<usize>> = compact
        .instance
        .iter()
        .map(|&id| (id != NOISE).then_some(id as usize))
        .collect();
    let n_clusters = assignment.iter().flatten().map(|&c| c + 1).max().unwrap_or(0);
    if n_clusters == 0 {
        return Err(Error::NoLabeledPoints);
    }
    let x = emb.view();
    let mut centroids = Array2::<f64>::zeros((n_clusters, emb.dim()));
    let mut sizes = vec![0usize; n_clusters];
    for (i, c) in assignment.iter().enumerate() {
        if let Some(c) = *c {
            sizes[c] += 1;
            let mut row = centroids.row_mut(c);
            row += &x.row(i);
        }
    }
    for (c, mut row) in centroids.axis_iter_mut(Axis(0)).enumerate() {
        row /= sizes[c] as f64;
    }
    Ok(ClusterStats {
        n_clusters,
        centroids,
        sizes,
        assignment,
    })
}

/// Selects which embedding objective to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Cosine,
    Discriminative,
}

impl LossKind {
    pub fn evaluate(
        self,
        emb: &EmbeddingMatrix,
        logits: ArrayView2<'_, f64>,
        labels: &SceneLabels,
        cfg: &LossConfig,
    ) -> Result<LossReport> {
        match self {
            LossKind::Cosine => cosine_loss(emb, logits, labels, cfg),
            LossKind::Discriminative => euclidean_discriminative_loss(emb, logits, labels, cfg),
        }
    }

    /// Arguments of every hinge (and norm) whose sign change is a kink of the
    /// loss. Singleton clusters are skipped: their pull term is constant.
    pub fn hinge_arguments(
        self,
        emb: &EmbeddingMatrix,
        labels: &SceneLabels,
        cfg: &LossConfig,
    ) -> Result<Vec<f64>> {
        let stats = cluster_stats(emb, labels)?;
        let x = emb.view();
        let mu = &stats.centroids;
        let mut out = Vec::new();
        for (i, c) in stats.assignment.iter().enumerate() {
            let Some(c) = *c else { continue };
            if stats.sizes[c] < 2 {
                continue;
            }
            match self {
                LossKind::Cosine => {
                    out.push(cfg.delta_v - cosine_similarity(mu.row(c), x.row(i))?);
                }
                LossKind::Discriminative => {
                    out.push(distance(mu.row(c), x.row(i)) - cfg.delta_v);
                }
            }
        }
        for a in 0..stats.n_clusters {
            if self == LossKind::Discriminative {
                out.push(mu.row(a).dot(&mu.row(a)).sqrt());
            }
            for b in (a + 1)..stats.n_clusters {
                match self {
                    LossKind::Cosine => {
                        out.push(cosine_similarity(mu.row(a), mu.row(b))? - cfg.delta_d);
                    }
                    LossKind::Discriminative => {
                        out.push(2.0 * cfg.delta_d - distance(mu.row(a), mu.row(b)));
                    }
                }
            }
        }
        Ok(out)
    }
}

pub(crate) fn distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

/// `∂s(a, b)/∂a` for the cosine similarity `s`.
pub(crate) fn cosine_grad_first(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Array1<f64> {
    let na2 = a.dot(&a);
    let na = na2.sqrt();
    let nb = b.dot(&b).sqrt();
    let s = a.dot(&b) / (na * nb);
    let inv = 1.0 / (na * nb);
    let mut g = b.to_owned();
    g.zip_mut_with(&a, |gv, &av| *gv = *gv * inv - s * av / na2);
    g
}

/// Adds `grad_mu[c] / N_c` to every member row of cluster `c`.
pub(crate) fn scatter_centroid_grad(stats: &ClusterStats, grad_mu: &Array2<f64>, grad_x: &mut Array2<f64>) {
    for (i, c) in stats.assignment.iter().enumerate() {
        if let Some(c) = *c {
            let scale = 1.0 / stats.sizes[c] as f64;
            grad_x
                .row_mut(i)
                .zip_mut_with(&grad_mu.row(c), |g, &m| *g += m * scale);
        }
    }
}

pub(crate) fn check_inputs(emb: &EmbeddingMatrix, logits: ArrayView2<'_, f64>, labels: &SceneLabels) -> Result<()> {
    let n = emb.n_points();
    if logits.nrows() != n {
        return Err(Error::ShapeMismatch {
            what: "logits rows",
            expected: n.to_string(),
            found: logits.nrows().to_string(),
        });
    }
    if labels.len() != n {
        return Err(Error::ShapeMismatch {
            what: "labels",
            expected: n.to_string(),
            found: labels.len().to_string(),
        });
    }
    Ok(())
}
