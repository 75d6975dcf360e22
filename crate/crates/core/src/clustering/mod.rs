//! Instance extraction: DBSCAN over embeddings concatenated with normalized
//! coordinates, run per predicted category, followed by small-cluster
//! suppression.

mod dbscan;

pub use dbscan::{dbscan, dbscan_reference};

use ndarray::{concatenate, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::scene::{compact_instance_ids, normalized_coords, EmbeddingMatrix, PointCloud, SceneLabels, NOISE};
use crate::trainer::EmbeddingHead;

#[derive(Debug, Clone, PartialEq)]
pub struct DbscanConfig {
    pub eps: f64,
    pub min_pts: usize,
    /// Clusters smaller than this become noise after clustering.
    pub min_cluster_size: usize,
    /// Scale of the normalized coordinates appended to the embeddings.
    pub coord_weight: f64,
}

impl Default for DbscanConfig {
    fn default() -> Self {
        Self {
            eps: 0.25,
            min_pts: 8,
            min_cluster_size: 35,
            coord_weight: 1.0,
        }
    }
}

impl DbscanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::InvalidConfig("eps must be finite and > 0".into()));
        }
        if self.min_pts == 0 || self.min_cluster_size == 0 {
            return Err(Error::InvalidConfig("min_pts and min_cluster_size must be >= 1".into()));
        }
        if !(self.coord_weight.is_finite() && self.coord_weight >= 0.0) {
            return Err(Error::InvalidConfig("coord_weight must be >= 0".into()));
        }
        Ok(())
    }
}

/// `[h_i ; coord_weight · normalized(p_i)]` per point, coordinates min-max
/// normalized per axis within the scene.
pub fn build_cluster_features(
    emb: ArrayView2<'_, f64>,
    cloud: &PointCloud,
    coord_weight: f64,
) -> Result<Array2<f64>> {
    if emb.nrows() != cloud.n_points() {
        return Err(Error::ShapeMismatch {
            what: "embeddings",
            expected: cloud.n_points().to_string(),
            found: emb.nrows().to_string(),
        });
    }
    let coords = normalized_coords(cloud.coords()) * coord_weight;
    Ok(concatenate(Axis(1), &[emb, coords.view()]).expect("row counts checked"))
}

/// Relabels clusters with fewer than `min_cluster_size` points as noise and
/// compacts the surviving ids.
pub fn suppress_small_clusters(labels: &[i32], min_cluster_size: usize) -> Vec<i32> {
    let mut sizes = std::collections::HashMap::<i32, usize>::new();
    for &l in labels.iter().filter(|&&l| l != NOISE) {
        *sizes.entry(l).or_default() += 1;
    }
    let kept: Vec<i32> = labels
        .iter()
        .map(|&l| if l != NOISE && sizes[&l] >= min_cluster_size { l } else { NOISE })
        .collect();
    compact_instance_ids(&SceneLabels {
        semantic: vec![0; kept.len()],
        instance: kept,
    })
    .instance
}

/// Index of the largest logit per row (first on ties).
pub fn argmax_rows(logits: ArrayView2<'_, f64>) -> Vec<usize> {
    logits
        .rows()
        .into_iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (j, &v)| if v > best.1 { (j, v) } else { best })
                .0
        })
        .collect()
}

/// Clusters given embeddings and logits. Embedding rows are scaled to unit
/// norm first. With `per_category`, DBSCAN runs separately on the points of
/// each predicted class; instance ids are unique across classes.
pub fn segment_embeddings(
    emb: &EmbeddingMatrix,
    logits: ArrayView2<'_, f64>,
    cloud: &PointCloud,
    per_category: bool,
    cfg: &DbscanConfig,
) -> Result<SceneLabels> {
    cfg.validate()?;
    let features = build_cluster_features(emb.normalized().view(), cloud, cfg.coord_weight)?;
    let semantic = argmax_rows(logits);
    let n = cloud.n_points();

    let groups: Vec<Vec<usize>> = if per_category {
        let k = logits.ncols();
        let mut g = vec![Vec::new(); k];
        for (i, &c) in semantic.iter().enumerate() {
            g[c].push(i);
        }
        g
    } else {
        vec![(0..n).collect()]
    };

    let mut instance = vec![NOISE; n];
    let mut offset = 0i32;
    for rows in groups.iter().filter(|g| !g.is_empty()) {
        let sub = features.select(Axis(0), rows);
        let local = suppress_small_clusters(&dbscan(sub.view(), cfg.eps, cfg.min_pts), cfg.min_cluster_size);
        let count = local.iter().copied().max().map_or(0, |m| m + 1);
        for (&row, &l) in rows.iter().zip(&local) {
            if l != NOISE {
                instance[row] = l + offset;
            }
        }
        offset += count;
    }
    SceneLabels::new(semantic, instance)
}

/// Runs the head on `cloud` and extracts instances.
pub fn segment(head: &EmbeddingHead, cloud: &PointCloud, per_category: bool, cfg: &DbscanConfig) -> Result<SceneLabels> {
    let (emb, logits) = head.forward(cloud)?;
    segment_embeddings(&emb, logits.view(), cloud, per_category, cfg)
}
