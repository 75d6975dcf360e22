//! Synthetic end-to-end runs: generate scenes, train a head, segment a
//! held-out scene and evaluate it.

use crate::clustering::{segment, DbscanConfig};
use crate::error::Result;
use crate::loss::{cosine_loss, inverse_frequency_weights};
use crate::metrics::{evaluate, proposal_recall, EvalConfig, EvalReport, ProposalRecall};
use crate::scene::{generate_scene, PointCloud, SceneLabels, SyntheticSceneSpec};
use crate::trainer::{train, EmbeddingHead, TrainConfig, DEFAULT_EMBEDDING_DIM};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Template for every scene; its seed is the experiment seed.
    pub scene: SyntheticSceneSpec,
    pub n_train_scenes: usize,
    pub embedding_dim: usize,
    pub normalize_rows: bool,
    /// Replace `train.loss.class_weights` by inverse-frequency weights of the
    /// training scenes.
    pub auto_class_weights: bool,
    pub train: TrainConfig,
    pub dbscan: DbscanConfig,
    pub per_category: bool,
    pub eval: EvalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scene: SyntheticSceneSpec::default(),
            n_train_scenes: 4,
            embedding_dim: DEFAULT_EMBEDDING_DIM,
            normalize_rows: false,
            auto_class_weights: true,
            train: TrainConfig::default(),
            dbscan: DbscanConfig::default(),
            per_category: true,
            eval: EvalConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub head: EmbeddingHead,
    pub history: Vec<f64>,
    /// Mean `l_var + l_dist` of the trained head over the training scenes.
    pub margin_loss: f64,
    pub test_scene: (PointCloud, SceneLabels),
    pub prediction: SceneLabels,
    pub report: EvalReport,
    pub recall: ProposalRecall,
}

/// Seed of the `k`-th training scene; the held-out scene uses `base` itself.
pub fn train_scene_seed(base: u64, k: usize) -> u64 {
    base.wrapping_mul(1_000_003).wrapping_add(k as u64 + 1)
}

pub fn generate_scenes(template: &SyntheticSceneSpec, seeds: impl IntoIterator<Item = u64>) -> Result<Vec<(PointCloud, SceneLabels)>> {
    seeds
        .into_iter()
        .map(|rng_seed| {
            generate_scene(&SyntheticSceneSpec {
                rng_seed,
                ..template.clone()
            })
        })
        .collect()
}

/// Mean `l_var + l_dist` of `head` over `scenes`.
pub fn margin_loss(head: &EmbeddingHead, scenes: &[(PointCloud, SceneLabels)], cfg: &TrainConfig) -> Result<f64> {
    let mut sum = 0.0;
    for (cloud, labels) in scenes {
        let (emb, logits) = head.forward(cloud)?;
        let r = cosine_loss(&emb, logits.view(), labels, &cfg.loss)?;
        sum += r.l_var + r.l_dist;
    }
    Ok(sum / scenes.len() as f64)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let base = cfg.scene.rng_seed;
    let train_scenes = generate_scenes(&cfg.scene, (0..cfg.n_train_scenes).map(|k| train_scene_seed(base, k)))?;
    let test_scene = generate_scene(&cfg.scene)?;

    let mut train_cfg = cfg.train.clone();
    if cfg.auto_class_weights {
        train_cfg.loss.class_weights =
            inverse_frequency_weights(train_scenes.iter().map(|(_, l)| l.semantic.as_slice()), cfg.scene.n_categories);
    }
    let d_in = test_scene.0.feature_dim() + 3;
    let init = EmbeddingHead::init(d_in, cfg.embedding_dim, cfg.scene.n_categories, cfg.normalize_rows, base);
    let (head, history) = train(&init, &train_scenes, &train_cfg)?;
    let margin_loss = margin_loss(&head, &train_scenes, &train_cfg)?;

    let prediction = segment(&head, &test_scene.0, cfg.per_category, &cfg.dbscan)?;
    let report = evaluate(&test_scene.1, &prediction, &cfg.eval)?;
    let recall = proposal_recall(&test_scene.1, &prediction, cfg.eval.iou_threshold, cfg.scene.n_categories);
    Ok(ExperimentOutcome {
        head,
        history,
        margin_loss,
        test_scene,
        prediction,
        report,
        recall,
    })
}
