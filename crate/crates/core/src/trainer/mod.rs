//! Embedding head training with Adam on the cosine-margin loss.

mod adam;
mod head;

pub use adam::Adam;
pub use head::{EmbeddingHead, HeadActivations, HeadGradient};

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::loss::{cosine_loss, LossConfig, LossReport};
use crate::scene::{PointCloud, SceneLabels};

/// Embedding dimension used throughout.
pub const DEFAULT_EMBEDDING_DIM: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Step index from which the learning rate is multiplied by `lr_drop_factor`.
    pub lr_drop_step: usize,
    pub lr_drop_factor: f64,
    /// Scenes per step, sampled with replacement.
    pub batch_size: usize,
    pub total_steps: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub loss: LossConfig,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            lr_drop_step: 1500,
            lr_drop_factor: 0.1,
            batch_size: 4,
            total_steps: 2000,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            loss: LossConfig::default(),
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(self.lr_drop_factor.is_finite() && self.lr_drop_factor > 0.0) {
            return Err(Error::InvalidConfig("lr_drop_factor must be > 0".into()));
        }
        let unit = |b: f64| (0.0..1.0).contains(&b);
        if !(unit(self.adam_beta1) && unit(self.adam_beta2) && self.adam_eps > 0.0) {
            return Err(Error::InvalidConfig("Adam betas must be in [0, 1) and eps > 0".into()));
        }
        self.loss.validate_cosine()
    }

    pub fn learning_rate_at(&self, step: usize) -> f64 {
        if step >= self.lr_drop_step {
            self.learning_rate * self.lr_drop_factor
        } else {
            self.learning_rate
        }
    }
}

/// Loss of one scene and its gradient with respect to the head parameters.
pub fn scene_gradient(
    head: &EmbeddingHead,
    input: ArrayView2<'_, f64>,
    labels: &SceneLabels,
    loss: &LossConfig,
) -> Result<(LossReport, HeadGradient)> {
    let act = head.forward_input(input)?;
    let report = cosine_loss(&act.embeddings, act.logits.view(), labels, loss)?;
    let grad = head.backward(&act, &report.grad_embeddings, &report.grad_logits);
    Ok((report, grad))
}

/// Trains `head` for `cfg.total_steps` Adam steps. Each step averages the
/// gradients of `cfg.batch_size` scenes drawn with replacement. Returns the
/// trained head and the mean batch total loss of every step.
pub fn train(
    head: &EmbeddingHead,
    scenes: &[(PointCloud, SceneLabels)],
    cfg: &TrainConfig,
) -> Result<(EmbeddingHead, Vec<f64>)> {
    if scenes.is_empty() {
        return Err(Error::InvalidConfig("training needs at least one scene".into()));
    }
    cfg.validate()?;
    let inputs: Vec<Array2<f64>> = scenes.iter().map(|(cloud, _)| cloud.head_input()).collect();
    let mut head = head.clone();
    let sizes = head.slices_mut().map(|s| s.len());
    let mut adam = Adam::new(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, &sizes);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut history = Vec::with_capacity(cfg.total_steps);
    let scale = 1.0 / cfg.batch_size as f64;

    for step in 0..cfg.total_steps {
        let mut grad = HeadGradient::zeros_like(&head);
        let mut batch_loss = 0.0;
        for _ in 0..cfg.batch_size {
            let k = rng.random_range(0..scenes.len());
            let (report, g) = scene_gradient(&head, inputs[k].view(), &scenes[k].1, &cfg.loss)?;
            batch_loss += report.total * scale;
            grad.scaled_add(scale, &g);
        }
        if !batch_loss.is_finite() {
            return Err(Error::Divergence { step });
        }
        history.push(batch_loss);
        let mut params = head.slices_mut();
        adam.step(&mut params, &grad.slices(), cfg.learning_rate_at(step));
    }
    Ok((head, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{generate_scene, SyntheticSceneSpec};

    fn scene(seed: u64) -> (PointCloud, SceneLabels) {
        generate_scene(&SyntheticSceneSpec {
            n_instances: 4,
            n_categories: 2,
            points_per_instance: (30, 40),
            feature_dim: 4,
            rng_seed: seed,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn zero_steps_is_a_no_op() {
        let scenes = vec![scene(0)];
        let head = EmbeddingHead::init(scenes[0].0.feature_dim() + 3, 8, 2, false, 1);
        let cfg = TrainConfig {
            total_steps: 0,
            ..Default::default()
        };
        let (trained, history) = train(&head, &scenes, &cfg).unwrap();
        assert_eq!(trained, head);
        assert!(history.is_empty());
    }

    #[test]
    fn training_reduces_loss_and_is_reproducible() {
        let scenes = vec![scene(0), scene(1)];
        let head = EmbeddingHead::init(scenes[0].0.feature_dim() + 3, 8, 2, false, 1);
        let cfg = TrainConfig {
            total_steps: 200,
            learning_rate: 0.01,
            batch_size: 2,
            ..Default::default()
        };
        let (_, history) = train(&head, &scenes, &cfg).unwrap();
        assert_eq!(history.len(), 200);
        assert!(history[199] < history[0], "{} !< {}", history[199], history[0]);
        let (_, again) = train(&head, &scenes, &cfg).unwrap();
        assert_eq!(history, again);
    }

    #[test]
    fn learning_rate_schedule() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.learning_rate_at(1499), 0.001);
        assert!((cfg.learning_rate_at(1500) - 0.0001).abs() < 1e-18);
    }

    #[test]
    fn rejects_empty_scene_list_and_bad_config() {
        let head = EmbeddingHead::init(10, 4, 2, false, 0);
        assert!(train(&head, &[], &TrainConfig::default()).is_err());
        let scenes = vec![scene(0)];
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        assert!(train(&head, &scenes, &bad).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let scenes = vec![scene(0)];
        let mut head = EmbeddingHead::init(scenes[0].0.feature_dim() + 3, 8, 2, false, 1);
        head.classifier_bias[0] = f64::INFINITY;
        let cfg = TrainConfig {
            total_steps: 3,
            ..Default::default()
        };
        assert!(matches!(train(&head, &scenes, &cfg), Err(Error::Divergence { step: 0 })));
    }
}
