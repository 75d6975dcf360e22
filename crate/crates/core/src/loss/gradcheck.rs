//! Central-difference verification of the analytic loss gradients.

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{LossConfig, LossKind};
use crate::error::{Error, Result};
use crate::scene::{EmbeddingMatrix, SceneLabels};

/// Absolute floor of the relative-error denominator. Entries whose analytic
/// and numerical values are both below it are compared in absolute terms.
pub const GRADCHECK_FLOOR: f64 = 1e-6;

const KINK_ATTEMPTS: usize = 100;

/// `|a − n| / max(|a|, |n|, GRADCHECK_FLOOR)`.
pub fn relative_error(analytic: f64, numerical: f64) -> f64 {
    let scale = analytic.abs().max(numerical.abs()).max(GRADCHECK_FLOOR);
    (analytic - numerical).abs() / scale
}

/// Jitters `emb` (seeded) until every hinge argument is at least `min_margin`
/// away from its kink. Returns the input unchanged if it already is.
pub fn move_off_kinks(
    kind: LossKind,
    emb: &EmbeddingMatrix,
    labels: &SceneLabels,
    cfg: &LossConfig,
    min_margin: f64,
    seed: u64,
) -> Result<EmbeddingMatrix> {
    let clear = |e: &EmbeddingMatrix| -> Result<bool> {
        Ok(kind
            .hinge_arguments(e, labels, cfg)?
            .iter()
            .all(|m| m.abs() >= min_margin))
    };
    if clear(emb)? {
        return Ok(emb.clone());
    }
    let base = emb.view();
    let rms = (base.iter().map(|v| v * v).sum::<f64>() / base.len() as f64).sqrt();
    let jitter = Normal::new(0.0, 1e-3 * rms.max(1e-12)).expect("positive sigma");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..KINK_ATTEMPTS {
        let candidate = base.mapv(|v| v + jitter.sample(&mut rng));
        if let Ok(candidate) = EmbeddingMatrix::new(candidate) {
            if clear(&candidate)? {
                return Ok(candidate);
            }
        }
    }
    Err(Error::InvalidConfig(format!(
        "could not move embeddings {min_margin} away from hinge kinks"
    )))
}

/// Maximum relative error between the analytic gradient of `kind` and
/// central differences of its total loss over every embedding and logit
/// coordinate. Embeddings within `10·epsilon` of a hinge kink are jittered
/// off it first.
pub fn finite_difference_check(
    kind: LossKind,
    emb: &EmbeddingMatrix,
    logits: ArrayView2<'_, f64>,
    labels: &SceneLabels,
    cfg: &LossConfig,
    epsilon: f64,
) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon <= 1e-3) {
        return Err(Error::InvalidConfig(format!("epsilon {epsilon} not in (0, 1e-3]")));
    }
    let emb = move_off_kinks(kind, emb, labels, cfg, 10.0 * epsilon, 0x6b69_6e6b)?;
    let report = kind.evaluate(&emb, logits, labels, cfg)?;
    let mut x = emb.into_inner();
    let mut z = logits.to_owned();

    let total_at = |x: &Array2<f64>, z: &Array2<f64>| -> Result<f64> {
        let e = EmbeddingMatrix::new(x.clone())?;
        Ok(kind.evaluate(&e, z.view(), labels, cfg)?.total)
    };

    let mut worst = 0.0f64;
    for idx in 0..x.len() {
        let (r, c) = (idx / x.ncols(), idx % x.ncols());
        let orig = x[[r, c]];
        x[[r, c]] = orig + epsilon;
        let plus = total_at(&x, &z)?;
        x[[r, c]] = orig - epsilon;
        let minus = total_at(&x, &z)?;
        x[[r, c]] = orig;
        let numerical = (plus - minus) / (2.0 * epsilon);
        worst = worst.max(relative_error(report.grad_embeddings[[r, c]], numerical));
    }
    for idx in 0..z.len() {
        let (r, c) = (idx / z.ncols(), idx % z.ncols());
        let orig = z[[r, c]];
        z[[r, c]] = orig + epsilon;
        let plus = total_at(&x, &z)?;
        z[[r, c]] = orig - epsilon;
        let minus = total_at(&x, &z)?;
        z[[r, c]] = orig;
        let numerical = (plus - minus) / (2.0 * epsilon);
        worst = worst.max(relative_error(report.grad_logits[[r, c]], numerical));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;

    fn random_instance(seed: u64) -> (EmbeddingMatrix, Array2<f64>, SceneLabels) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 10;
        let emb = Array2::from_shape_fn((n, 4), |_| rng.random_range(-1.0..1.0));
        let logits = Array2::from_shape_fn((n, 2), |_| rng.random_range(-2.0..2.0));
        let instance: Vec<i32> = (0..n as i32).map(|i| i % 2).collect();
        let semantic: Vec<usize> = instance.iter().map(|&i| i as usize).collect();
        (
            EmbeddingMatrix::new(emb).unwrap(),
            logits,
            SceneLabels::new(semantic, instance).unwrap(),
        )
    }

    #[test]
    fn cosine_gradient_matches_central_differences() {
        let (emb, logits, labels) = random_instance(3);
        let err = finite_difference_check(
            LossKind::Cosine,
            &emb,
            logits.view(),
            &labels,
            &LossConfig::default(),
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-5, "max relative error {err}");
    }

    #[test]
    fn discriminative_gradient_matches_central_differences() {
        let (emb, logits, labels) = random_instance(4);
        let cfg = LossConfig {
            delta_v: 0.3,
            delta_d: 1.0,
            gamma: 0.01,
            ..Default::default()
        };
        let err = finite_difference_check(LossKind::Discriminative, &emb, logits.view(), &labels, &cfg, 1e-5)
            .unwrap();
        assert!(err < 1e-5, "max relative error {err}");
    }

    #[test]
    fn zero_gradient_region() {
        // tight clusters far apart in angle, confident correct logits
        let emb = EmbeddingMatrix::new(array![[1.0, 0.01], [1.0, -0.01], [0.01, 1.0], [-0.01, 1.0]]).unwrap();
        let logits = array![[40.0, 0.0], [40.0, 0.0], [0.0, 40.0], [0.0, 40.0]];
        let labels = SceneLabels::new(vec![0, 0, 1, 1], vec![0, 0, 1, 1]).unwrap();
        let cfg = LossConfig::default();
        let r = LossKind::Cosine.evaluate(&emb, logits.view(), &labels, &cfg).unwrap();
        assert_eq!(r.l_var + r.l_dist, 0.0);
        let err = finite_difference_check(LossKind::Cosine, &emb, logits.view(), &labels, &cfg, 1e-5).unwrap();
        assert!(err < 1e-5, "max relative error {err}");
    }

    #[test]
    fn epsilon_out_of_range() {
        let (emb, logits, labels) = random_instance(5);
        let cfg = LossConfig::default();
        assert!(finite_difference_check(LossKind::Cosine, &emb, logits.view(), &labels, &cfg, 1e-2).is_err());
        assert!(finite_difference_check(LossKind::Cosine, &emb, logits.view(), &labels, &cfg, 0.0).is_err());
    }
}
