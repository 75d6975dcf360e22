use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Mean over points of `w[y_i] · −log softmax(logits_i)[y_i]`, with its
/// gradient with respect to the logits. An empty `class_weights` means
/// uniform weight 1.
pub fn weighted_cross_entropy(
    logits: ArrayView2<'_, f64>,
    semantic: &[usize],
    class_weights: &[f64],
) -> Result<(f64, Array2<f64>)> {
    let (n, k) = logits.dim();
    if semantic.len() != n {
        return Err(Error::ShapeMismatch {
            what: "semantic labels",
            expected: n.to_string(),
            found: semantic.len().to_string(),
        });
    }
    if !class_weights.is_empty() && class_weights.len() != k {
        return Err(Error::ShapeMismatch {
            what: "class weights",
            expected: k.to_string(),
            found: class_weights.len().to_string(),
        });
    }
    if let Some(&label) = semantic.iter().find(|&&y| y >= k) {
        return Err(Error::LabelOutOfRange {
            label,
            n_categories: k,
        });
    }

    let mut grad = Array2::<f64>::zeros((n, k));
    if n == 0 {
        return Ok((0.0, grad));
    }
    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    for (i, &y) in semantic.iter().enumerate() {
        let row = logits.row(i);
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let sum: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        let w = class_weights.get(y).copied().unwrap_or(1.0);
        loss += w * (log_z - row[y]);
        for (j, g) in grad.row_mut(i).iter_mut().enumerate() {
            let p = (row[j] - log_z).exp();
            let target = if j == y { 1.0 } else { 0.0 };
            *g = w * inv_n * (p - target);
        }
    }
    Ok((loss * inv_n, grad))
}

/// Inverse point frequency per category, normalized to mean 1. Categories
/// with no points get the weight of an average category before normalization.
pub fn inverse_frequency_weights<'a, I>(semantic_labels: I, n_categories: usize) -> Vec<f64>
where
    I: IntoIterator<Item = &'a [usize]>,
{
    let mut counts = vec![0usize; n_categories];
    for labels in semantic_labels {
        for &y in labels {
            if y < n_categories {
                counts[y] += 1;
            }
        }
    }
    let total: usize = counts.iter().sum();
    if total == 0 || n_categories == 0 {
        return vec![1.0; n_categories];
    }
    let raw: Vec<f64> = counts
        .iter()
        .map(|&c| {
            if c == 0 {
                1.0
            } else {
                total as f64 / (n_categories as f64 * c as f64)
            }
        })
        .collect();
    let mean = raw.iter().sum::<f64>() / n_categories as f64;
    raw.into_iter().map(|w| w / mean).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn uniform_two_class_is_ln2() {
        let logits = array![[0.0, 0.0], [3.0, 3.0]];
        let (loss, grad) = weighted_cross_entropy(logits.view(), &[0, 1], &[]).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((grad[[0, 0]] - (-0.25)).abs() < 1e-15);
        assert!((grad[[0, 1]] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn confident_correct_tends_to_zero() {
        let logits = array![[60.0, 0.0]];
        let (loss, _) = weighted_cross_entropy(logits.view(), &[0], &[]).unwrap();
        assert!(loss < 1e-20);
    }

    #[test]
    fn weight_scales_uniform_case() {
        let logits = Array2::zeros((5, 2));
        let (loss, _) = weighted_cross_entropy(logits.view(), &[0; 5], &[2.0, 1.0]).unwrap();
        assert!((loss - 2.0 * std::f64::consts::LN_2).abs() < 1e-14);
    }

    #[test]
    fn out_of_range_label() {
        let logits = Array2::zeros((1, 2));
        assert!(matches!(
            weighted_cross_entropy(logits.view(), &[2], &[]),
            Err(Error::LabelOutOfRange { label: 2, .. })
        ));
    }

    #[test]
    fn inverse_frequency_has_mean_one() {
        let a = [0usize, 0, 0, 1];
        let w = inverse_frequency_weights([&a[..]], 3);
        assert!((w.iter().sum::<f64>() / 3.0 - 1.0).abs() < 1e-12);
        assert!(w[1] > w[0]);
    }
}
