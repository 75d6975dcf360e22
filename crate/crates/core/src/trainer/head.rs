use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scene::{EmbeddingMatrix, PointCloud};

/// One fully connected layer mapping `[f_i; color_i]` to an embedding, with a
/// parallel linear classifier on the same input producing semantic logits.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingHead {
    /// `d_e × d_in`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    /// `n_categories × d_in`
    pub classifier_weight: Array2<f64>,
    pub classifier_bias: Array1<f64>,
    /// Scale each embedding row to unit norm after the affine map.
    pub normalize_rows: bool,
}

/// Gradient of a loss with respect to every head parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGradient {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub classifier_weight: Array2<f64>,
    pub classifier_bias: Array1<f64>,
}

impl HeadGradient {
    pub fn zeros_like(head: &EmbeddingHead) -> Self {
        Self {
            weight: Array2::zeros(head.weight.raw_dim()),
            bias: Array1::zeros(head.bias.raw_dim()),
            classifier_weight: Array2::zeros(head.classifier_weight.raw_dim()),
            classifier_bias: Array1::zeros(head.classifier_bias.raw_dim()),
        }
    }

    pub fn scaled_add(&mut self, alpha: f64, other: &HeadGradient) {
        self.weight.scaled_add(alpha, &other.weight);
        self.bias.scaled_add(alpha, &other.bias);
        self.classifier_weight.scaled_add(alpha, &other.classifier_weight);
        self.classifier_bias.scaled_add(alpha, &other.classifier_bias);
    }

    pub fn slices(&self) -> [&[f64]; 4] {
        [
            self.weight.as_slice().expect("standard layout"),
            self.bias.as_slice().expect("standard layout"),
            self.classifier_weight.as_slice().expect("standard layout"),
            self.classifier_bias.as_slice().expect("standard layout"),
        ]
    }
}

/// Intermediate values of a forward pass needed by [`EmbeddingHead::backward`].
#[derive(Debug, Clone)]
pub struct HeadActivations {
    pub input: Array2<f64>,
    /// Affine output before optional row normalization.
    pub pre_norm: Array2<f64>,
    pub embeddings: EmbeddingMatrix,
    pub logits: Array2<f64>,
}

impl EmbeddingHead {
    /// Seeded uniform init in `[−1/√d_in, 1/√d_in]` for weights and biases.
    pub fn init(d_in: usize, d_e: usize, n_categories: usize, normalize_rows: bool, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (d_in.max(1) as f64).sqrt();
        let mut draw = |shape: (usize, usize)| Array2::from_shape_simple_fn(shape, || rng.random_range(-bound..=bound));
        let weight = draw((d_e, d_in));
        let bias = draw((1, d_e)).remove_axis(Axis(0));
        let classifier_weight = draw((n_categories, d_in));
        let classifier_bias = draw((1, n_categories)).remove_axis(Axis(0));
        Self {
            weight,
            bias,
            classifier_weight,
            classifier_bias,
            normalize_rows,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn embedding_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn n_categories(&self) -> usize {
        self.classifier_weight.nrows()
    }

    pub fn forward(&self, cloud: &PointCloud) -> Result<(EmbeddingMatrix, Array2<f64>)> {
        let act = self.forward_input(cloud.head_input().view())?;
        Ok((act.embeddings, act.logits))
    }

    /// Forward pass on precomputed head input rows.
    pub fn forward_input(&self, input: ArrayView2<'_, f64>) -> Result<HeadActivations> {
        if input.ncols() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                what: "head input",
                expected: format!("{} columns", self.input_dim()),
                found: format!("{} columns", input.ncols()),
            });
        }
        let pre_norm = input.dot(&self.weight.t()) + &self.bias;
        let logits = input.dot(&self.classifier_weight.t()) + &self.classifier_bias;
        let mut emb = pre_norm.clone();
        if self.normalize_rows {
            for (row, mut r) in emb.axis_iter_mut(Axis(0)).enumerate() {
                let norm = r.dot(&r).sqrt();
                if norm == 0.0 {
                    return Err(Error::ZeroNorm { row });
                }
                r /= norm;
            }
        }
        Ok(HeadActivations {
            input: input.to_owned(),
            pre_norm,
            embeddings: EmbeddingMatrix::new(emb)?,
            logits,
        })
    }

    /// Back-propagates loss gradients on embeddings and logits to the
    /// parameters.
    pub fn backward(&self, act: &HeadActivations, grad_emb: &Array2<f64>, grad_logits: &Array2<f64>) -> HeadGradient {
        let grad_pre = if self.normalize_rows {
            // h = z/‖z‖  ⇒  ∂L/∂z = (g − (g·h)h)/‖z‖
            let h = act.embeddings.view();
            let mut out = grad_emb.clone();
            for (i, mut g) in out.axis_iter_mut(Axis(0)).enumerate() {
                let z = act.pre_norm.row(i);
                let norm = z.dot(&z).sqrt();
                let gh = g.dot(&h.row(i));
                g.zip_mut_with(&h.row(i), |gv, &hv| *gv = (*gv - gh * hv) / norm);
            }
            out
        } else {
            grad_emb.clone()
        };
        HeadGradient {
            weight: grad_pre.t().dot(&act.input),
            bias: grad_pre.sum_axis(Axis(0)),
            classifier_weight: grad_logits.t().dot(&act.input),
            classifier_bias: grad_logits.sum_axis(Axis(0)),
        }
    }

    pub fn slices_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.weight.as_slice_mut().expect("standard layout"),
            self.bias.as_slice_mut().expect("standard layout"),
            self.classifier_weight.as_slice_mut().expect("standard layout"),
            self.classifier_bias.as_slice_mut().expect("standard layout"),
        ]
    }
}
