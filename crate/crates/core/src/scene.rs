//! Scene domain types and the synthetic scene generator.

use std::collections::HashMap;

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Instance id of points that belong to no object.
pub const NOISE: i32 = -1;

/// A raw scene: coordinates in meters, RGB colors in `[0, 1]` and per-point
/// input features.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    coords: Array2<f64>,
    colors: Array2<f64>,
    features: Array2<f64>,
}

impl PointCloud {
    pub fn new(coords: Array2<f64>, colors: Array2<f64>, features: Array2<f64>) -> Result<Self> {
        let n = coords.nrows();
        if n == 0 {
            return Err(Error::InvalidSpec("point cloud must have at least one point".into()));
        }
        check_shape("coords", &coords, n, Some(3))?;
        check_shape("colors", &colors, n, Some(3))?;
        check_shape("features", &features, n, None)?;
        if colors.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::InvalidSpec("color entries must lie in [0, 1]".into()));
        }
        Ok(Self {
            coords,
            colors,
            features,
        })
    }

    pub fn n_points(&self) -> usize {
        self.coords.nrows()
    }

    /// Dimension `d_f` of the per-point input feature.
    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn coords(&self) -> ArrayView2<'_, f64> {
        self.coords.view()
    }

    pub fn colors(&self) -> ArrayView2<'_, f64> {
        self.colors.view()
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    /// Rows `[f_i; color_i]`, the input of the embedding head.
    pub fn head_input(&self) -> Array2<f64> {
        ndarray::concatenate(Axis(1), &[self.features.view(), self.colors.view()])
            .expect("row counts are validated at construction")
    }

    /// A new cloud holding the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            coords: self.coords.select(Axis(0), rows),
            colors: self.colors.select(Axis(0), rows),
            features: self.features.select(Axis(0), rows),
        }
    }
}

fn check_shape(what: &'static str, m: &Array2<f64>, rows: usize, cols: Option<usize>) -> Result<()> {
    let ok = m.nrows() == rows && cols.is_none_or(|c| m.ncols() == c);
    if ok {
        Ok(())
    } else {
        Err(Error::ShapeMismatch {
            what,
            expected: format!("{rows}x{}", cols.map_or("_".to_string(), |c| c.to_string())),
            found: format!("{}x{}", m.nrows(), m.ncols()),
        })
    }
}

/// Per-point semantic category and instance id (ground truth or prediction).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SceneLabels {
    pub semantic: Vec<usize>,
    /// Instance id per point; [`NOISE`] marks points in no instance.
    pub instance: Vec<i32>,
}

impl SceneLabels {
    pub fn new(semantic: Vec<usize>, instance: Vec<i32>) -> Result<Self> {
        if semantic.len() != instance.len() {
            return Err(Error::ShapeMismatch {
                what: "labels",
                expected: format!("{} instance ids", semantic.len()),
                found: format!("{}", instance.len()),
            });
        }
        if let Some(&bad) = instance.iter().find(|&&i| i < NOISE) {
            return Err(Error::InvalidSpec(format!("instance id {bad} is below -1")));
        }
        Ok(Self { semantic, instance })
    }

    pub fn len(&self) -> usize {
        self.instance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instance.is_empty()
    }

    /// Number of distinct non-noise instance ids.
    pub fn n_instances(&self) -> usize {
        let mut ids: Vec<i32> = self.instance.iter().copied().filter(|&i| i != NOISE).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }

    /// Point indices of each instance, indexed by compacted id.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let compact = compact_instance_ids(self);
        let mut out: Vec<Vec<usize>> = Vec::new();
        for (i, &id) in compact.instance.iter().enumerate() {
            if id == NOISE {
                continue;
            }
            let id = id as usize;
            if id >= out.len() {
                out.resize_with(id + 1, Vec::new);
            }
            out[id].push(i);
        }
        out
    }

    /// Instance ids whose points disagree on the semantic label.
    pub fn inconsistent_instances(&self) -> Vec<i32> {
        let mut seen: HashMap<i32, usize> = HashMap::new();
        let mut bad = Vec::new();
        for (&id, &sem) in self.instance.iter().zip(&self.semantic) {
            if id == NOISE {
                continue;
            }
            match seen.get(&id) {
                Some(&s) if s != sem && !bad.contains(&id) => bad.push(id),
                Some(_) => {}
                None => {
                    seen.insert(id, sem);
                }
            }
        }
        bad.sort_unstable();
        bad
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            semantic: rows.iter().map(|&r| self.semantic[r]).collect(),
            instance: rows.iter().map(|&r| self.instance[r]).collect(),
        }
    }
}

/// Remaps instance ids `>= 0` onto `0..C` in order of first appearance; noise
/// is preserved.
pub fn compact_instance_ids(labels: &SceneLabels) -> SceneLabels {
    let mut map: HashMap<i32, i32> = HashMap::new();
    let instance = labels
        .instance
        .iter()
        .map(|&id| {
            if id == NOISE {
                NOISE
            } else {
                let next = map.len() as i32;
                *map.entry(id).or_insert(next)
            }
        })
        .collect();
    SceneLabels {
        semantic: labels.semantic.clone(),
        instance,
    }
}

/// Per-point embeddings `h_i`, one row per point.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix(Array2<f64>);

impl EmbeddingMatrix {
    /// Fails when `d_e < 2` or any row is the zero vector.
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.ncols() < 2 {
            return Err(Error::ShapeMismatch {
                what: "embedding dimension",
                expected: ">= 2".into(),
                found: values.ncols().to_string(),
            });
        }
        for (row, r) in values.axis_iter(Axis(0)).enumerate() {
            if r.iter().all(|&v| v == 0.0) {
                return Err(Error::ZeroNorm { row });
            }
        }
        Ok(Self(values))
    }

    pub fn n_points(&self) -> usize {
        self.0.nrows()
    }

    pub fn dim(&self) -> usize {
        self.0.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    /// Rows scaled to unit Euclidean norm.
    pub fn normalized(&self) -> Array2<f64> {
        let mut out = self.0.clone();
        for mut row in out.axis_iter_mut(Axis(0)) {
            let norm = row.dot(&row).sqrt();
            row.mapv_inplace(|v| v / norm);
        }
        out
    }
}

/// Parameters of the synthetic scene generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSceneSpec {
    pub n_instances: usize,
    pub n_categories: usize,
    /// Inclusive `(min, max)` number of points drawn per instance.
    pub points_per_instance: (usize, usize),
    /// Side of the cubic region, meters.
    pub region_size: f64,
    /// Length of the instance signature part of the features; the full
    /// feature dimension is `feature_dim + 3` (normalized coordinates appended).
    pub feature_dim: usize,
    pub noise_sigma: f64,
    pub rng_seed: u64,
}

impl Default for SyntheticSceneSpec {
    fn default() -> Self {
        Self {
            n_instances: 8,
            n_categories: 3,
            points_per_instance: (256, 256),
            region_size: 2.0,
            feature_dim: 8,
            noise_sigma: 0.05,
            rng_seed: 0,
        }
    }
}

impl SyntheticSceneSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.points_per_instance;
        let problem = if self.n_instances == 0 {
            Some("n_instances must be >= 1")
        } else if self.n_categories == 0 {
            Some("n_categories must be >= 1")
        } else if lo == 0 {
            Some("every instance needs at least one point")
        } else if lo > hi {
            Some("points_per_instance min exceeds max")
        } else if !(self.region_size.is_finite() && self.region_size > 0.0) {
            Some("region_size must be positive")
        } else if self.feature_dim == 0 {
            Some("feature_dim must be >= 1")
        } else if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            Some("noise_sigma must be >= 0")
        } else {
            None
        };
        match problem {
            Some(msg) => Err(Error::InvalidSpec(msg.into())),
            None => Ok(()),
        }
    }

    /// Spread of each instance blob.
    pub fn blob_sigma(&self) -> f64 {
        self.region_size / (4.0 * (self.n_instances as f64).sqrt())
    }
}

/// Fixed color for a category, spread around the hue circle.
pub fn category_color(category: usize, n_categories: usize) -> [f64; 3] {
    let h = category as f64 / n_categories.max(1) as f64 * 6.0;
    let (s, v) = (0.8, 0.8);
    let c = v * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as usize {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

/// Generates a scene of Gaussian instance blobs. Instance `k` has category
/// `k % n_categories` and a one-hot signature at position `k % feature_dim`.
/// Point order is shuffled. Pure function of `spec`.
pub fn generate_scene(spec: &SyntheticSceneSpec) -> Result<(PointCloud, SceneLabels)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let region = spec.region_size;
    let blob = Normal::new(0.0, spec.blob_sigma()).expect("sigma is positive");
    let noise = Normal::new(0.0, spec.noise_sigma).expect("sigma is non-negative");
    let (lo, hi) = spec.points_per_instance;

    let counts: Vec<usize> = (0..spec.n_instances).map(|_| rng.random_range(lo..=hi)).collect();
    let n: usize = counts.iter().sum();
    let d_f = spec.feature_dim + 3;

    let mut coords = Array2::<f64>::zeros((n, 3));
    let mut colors = Array2::<f64>::zeros((n, 3));
    let mut features = Array2::<f64>::zeros((n, d_f));
    let mut semantic = Vec::with_capacity(n);
    let mut instance = Vec::with_capacity(n);

    let mut row = 0;
    for (k, &count) in counts.iter().enumerate() {
        let category = k % spec.n_categories;
        let center: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..=region));
        let base = category_color(category, spec.n_categories);
        for _ in 0..count {
            for a in 0..3 {
                let p = (center[a] + blob.sample(&mut rng)).clamp(0.0, region);
                coords[[row, a]] = p;
                features[[row, spec.feature_dim + a]] = p / region;
                colors[[row, a]] = (base[a] + noise.sample(&mut rng)).clamp(0.0, 1.0);
            }
            for j in 0..spec.feature_dim {
                let hot = if j == k % spec.feature_dim { 1.0 } else { 0.0 };
                features[[row, j]] = hot + noise.sample(&mut rng);
            }
            semantic.push(category);
            instance.push(k as i32);
            row += 1;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let cloud = PointCloud::new(coords, colors, features)?.select(&order);
    let labels = SceneLabels { semantic, instance }.select(&order);
    Ok((cloud, labels))
}

/// Per-axis min-max normalization of coordinates to `[0, 1]`; degenerate axes
/// map to 0.
pub fn normalized_coords(coords: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = coords.to_owned();
    for a in 0..coords.ncols() {
        let col = coords.slice(s![.., a]);
        let lo = col.fold(f64::INFINITY, |m, &v| m.min(v));
        let hi = col.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let span = hi - lo;
        out.slice_mut(s![.., a])
            .mapv_inplace(|v| if span > 0.0 { (v - lo) / span } else { 0.0 });
    }
    out
}
