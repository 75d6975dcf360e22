//! Space and time scaling of the pairwise similarity-matrix loss against the
//! centroid-based cosine loss.
//!
//! Peak bytes come from explicit accounting of each method's working buffers,
//! so they are deterministic. Inputs are not counted. Wall time covers the
//! whole forward computation, reduction included, after one untimed warm-up
//! call whose buffers are then reused.

use std::fmt;
use std::io::Write;
use std::time::{Duration, Instant};

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

const F64: usize = std::mem::size_of::<f64>();

/// Rows of the similarity matrix filled per block.
const ROW_BLOCK: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Pairwise,
    Centroid,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Pairwise => "pairwise",
            Method::Centroid => "centroid",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub n_points: usize,
    pub method: Method,
    /// Seconds per forward evaluation, median over repeats.
    pub wall_time: f64,
    pub peak_bytes: usize,
    pub loss_value: f64,
}

/// Accounts for the working buffers of a method call: live and peak bytes.
/// Freed buffers are kept and handed out again, so repeated calls time the
/// computation rather than first-touch page faults of fresh memory.
#[derive(Debug, Default)]
pub struct BufferMeter {
    live: usize,
    peak: usize,
    cap: Option<usize>,
    pool: Vec<Vec<f64>>,
}

impl BufferMeter {
    pub fn new(cap_bytes: Option<usize>) -> Self {
        Self {
            cap: cap_bytes,
            ..Self::default()
        }
    }

    /// Starts a new call. Live and peak bytes return to zero; pooled buffers
    /// are kept.
    pub fn begin(&mut self) {
        self.live = 0;
        self.peak = 0;
    }

    /// A buffer of `len` reals, failing with [`Error::Capacity`] above the cap
    /// or when the allocator refuses. Fresh buffers are zeroed; recycled ones
    /// keep stale values, so callers initialize what they read.
    pub fn alloc(&mut self, len: usize) -> Result<Vec<f64>> {
        let bytes = len.saturating_mul(F64);
        let requested = self.live.saturating_add(bytes);
        let capacity_error = || Error::Capacity {
            requested_bytes: requested,
            cap_bytes: self.cap.unwrap_or(usize::MAX),
        };
        if self.cap.is_some_and(|cap| requested > cap) {
            return Err(capacity_error());
        }
        let best_fit = (0..self.pool.len())
            .filter(|&k| self.pool[k].capacity() >= len)
            .min_by_key(|&k| self.pool[k].capacity());
        let v = match best_fit {
            Some(k) => {
                let mut v = self.pool.swap_remove(k);
                v.resize(len, 0.0);
                v
            }
            None => {
                let mut v = Vec::new();
                v.try_reserve_exact(len).map_err(|_| capacity_error())?;
                v.resize(len, 0.0);
                v
            }
        };
        self.live = requested;
        self.peak = self.peak.max(self.live);
        Ok(v)
    }

    pub fn free(&mut self, buf: Vec<f64>) {
        self.live -= buf.len() * F64;
        self.pool.push(buf);
    }

    pub fn peak(&self) -> usize {
        self.peak
    }
}

/// Sum of `S_ij = ‖f_i − f_j‖` over all ordered pairs, computed from the
/// fully materialized `N×N` matrix as `√(‖f_i‖² − 2 f_i·f_j + ‖f_j‖²)`.
/// Returns the sum and the peak bytes of the matrix plus the norms buffer.
pub fn pairwise_similarity_loss(features: ArrayView2<'_, f64>, cap_bytes: Option<usize>) -> Result<(f64, usize)> {
    pairwise_similarity_loss_with(features, &mut BufferMeter::new(cap_bytes))
}

/// [`pairwise_similarity_loss`] with buffers drawn from `meter`.
pub fn pairwise_similarity_loss_with(features: ArrayView2<'_, f64>, meter: &mut BufferMeter) -> Result<(f64, usize)> {
    meter.begin();
    let (s, sum) = fill_similarity(features, meter)?;
    meter.free(s.into_raw_vec_and_offset().0);
    Ok((sum, meter.peak()))
}

/// The similarity matrix itself and the peak bytes spent building it.
pub fn pairwise_similarity_matrix(features: ArrayView2<'_, f64>, cap_bytes: Option<usize>) -> Result<(Array2<f64>, usize)> {
    let mut meter = BufferMeter::new(cap_bytes);
    let (s, _) = fill_similarity(features, &mut meter)?;
    Ok((s, meter.peak()))
}

/// Builds the matrix and sums it block by block while each block is in cache.
fn fill_similarity(features: ArrayView2<'_, f64>, meter: &mut BufferMeter) -> Result<(Array2<f64>, f64)> {
    let n = features.nrows();
    if n < 2 {
        return Err(Error::InvalidConfig("pairwise similarity needs at least 2 points".into()));
    }
    let mut norms = meter.alloc(n)?;
    for (norm, row) in norms.iter_mut().zip(features.rows()) {
        *norm = row.dot(&row);
    }
    let matrix = meter.alloc(n * n)?;
    let mut s = Array2::from_shape_vec((n, n), matrix).expect("length is n*n");
    let mut sum = 0.0;
    for r0 in (0..n).step_by(ROW_BLOCK) {
        let r1 = (r0 + ROW_BLOCK).min(n);
        let mut block = s.slice_mut(s![r0..r1, ..]);
        general_mat_mul(-2.0, &features.slice(s![r0..r1, ..]), &features.t(), 0.0, &mut block);
        for (i, (mut row, &ni)) in block.rows_mut().into_iter().zip(&norms[r0..r1]).enumerate() {
            for (v, &nj) in row.iter_mut().zip(&norms) {
                *v = (ni + *v + nj).max(0.0).sqrt();
            }
            row[r0 + i] = 0.0;
            sum += row.sum();
        }
    }
    meter.free(norms);
    Ok((s, sum))
}

/// Forward pass of the cosine pull and push terms, `l_var + l_dist`, for
/// points assigned to `0..n_clusters` (every cluster non-empty). Embeddings
/// are projected onto the unit sphere into an `N×d_e` buffer. Returns the
/// value and the peak bytes of its working buffers.
pub fn centroid_cosine_loss(
    emb: ArrayView2<'_, f64>,
    assignment: &[usize],
    n_clusters: usize,
    delta_v: f64,
    delta_d: f64,
) -> Result<(f64, usize)> {
    centroid_cosine_loss_with(emb, assignment, n_clusters, delta_v, delta_d, &mut BufferMeter::default())
}

/// [`centroid_cosine_loss`] with buffers drawn from `meter`.
pub fn centroid_cosine_loss_with(
    emb: ArrayView2<'_, f64>,
    assignment: &[usize],
    n_clusters: usize,
    delta_v: f64,
    delta_d: f64,
    meter: &mut BufferMeter,
) -> Result<(f64, usize)> {
    let (n, d) = emb.dim();
    if assignment.len() != n {
        return Err(Error::ShapeMismatch {
            what: "assignment",
            expected: n.to_string(),
            found: assignment.len().to_string(),
        });
    }
    meter.begin();
    let mut centroids = meter.alloc(n_clusters * d)?;
    let mut sizes = meter.alloc(n_clusters)?;
    centroids.fill(0.0);
    sizes.fill(0.0);
    let mut centroid_norms = meter.alloc(n_clusters)?;
    let mut unit = meter.alloc(n * d)?;
    let mut pull = meter.alloc(n)?;

    for (i, (row, &c)) in emb.rows().into_iter().zip(assignment).enumerate() {
        if c >= n_clusters {
            return Err(Error::InvalidConfig(format!("cluster {c} out of range")));
        }
        sizes[c] += 1.0;
        let norm = row.dot(&row).sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroNorm { row: i });
        }
        for ((acc, u), v) in centroids[c * d..(c + 1) * d].iter_mut().zip(&mut unit[i * d..(i + 1) * d]).zip(row) {
            *acc += v;
            *u = v / norm;
        }
    }
    for c in 0..n_clusters {
        if sizes[c] == 0.0 {
            return Err(Error::InvalidConfig(format!("cluster {c} is empty")));
        }
        let mu = &mut centroids[c * d..(c + 1) * d];
        mu.iter_mut().for_each(|v| *v /= sizes[c]);
        centroid_norms[c] = mu.iter().map(|v| v * v).sum::<f64>().sqrt();
        if centroid_norms[c] == 0.0 {
            return Err(Error::ZeroCentroid { cluster: c });
        }
    }
    for (i, &c) in assignment.iter().enumerate() {
        let mu = &centroids[c * d..(c + 1) * d];
        let dot: f64 = mu.iter().zip(&unit[i * d..(i + 1) * d]).map(|(a, b)| a * b).sum();
        let s = (dot / centroid_norms[c]).clamp(-1.0, 1.0);
        pull[i] = (delta_v - s).max(0.0) / sizes[c];
    }
    let l_var = pull.iter().sum::<f64>() / n_clusters as f64;

    let mut l_dist = 0.0;
    if n_clusters >= 2 {
        for a in 0..n_clusters {
            for b in 0..n_clusters {
                if a == b {
                    continue;
                }
                let dot: f64 = (0..d).map(|k| centroids[a * d + k] * centroids[b * d + k]).sum();
                let s = (dot / (centroid_norms[a] * centroid_norms[b])).clamp(-1.0, 1.0);
                l_dist += (s - delta_d).max(0.0);
            }
        }
        l_dist /= (n_clusters * (n_clusters - 1)) as f64;
    }
    for buf in [centroids, sizes, centroid_norms, unit, pull] {
        meter.free(buf);
    }
    Ok((l_var + l_dist, meter.peak()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    /// Point counts, ascending.
    pub n_points: Vec<usize>,
    pub feature_dim: usize,
    pub embedding_dim: usize,
    pub repeats: usize,
    pub n_clusters: usize,
    /// Pairwise runs whose buffers would exceed this are skipped and recorded.
    pub cap_bytes: usize,
    /// Each timing sample repeats the forward pass until this much time has
    /// elapsed, then reports the time per pass.
    pub min_sample_time: Duration,
    pub delta_v: f64,
    pub delta_d: f64,
    pub rng_seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            n_points: (10..=14).map(|k| 1usize << k).collect(),
            feature_dim: 32,
            embedding_dim: 32,
            repeats: 5,
            n_clusters: 8,
            cap_bytes: 3 << 30,
            min_sample_time: Duration::from_millis(50),
            delta_v: 0.9,
            delta_d: 0.4,
            rng_seed: 0,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_points.is_empty() || self.n_points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("n_points must be non-empty and strictly ascending".into()));
        }
        if self.n_points[0] < 2.max(self.n_clusters) {
            return Err(Error::InvalidConfig("n_points must be >= max(2, n_clusters)".into()));
        }
        if self.feature_dim == 0 || self.embedding_dim < 2 || self.repeats == 0 || self.n_clusters == 0 {
            return Err(Error::InvalidConfig(
                "feature_dim >= 1, embedding_dim >= 2, repeats >= 1 and n_clusters >= 1 required".into(),
            ));
        }
        Ok(())
    }
}

/// A configuration that was not run.
#[derive(Debug, Clone, PartialEq)]
pub struct SkipRecord {
    pub n_points: usize,
    pub method: Method,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScalingSweep {
    pub results: Vec<BenchResult>,
    pub skipped: Vec<SkipRecord>,
}

impl ScalingSweep {
    pub fn method(&self, method: Method) -> impl Iterator<Item = &BenchResult> {
        self.results.iter().filter(move |r| r.method == method)
    }

    /// Log-log slopes of `(peak_bytes, wall_time)` against `n_points`.
    pub fn slopes(&self, method: Method) -> Option<(f64, f64)> {
        let rows: Vec<&BenchResult> = self.method(method).collect();
        let n: Vec<f64> = rows.iter().map(|r| r.n_points as f64).collect();
        let bytes: Vec<f64> = rows.iter().map(|r| r.peak_bytes as f64).collect();
        let time: Vec<f64> = rows.iter().map(|r| r.wall_time).collect();
        Some((log_log_slope(&n, &bytes)?, log_log_slope(&n, &time)?))
    }
}

/// Least-squares slope of `ln y` on `ln x`. `None` with fewer than two
/// distinct `x` values.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len(), "x and y differ in length");
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    Some(sxy / sxx)
}

/// Seeded benchmark inputs for `n` points: features, embeddings and a
/// round-robin cluster assignment.
pub fn bench_inputs(n: usize, cfg: &BenchConfig) -> (Array2<f64>, Array2<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed ^ n as u64);
    let features = Array2::from_shape_simple_fn((n, cfg.feature_dim), || rng.random::<f64>());
    let embeddings = Array2::from_shape_simple_fn((n, cfg.embedding_dim), || rng.sample(StandardNormal));
    let assignment = (0..n).map(|i| i % cfg.n_clusters).collect();
    (features, embeddings, assignment)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Times `f` as described on [`BenchConfig::min_sample_time`].
fn sample<T>(min_time: Duration, mut f: impl FnMut() -> Result<T>) -> Result<(f64, T)> {
    let start = Instant::now();
    let mut calls = 0u32;
    loop {
        let out = f()?;
        calls += 1;
        let elapsed = start.elapsed();
        if elapsed >= min_time {
            return Ok((elapsed.as_secs_f64() / f64::from(calls), out));
        }
    }
}

fn measure(
    n: usize,
    method: Method,
    cfg: &BenchConfig,
    mut f: impl FnMut() -> Result<(f64, usize)>,
) -> Result<BenchResult> {
    let mut times = Vec::with_capacity(cfg.repeats);
    // untimed warm-up fills the buffer pool
    let mut last = Some(f()?);
    for _ in 0..cfg.repeats {
        let (t, out) = sample(cfg.min_sample_time, &mut f)?;
        if last.is_some_and(|prev| prev != out) {
            return Err(Error::InvalidConfig(format!("{method} loss changed between repeats at n={n}")));
        }
        times.push(t);
        last = Some(out);
    }
    let (loss_value, peak_bytes) = last.expect("repeats >= 1");
    Ok(BenchResult {
        n_points: n,
        method,
        wall_time: median(times).max(f64::MIN_POSITIVE),
        peak_bytes,
        loss_value,
    })
}

/// Runs both methods on identical seeded data for every point count,
/// sequentially. Pairwise runs above the cap are recorded in `skipped`.
pub fn run_scaling_sweep(cfg: &BenchConfig) -> Result<ScalingSweep> {
    cfg.validate()?;
    let mut sweep = ScalingSweep::default();
    for &n in &cfg.n_points {
        let (features, embeddings, assignment) = bench_inputs(n, cfg);
        let pairwise_bytes = (n * n + n) * F64;
        if pairwise_bytes > cfg.cap_bytes {
            sweep.skipped.push(SkipRecord {
                n_points: n,
                method: Method::Pairwise,
                reason: format!("needs {pairwise_bytes} bytes, cap is {}", cfg.cap_bytes),
            });
        } else {
            let mut meter = BufferMeter::new(Some(cfg.cap_bytes));
            match measure(n, Method::Pairwise, cfg, || pairwise_similarity_loss_with(features.view(), &mut meter)) {
                Ok(r) => sweep.results.push(r),
                Err(Error::Capacity { requested_bytes, .. }) => sweep.skipped.push(SkipRecord {
                    n_points: n,
                    method: Method::Pairwise,
                    reason: format!("allocation of {requested_bytes} bytes failed"),
                }),
                Err(e) => return Err(e),
            }
        }
        let mut meter = BufferMeter::default();
        sweep.results.push(measure(n, Method::Centroid, cfg, || {
            centroid_cosine_loss_with(embeddings.view(), &assignment, cfg.n_clusters, cfg.delta_v, cfg.delta_d, &mut meter)
        })?);
    }
    Ok(sweep)
}

/// CSV with columns `n_points,method,wall_time_s,peak_bytes,loss`. Skipped
/// configurations follow as `#` comment lines.
pub fn write_bench_csv<W: Write>(mut w: W, sweep: &ScalingSweep) -> Result<()> {
    writeln!(w, "n_points,method,wall_time_s,peak_bytes,loss")?;
    for r in &sweep.results {
        writeln!(w, "{},{},{},{},{}", r.n_points, r.method, r.wall_time, r.peak_bytes, r.loss_value)?;
    }
    for s in &sweep.skipped {
        writeln!(w, "# skipped n_points={} method={}: {}", s.n_points, s.method, s.reason)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::{cosine_loss, LossConfig};
    use crate::scene::{EmbeddingMatrix, SceneLabels};
    use ndarray::array;

    #[test]
    fn identical_points_have_zero_distance() {
        let f = array![[1.0, 2.0], [1.0, 2.0]];
        let (s, _) = pairwise_similarity_matrix(f.view(), None).unwrap();
        assert_eq!(s, Array2::zeros((2, 2)));
    }

    #[test]
    fn three_four_five() {
        let f = array![[0.0, 0.0], [3.0, 4.0]];
        let (s, _) = pairwise_similarity_matrix(f.view(), None).unwrap();
        assert_eq!(s[[0, 1]], 5.0);
        let (sum, bytes) = pairwise_similarity_loss(f.view(), None).unwrap();
        assert_eq!(sum, 10.0);
        assert_eq!(bytes, (4 + 2) * 8);
    }

    #[test]
    fn matrix_matches_double_loop() {
        let cfg = BenchConfig {
            feature_dim: 7,
            ..Default::default()
        };
        let (f, _, _) = bench_inputs(64, &cfg);
        let (s, _) = pairwise_similarity_matrix(f.view(), None).unwrap();
        for i in 0..64 {
            for j in 0..64 {
                let direct: f64 = (0..7).map(|k| (f[[i, k]] - f[[j, k]]).powi(2)).sum::<f64>().sqrt();
                assert!((s[[i, j]] - direct).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn pairwise_rejects_single_point_and_respects_cap() {
        assert!(pairwise_similarity_loss(array![[1.0]].view(), None).is_err());
        let f = Array2::<f64>::zeros((100, 2));
        assert!(matches!(
            pairwise_similarity_loss(f.view(), Some(1000)),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn matrix_entry_count_at_4096() {
        let n = 1usize << 12;
        assert!(n * n >= 1 << 24);
    }

    #[test]
    fn centroid_forward_matches_cosine_loss() {
        let cfg = BenchConfig {
            embedding_dim: 5,
            n_clusters: 4,
            ..Default::default()
        };
        let (_, emb, assignment) = bench_inputs(50, &cfg);
        let (value, _) = centroid_cosine_loss(emb.view(), &assignment, 4, 0.9, 0.4).unwrap();
        let labels = SceneLabels::new(vec![0; 50], assignment.iter().map(|&c| c as i32).collect()).unwrap();
        let report = cosine_loss(
            &EmbeddingMatrix::new(emb).unwrap(),
            Array2::zeros((50, 1)).view(),
            &labels,
            &LossConfig::default(),
        )
        .unwrap();
        assert!((value - (report.l_var + report.l_dist)).abs() < 1e-12);
    }

    #[test]
    fn bytes_scale_as_expected() {
        let cfg = BenchConfig::default();
        let at = |n: usize| {
            let (f, e, a) = bench_inputs(n, &cfg);
            let p = pairwise_similarity_loss(f.view(), None).unwrap().1 as f64;
            let c = centroid_cosine_loss(e.view(), &a, cfg.n_clusters, 0.9, 0.4).unwrap().1 as f64;
            (p, c)
        };
        let (p1, c1) = at(1024);
        let (p2, c2) = at(2048);
        assert!((p2 / p1 - 4.0).abs() < 0.4);
        assert!((c2 / c1 - 2.0).abs() < 0.2);
    }

    #[test]
    fn recycled_buffers_give_identical_results() {
        let cfg = BenchConfig::default();
        let (f, e, a) = bench_inputs(300, &cfg);
        let mut meter = BufferMeter::default();
        let first = pairwise_similarity_loss_with(f.view(), &mut meter).unwrap();
        let second = pairwise_similarity_loss_with(f.view(), &mut meter).unwrap();
        assert_eq!(first, second);
        assert_eq!(first, pairwise_similarity_loss(f.view(), None).unwrap());
        let fresh = centroid_cosine_loss(e.view(), &a, 8, 0.9, 0.4).unwrap();
        let mut meter = BufferMeter::default();
        for _ in 0..3 {
            assert_eq!(centroid_cosine_loss_with(e.view(), &a, 8, 0.9, 0.4, &mut meter).unwrap(), fresh);
        }
    }

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.5)).collect();
        assert!((log_log_slope(&x, &y).unwrap() - 1.5).abs() < 1e-12);
        assert_eq!(log_log_slope(&[2.0, 2.0], &[1.0, 5.0]), None);
    }

    #[test]
    fn small_sweep_with_skip() {
        let cfg = BenchConfig {
            n_points: vec![16, 32, 64],
            repeats: 2,
            min_sample_time: Duration::ZERO,
            cap_bytes: 40 * 40 * 8,
            ..Default::default()
        };
        let sweep = run_scaling_sweep(&cfg).unwrap();
        assert_eq!(sweep.method(Method::Centroid).count(), 3);
        assert_eq!(sweep.method(Method::Pairwise).count(), 2);
        assert_eq!(sweep.skipped.len(), 1);
        assert!(sweep.results.iter().all(|r| r.wall_time > 0.0));
        let mut buf = Vec::new();
        write_bench_csv(&mut buf, &sweep).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("n_points,method,wall_time_s,peak_bytes,loss\n16,pairwise,"));
        assert!(text.contains("# skipped n_points=64 method=pairwise"));
    }

    #[test]
    fn sweep_config_validation() {
        let bad = BenchConfig {
            n_points: vec![64, 32],
            ..Default::default()
        };
        assert!(run_scaling_sweep(&bad).is_err());
    }
}
