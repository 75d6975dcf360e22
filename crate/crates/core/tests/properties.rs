//! Property tests over the loss, metric, clustering and trainer invariants.

use ndarray::Array2;
use pcinst::clustering::{dbscan, suppress_small_clusters};
use pcinst::loss::{cosine_loss, cosine_similarity, cluster_stats, LossConfig};
use pcinst::metrics::{aggregate_results, summarize};
use pcinst::trainer::{scene_gradient, EmbeddingHead};
use pcinst::{EmbeddingMatrix, SceneLabels};
use proptest::prelude::*;

fn labelled_embeddings() -> impl Strategy<Value = (Array2<f64>, Vec<i32>)> {
    (1usize..5, 2usize..6, 4usize..40).prop_flat_map(|(c, d, n)| {
        let n = n.max(c);
        (
            prop::collection::vec(-3.0f64..3.0, n * d),
            prop::collection::vec(-1i32..c as i32, n),
        )
            .prop_map(move |(values, mut ids)| {
                // every cluster keeps at least one member
                for (k, id) in ids.iter_mut().take(c).enumerate() {
                    *id = k as i32;
                }
                let mut x = Array2::from_shape_vec((n, d), values).unwrap();
                for mut row in x.rows_mut() {
                    if row.iter().all(|v| v.abs() < 1e-3) {
                        row[0] = 1.0;
                    }
                }
                (x, ids)
            })
    })
}

fn scene_labels(ids: &[i32]) -> SceneLabels {
    SceneLabels::new(vec![0; ids.len()], ids.to_vec()).unwrap()
}

fn loss_terms(x: &Array2<f64>, ids: &[i32], cfg: &LossConfig) -> Option<(f64, f64, Array2<f64>)> {
    let emb = EmbeddingMatrix::new(x.clone()).ok()?;
    let logits = Array2::zeros((x.nrows(), 1));
    let r = cosine_loss(&emb, logits.view(), &scene_labels(ids), cfg).ok()?;
    Some((r.l_var, r.l_dist, r.grad_embeddings))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn cosine_loss_ignores_embedding_scale((x, ids) in labelled_embeddings(), lambda in 0.01f64..100.0) {
        let cfg = LossConfig::default();
        let a = loss_terms(&x, &ids, &cfg);
        let b = loss_terms(&x.mapv(|v| v * lambda), &ids, &cfg);
        prop_assume!(a.is_some());
        let ((va, da, _), (vb, db, _)) = (a.unwrap(), b.unwrap());
        prop_assert!((va - vb).abs() < 1e-10 && (da - db).abs() < 1e-10);
    }

    #[test]
    fn cosine_loss_ignores_point_order((x, ids) in labelled_embeddings(), seed in any::<u64>()) {
        let cfg = LossConfig::default();
        let n = x.nrows();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let px = x.select(ndarray::Axis(0), &perm);
        let pids: Vec<i32> = perm.iter().map(|&i| ids[i]).collect();
        let a = loss_terms(&x, &ids, &cfg);
        prop_assume!(a.is_some());
        let (va, da, ga) = a.unwrap();
        let (vb, db, gb) = loss_terms(&px, &pids, &cfg).unwrap();
        prop_assert!((va - vb).abs() < 1e-12 && (da - db).abs() < 1e-12);
        for (k, &i) in perm.iter().enumerate() {
            for j in 0..x.ncols() {
                prop_assert!((gb[[k, j]] - ga[[i, j]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hinges_grow_with_tighter_margins(
        (x, ids) in labelled_embeddings(),
        dv in 0.1f64..0.9,
        dd in -0.5f64..0.05,
        step in 0.0f64..0.09,
    ) {
        let loose = LossConfig { delta_v: dv, delta_d: dd, ..LossConfig::default() };
        let tight = LossConfig { delta_v: dv + step, delta_d: dd - step, ..LossConfig::default() };
        let a = loss_terms(&x, &ids, &loose);
        prop_assume!(a.is_some());
        let (va, da, _) = a.unwrap();
        let (vb, db, _) = loss_terms(&x, &ids, &tight).unwrap();
        prop_assert!(vb >= va - 1e-12);
        prop_assert!(db >= da - 1e-12);
    }

    /// With zero margin loss, same-cluster points are within `2·acos(delta_v)`
    /// of each other and centroid cosines are at most `delta_d`. With
    /// `delta_d < 2·delta_v² − 1` every point is also more similar to its own
    /// centroid than to any other.
    #[test]
    fn zero_margin_loss_separates_clusters(
        c in 2usize..5,
        per in 2usize..10,
        noise in prop::collection::vec(-0.2f64..0.2, 5 * 10 * 6),
    ) {
        let d = 6;
        let n = c * per;
        let x = Array2::from_shape_fn((n, d), |(i, k)| {
            let axis = if k == i / per { 1.0 } else { 0.0 };
            axis + noise[i * d + k]
        });
        let ids: Vec<i32> = (0..n).map(|i| (i / per) as i32).collect();
        let cfg = LossConfig::default();
        prop_assert!(cfg.delta_d < 2.0 * cfg.delta_v * cfg.delta_v - 1.0);
        let (v, dist, _) = loss_terms(&x, &ids, &cfg).unwrap();
        prop_assume!(v == 0.0 && dist == 0.0);
        let emb = EmbeddingMatrix::new(x.clone()).unwrap();
        let stats = cluster_stats(&emb, &scene_labels(&ids)).unwrap();
        let max_angle = 2.0 * cfg.delta_v.acos() + 1e-12;
        for i in 0..n {
            for j in (0..n).filter(|&j| ids[j] == ids[i]) {
                let s = cosine_similarity(x.row(i), x.row(j)).unwrap();
                prop_assert!(s.clamp(-1.0, 1.0).acos() <= max_angle);
            }
        }
        for a in 0..c {
            for b in (0..c).filter(|&b| b != a) {
                let s = cosine_similarity(stats.centroids.row(a), stats.centroids.row(b)).unwrap();
                prop_assert!(s <= cfg.delta_d + 1e-12);
            }
        }
        for i in 0..n {
            let own = ids[i] as usize;
            let s_own = cosine_similarity(stats.centroids.row(own), x.row(i)).unwrap();
            for other in (0..c).filter(|&o| o != own) {
                let s = cosine_similarity(stats.centroids.row(other), x.row(i)).unwrap();
                prop_assert!(s_own > s);
            }
        }
    }
}

fn label_pair() -> impl Strategy<Value = (SceneLabels, SceneLabels)> {
    (1usize..120).prop_flat_map(|n| {
        (
            prop::collection::vec(-1i32..5, n),
            prop::collection::vec(-1i32..7, n),
        )
            .prop_map(|(g, p)| (scene_labels(&g), scene_labels(&p)))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn containment_is_exclusive_above_one_half((gt, pred) in label_pair(), t in 0.5001f64..1.0) {
        let c = aggregate_results(&gt, &pred, t);
        prop_assert_eq!(c.exclusivity_violations(), 0);
        for p in 0..c.pred2gt.len() {
            prop_assert!(c.gt2pred.iter().filter(|m| m.contains(&p)).count() <= 1);
        }
        for g in 0..c.gt2pred.len() {
            prop_assert!(c.pred2gt.iter().filter(|m| m.contains(&g)).count() <= 1);
        }
    }

    #[test]
    fn stricter_threshold_never_adds_matches((gt, pred) in label_pair(), t in 0.5001f64..0.99, dt in 0.0f64..0.3) {
        let t2 = (t + dt).min(1.0);
        let (a, b) = (aggregate_results(&gt, &pred, t), aggregate_results(&gt, &pred, t2));
        let pairs = |c: &pcinst::metrics::Containment| c.gt2pred.iter().chain(&c.pred2gt).map(Vec::len).sum::<usize>();
        prop_assert!(pairs(&b) <= pairs(&a));
        let (ra, rb) = (summarize(&a, a.pred2gt.len()), summarize(&b, b.pred2gt.len()));
        prop_assert!(rb.tp <= ra.tp);
        prop_assert!(rb.fp >= ra.fp);
        prop_assert!(rb.recall <= ra.recall);
    }
}

proptest! {
    #[test]
    fn metric_ignores_ids_and_prediction_semantics((gt, pred) in label_pair(), t in 0.5001f64..1.0, shift in 1i32..50) {
        let relabel = |l: &SceneLabels, k: i32| {
            let instance = l.instance.iter().map(|&i| if i < 0 { i } else { (i * 7 + k) % 97 }).collect();
            SceneLabels::new(l.semantic.iter().map(|&s| s + k as usize).collect(), instance).unwrap()
        };
        let base = aggregate_results(&gt, &pred, t);
        let moved = aggregate_results(&relabel(&gt, shift), &relabel(&pred, shift + 3), t);
        let (a, b) = (summarize(&base, base.pred2gt.len()), summarize(&moved, moved.pred2gt.len()));
        prop_assert_eq!((a.tp, a.pd, a.fm, a.fp, a.n_gt, a.n_pred), (b.tp, b.pd, b.fm, b.fp, b.n_gt, b.n_pred));
    }

    #[test]
    fn suppression_only_removes_clusters(labels in prop::collection::vec(-1i32..8, 0..200), min_size in 0usize..40) {
        let out = suppress_small_clusters(&labels, min_size);
        let size = |v: &[i32], id: i32| v.iter().filter(|&&l| l == id).count();
        prop_assert_eq!(out.len(), labels.len());
        for (i, &l) in out.iter().enumerate() {
            if l >= 0 {
                prop_assert!(labels[i] >= 0);
                prop_assert!(size(&out, l) >= min_size);
            }
        }
        let before: std::collections::BTreeSet<_> = labels.iter().filter(|&&l| l >= 0).collect();
        let after: std::collections::BTreeSet<_> = out.iter().filter(|&&l| l >= 0).collect();
        prop_assert!(after.len() <= before.len());
        for i in 0..labels.len() {
            for j in 0..labels.len() {
                if out[i] >= 0 && out[j] >= 0 {
                    prop_assert_eq!(out[i] == out[j], labels[i] == labels[j]);
                }
            }
        }
    }
}

/// Core flags under the inclusive-radius, self-counting rule.
fn core_points(x: &Array2<f64>, eps: f64, min_pts: usize) -> Vec<bool> {
    (0..x.nrows())
        .map(|i| {
            (0..x.nrows())
                .filter(|&j| (&x.row(i) - &x.row(j)).mapv(|v| v * v).sum().sqrt() <= eps)
                .count()
                >= min_pts
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn dbscan_core_partition_ignores_point_order(
        pts in prop::collection::vec((0i32..12, 0i32..12), 1..80),
        eps in 0.5f64..2.5,
        min_pts in 1usize..6,
        seed in any::<u64>(),
    ) {
        let n = pts.len();
        // half-integer coordinates put many pairs exactly at eps
        let x = Array2::from_shape_fn((n, 2), |(i, k)| if k == 0 { pts[i].0 as f64 * 0.5 } else { pts[i].1 as f64 * 0.5 });
        let mut perm: Vec<usize> = (0..n).collect();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let px = x.select(ndarray::Axis(0), &perm);
        let a = dbscan(x.view(), eps, min_pts);
        let b_perm = dbscan(px.view(), eps, min_pts);
        let mut b = vec![0; n];
        for (k, &i) in perm.iter().enumerate() {
            b[i] = b_perm[k];
        }
        let core = core_points(&x, eps, min_pts);
        for i in 0..n {
            prop_assert_eq!(a[i] < 0, b[i] < 0);
            for j in 0..n {
                if core[i] && core[j] {
                    prop_assert_eq!(a[i] == a[j], b[i] == b[j]);
                }
            }
        }
    }
}

fn perturbed(head: &EmbeddingHead, block: usize, idx: usize, h: f64) -> EmbeddingHead {
    let mut out = head.clone();
    out.slices_mut()[block][idx] += h;
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn head_gradient_matches_finite_differences(seed in any::<u64>(), normalize in any::<bool>(), n in 6usize..24) {
        let (d_in, d_e, k) = (5, 4, 3);
        let head = EmbeddingHead::init(d_in, d_e, k, normalize, seed);
        let input = Array2::from_shape_fn((n, d_in), |(i, j)| ((i * 7 + j * 3 + seed as usize % 11) as f64 * 0.37).sin());
        let ids: Vec<i32> = (0..n).map(|i| if i % 5 == 4 { -1 } else { (i % 3) as i32 }).collect();
        let labels = SceneLabels::new((0..n).map(|i| i % k).collect(), ids).unwrap();
        let cfg = LossConfig { class_weights: vec![1.0, 2.0, 0.5], ..LossConfig::default() };
        let (_, grad) = scene_gradient(&head, input.view(), &labels, &cfg).unwrap();
        let total = |h: &EmbeddingHead| scene_gradient(h, input.view(), &labels, &cfg).unwrap().0.total;
        let eps = 1e-6;
        for (block, g) in grad.slices().iter().enumerate() {
            for (idx, &analytic) in g.iter().enumerate() {
                let numeric = (total(&perturbed(&head, block, idx, eps)) - total(&perturbed(&head, block, idx, -eps))) / (2.0 * eps);
                let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
                prop_assert!(err < 1e-4, "block {} idx {}: analytic {} numeric {}", block, idx, analytic, numeric);
            }
        }
    }
}
