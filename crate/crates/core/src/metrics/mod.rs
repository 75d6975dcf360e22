//! Containment-based instance segmentation metric.
//!
//! An object `A` is contained in `B` when `IoS(A, B) = |A ∩ B| / |A|` exceeds a
//! threshold `t`. Each prediction is labeled with one or more patterns:
//!
//! - `TP`: the prediction and a GT contain each other.
//! - `PD` (partial detection): the prediction is contained in a GT that is not
//!   contained in it.
//! - `FM` (false merging): a GT is contained in the prediction, but the
//!   prediction is not contained in that GT.
//! - `FP`: no containment either way.
//!
//! With `t > 0.5` an object can be contained in at most one other object.
//! Semantic labels are ignored; noise points (instance −1) belong to no object.

mod recall;

pub use recall::{proposal_recall, ProposalRecall};

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::Write;

use crate::error::{Error, Result};
use crate::scene::{compact_instance_ids, SceneLabels, NOISE};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    /// IoS containment threshold `t`, in `(0.5, 1]`.
    pub ios_threshold: f64,
    pub iou_threshold: f64,
    /// Predictions with fewer points are dropped before evaluation.
    pub min_pred_size: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            ios_threshold: 0.75,
            iou_threshold: 0.5,
            min_pred_size: 35,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ios_threshold > 0.5 && self.ios_threshold <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "ios_threshold {} not in (0.5, 1]",
                self.ios_threshold
            )));
        }
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "iou_threshold {} not in (0, 1]",
                self.iou_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pattern {
    Tp,
    Pd,
    Fm,
    Fp,
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pattern::Tp => "TP",
            Pattern::Pd => "PD",
            Pattern::Fm => "FM",
            Pattern::Fp => "FP",
        })
    }
}

/// Containment maps between GT and predicted objects (compacted ids).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Containment {
    /// `gt2pred[g]`: predictions contained in GT `g`.
    pub gt2pred: Vec<Vec<usize>>,
    /// `pred2gt[p]`: GTs contained in prediction `p`.
    pub pred2gt: Vec<Vec<usize>>,
}

impl Containment {
    /// Objects contained in more than one object, counted on both sides.
    pub fn exclusivity_violations(&self) -> usize {
        let over = |lists: &[Vec<usize>], n: usize| {
            let mut hits = vec![0usize; n];
            lists.iter().flatten().for_each(|&k| hits[k] += 1);
            hits.iter().filter(|&&h| h > 1).count()
        };
        over(&self.pred2gt, self.gt2pred.len()) + over(&self.gt2pred, self.pred2gt.len())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub n_gt: usize,
    pub n_pred: usize,
    /// Numbers of predictions whose label set contains each pattern.
    pub tp: usize,
    pub pd: usize,
    pub fm: usize,
    pub fp: usize,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub pd_ratio: f64,
    pub fm_ratio: f64,
    pub fp_ratio: f64,
    /// Deduplicated, sorted patterns of each prediction.
    pub per_prediction_labels: Vec<Vec<Pattern>>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl EvalReport {
    fn from_labels(n_gt: usize, per_prediction_labels: Vec<Vec<Pattern>>) -> Self {
        let n_pred = per_prediction_labels.len();
        let count = |p: Pattern| per_prediction_labels.iter().filter(|l| l.contains(&p)).count();
        let (tp, pd, fm, fp) = (count(Pattern::Tp), count(Pattern::Pd), count(Pattern::Fm), count(Pattern::Fp));
        let precision = ratio(tp, n_pred);
        let recall = ratio(tp, n_gt);
        let f_score = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            n_gt,
            n_pred,
            tp,
            pd,
            fm,
            fp,
            precision,
            recall,
            f_score,
            pd_ratio: ratio(pd, n_pred),
            fm_ratio: ratio(fm, n_pred),
            fp_ratio: ratio(fp, n_pred),
            per_prediction_labels,
        }
    }

    /// Pools several scenes: predictions and GTs are concatenated in order.
    pub fn merge<'a>(reports: impl IntoIterator<Item = &'a EvalReport>) -> Self {
        let mut n_gt = 0;
        let mut labels = Vec::new();
        for r in reports {
            n_gt += r.n_gt;
            labels.extend(r.per_prediction_labels.iter().cloned());
        }
        Self::from_labels(n_gt, labels)
    }

    /// `key: value` lines, one per scalar field.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        for (k, v) in [
            ("n_gt", self.n_gt.to_string()),
            ("n_pred", self.n_pred.to_string()),
            ("tp", self.tp.to_string()),
            ("pd", self.pd.to_string()),
            ("fm", self.fm.to_string()),
            ("fp", self.fp.to_string()),
            ("precision", self.precision.to_string()),
            ("recall", self.recall.to_string()),
            ("f_score", self.f_score.to_string()),
            ("pd_ratio", self.pd_ratio.to_string()),
            ("fm_ratio", self.fm_ratio.to_string()),
            ("fp_ratio", self.fp_ratio.to_string()),
        ] {
            s.push_str(k);
            s.push_str(": ");
            s.push_str(&v);
            s.push('\n');
        }
        s
    }
}

/// `|A ∩ B| / |A|` for point-id sets.
pub fn ios(a: &[usize], b: &[usize]) -> Result<f64> {
    let a: HashSet<usize> = a.iter().copied().collect();
    if a.is_empty() {
        return Err(Error::EmptySet);
    }
    let b: HashSet<usize> = b.iter().copied().collect();
    Ok(a.intersection(&b).count() as f64 / a.len() as f64)
}

/// Object sizes of both label sets and their intersection counts.
struct Overlap {
    gt_sizes: Vec<usize>,
    pred_sizes: Vec<usize>,
    inter: HashMap<(usize, usize), usize>,
}

impl Overlap {
    fn new(gt: &SceneLabels, pred: &SceneLabels) -> Self {
        let g = compact_instance_ids(gt).instance;
        let p = compact_instance_ids(pred).instance;
        let sizes = |ids: &[i32]| {
            let n = ids.iter().map(|&i| i + 1).max().unwrap_or(0).max(0) as usize;
            let mut s = vec![0usize; n];
            ids.iter().filter(|&&i| i != NOISE).for_each(|&i| s[i as usize] += 1);
            s
        };
        let mut inter = HashMap::new();
        for (&a, &b) in g.iter().zip(&p) {
            if a != NOISE && b != NOISE {
                *inter.entry((a as usize, b as usize)).or_insert(0) += 1;
            }
        }
        Self {
            gt_sizes: sizes(&g),
            pred_sizes: sizes(&p),
            inter,
        }
    }

    fn get(&self, g: usize, p: usize) -> usize {
        self.inter.get(&(g, p)).copied().unwrap_or(0)
    }
}

/// Builds both containment maps with strict `> t` comparisons. Objects are
/// indexed by compacted instance id.
pub fn aggregate_results(gt: &SceneLabels, pred: &SceneLabels, t: f64) -> Containment {
    assert_eq!(gt.len(), pred.len(), "GT and prediction cover different point counts");
    let ov = Overlap::new(gt, pred);
    let mut gt2pred = vec![Vec::new(); ov.gt_sizes.len()];
    let mut pred2gt = vec![Vec::new(); ov.pred_sizes.len()];
    for (g, &g_size) in ov.gt_sizes.iter().enumerate() {
        for (p, &p_size) in ov.pred_sizes.iter().enumerate() {
            let common = ov.get(g, p) as f64;
            if common / g_size as f64 > t {
                pred2gt[p].push(g);
            }
            if common / p_size as f64 > t {
                gt2pred[g].push(p);
            }
        }
    }
    Containment { gt2pred, pred2gt }
}

/// Labels every prediction from the containment maps.
///
/// First pass over GTs: each contained prediction is `TP` if it also contains
/// the GT, else `PD`. Second pass over predictions: `FP` if it contains no GT
/// and has no label yet; `FM` for each contained GT that does not contain it.
pub fn summarize(c: &Containment, n_pred: usize) -> EvalReport {
    assert_eq!(c.pred2gt.len(), n_pred, "pred2gt length differs from n_pred");
    let mut results: Vec<Vec<Pattern>> = vec![Vec::new(); n_pred];
    for (g, g2p) in c.gt2pred.iter().enumerate() {
        for &p in g2p {
            let label = if c.pred2gt[p].contains(&g) { Pattern::Tp } else { Pattern::Pd };
            results[p].push(label);
        }
    }
    for (p, p2g) in c.pred2gt.iter().enumerate() {
        if p2g.is_empty() && results[p].is_empty() {
            results[p].push(Pattern::Fp);
        }
        for &g in p2g {
            if !c.gt2pred[g].contains(&p) {
                results[p].push(Pattern::Fm);
            }
        }
    }
    for r in &mut results {
        r.sort_unstable();
        r.dedup();
    }
    EvalReport::from_labels(c.gt2pred.len(), results)
}

/// Predictions smaller than `min_size` become noise; ids are compacted.
pub fn drop_small_predictions(pred: &SceneLabels, min_size: usize) -> SceneLabels {
    let mut sizes: HashMap<i32, usize> = HashMap::new();
    pred.instance
        .iter()
        .filter(|&&i| i != NOISE)
        .for_each(|&i| *sizes.entry(i).or_default() += 1);
    let instance = pred
        .instance
        .iter()
        .map(|&i| if i != NOISE && sizes[&i] >= min_size { i } else { NOISE })
        .collect();
    compact_instance_ids(&SceneLabels {
        semantic: pred.semantic.clone(),
        instance,
    })
}

fn check_lengths(gt: &SceneLabels, pred: &SceneLabels) -> Result<()> {
    if gt.len() != pred.len() {
        return Err(Error::ShapeMismatch {
            what: "prediction labels",
            expected: gt.len().to_string(),
            found: pred.len().to_string(),
        });
    }
    Ok(())
}

/// Drops small predictions, then aggregates and summarizes at `cfg.ios_threshold`.
pub fn evaluate(gt: &SceneLabels, pred: &SceneLabels, cfg: &EvalConfig) -> Result<EvalReport> {
    cfg.validate()?;
    check_lengths(gt, pred)?;
    let pred = drop_small_predictions(pred, cfg.min_pred_size);
    let c = aggregate_results(gt, &pred, cfg.ios_threshold);
    Ok(summarize(&c, c.pred2gt.len()))
}

/// Thresholds of the IoS sweep: 0.50, 0.55, …, 0.95.
pub fn sweep_thresholds() -> Vec<f64> {
    (0..10).map(|k| (50 + 5 * k) as f64 / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub t: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub pd: f64,
    pub fm: f64,
    pub fp: f64,
    /// False at `t <= 0.5`, where containment is no longer exclusive.
    pub exclusive: bool,
}

/// Evaluates at every threshold of [`sweep_thresholds`], pooling all scenes.
pub fn ios_sweep(scenes: &[(SceneLabels, SceneLabels)], min_pred_size: usize) -> Result<Vec<SweepRow>> {
    for (gt, pred) in scenes {
        check_lengths(gt, pred)?;
    }
    let filtered: Vec<(&SceneLabels, SceneLabels)> = scenes
        .iter()
        .map(|(gt, pred)| (gt, drop_small_predictions(pred, min_pred_size)))
        .collect();
    Ok(sweep_thresholds()
        .into_iter()
        .map(|t| {
            let reports: Vec<EvalReport> = filtered
                .iter()
                .map(|(gt, pred)| {
                    let c = aggregate_results(gt, pred, t);
                    summarize(&c, c.pred2gt.len())
                })
                .collect();
            let r = EvalReport::merge(&reports);
            SweepRow {
                t,
                precision: r.precision,
                recall: r.recall,
                f1: r.f_score,
                pd: r.pd_ratio,
                fm: r.fm_ratio,
                fp: r.fp_ratio,
                exclusive: t > 0.5,
            }
        })
        .collect())
}

/// CSV with columns `t,precision,recall,f1,pd,fm,fp`. Rows with a
/// non-exclusive threshold are preceded by a `#` comment line.
pub fn write_sweep_csv<W: Write>(mut w: W, rows: &[SweepRow]) -> Result<()> {
    writeln!(w, "t,precision,recall,f1,pd,fm,fp")?;
    for r in rows {
        if !r.exclusive {
            writeln!(w, "# t={:.2} does not satisfy t > 0.5; containment may be non-exclusive", r.t)?;
        }
        writeln!(
            w,
            "{:.2},{},{},{},{},{},{}",
            r.t, r.precision, r.recall, r.f1, r.pd, r.fm, r.fp
        )?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(instance: Vec<i32>) -> SceneLabels {
        SceneLabels {
            semantic: vec![0; instance.len()],
            instance,
        }
    }

    fn cfg(t: f64) -> EvalConfig {
        EvalConfig {
            ios_threshold: t,
            iou_threshold: 0.5,
            min_pred_size: 0,
        }
    }

    #[test]
    fn ios_examples() {
        let a: Vec<usize> = (0..10).collect();
        let b: Vec<usize> = (2..30).collect();
        assert_eq!(ios(&a, &b).unwrap(), 0.8);
        assert_eq!(ios(&a, &[50, 51]).unwrap(), 0.0);
        assert_eq!(ios(&a[2..5], &a).unwrap(), 1.0);
        assert_eq!(ios(&a, &a).unwrap(), 1.0);
        assert!(matches!(ios(&[], &a), Err(Error::EmptySet)));
    }

    #[test]
    fn identical_prediction() {
        let gt = labels(vec![0, 0, 1, 1, 1, 2]);
        let pred = labels(vec![7, 7, 3, 3, 3, 9]);
        for t in [0.6, 0.75, 1.0] {
            let c = aggregate_results(&gt, &pred, t);
            // t = 1.0 is exclusive of everything under strict comparison
            if t < 1.0 {
                assert_eq!(c.gt2pred, vec![vec![0], vec![1], vec![2]]);
                assert_eq!(c.pred2gt, vec![vec![0], vec![1], vec![2]]);
                let r = summarize(&c, 3);
                assert_eq!((r.precision, r.recall, r.f_score), (1.0, 1.0, 1.0));
                assert!(r.per_prediction_labels.iter().all(|l| l == &[Pattern::Tp]));
            }
        }
    }

    #[test]
    fn partial_detection_inside_gt() {
        // p covers 3 of g's 10 points
        let gt = labels(vec![0; 10]);
        let pred = labels(vec![0, 0, 0, -1, -1, -1, -1, -1, -1, -1]);
        let c = aggregate_results(&gt, &pred, 0.75);
        assert_eq!(c.gt2pred, vec![vec![0]]);
        assert_eq!(c.pred2gt, vec![Vec::<usize>::new()]);
        let r = summarize(&c, 1);
        assert_eq!(r.per_prediction_labels, vec![vec![Pattern::Pd]]);
        assert_eq!(r.fp, 0);
    }

    #[test]
    fn merge_of_two_equal_gts() {
        let gt = labels(vec![0, 0, 0, 0, 1, 1, 1, 1]);
        let pred = labels(vec![0; 8]);
        let c = aggregate_results(&gt, &pred, 0.75);
        assert_eq!(c.pred2gt, vec![vec![0, 1]]);
        assert_eq!(c.gt2pred, vec![Vec::<usize>::new(), Vec::new()]);
        let r = summarize(&c, 1);
        assert_eq!(r.per_prediction_labels, vec![vec![Pattern::Fm]]);
        assert_eq!(r.fm, 1);
        assert_eq!(r.recall, 0.0);
    }

    #[test]
    fn false_positive_and_noise() {
        let gt = labels(vec![0, 0, 0, -1, -1, -1]);
        let pred = labels(vec![0, 0, 0, 1, 1, 1]);
        let r = evaluate(&gt, &pred, &cfg(0.75)).unwrap();
        assert_eq!(r.per_prediction_labels, vec![vec![Pattern::Tp], vec![Pattern::Fp]]);
        assert_eq!((r.tp, r.fp, r.n_pred, r.n_gt), (1, 1, 2, 1));
        assert_eq!(r.precision, 0.5);
    }

    #[test]
    fn perfect_prediction_via_evaluate() {
        let gt = labels(vec![0, 0, 1, 1, 2, 2]);
        let r = evaluate(&gt, &gt, &cfg(0.75)).unwrap();
        assert_eq!(r.f_score, 1.0);
        assert_eq!((r.pd_ratio, r.fm_ratio, r.fp_ratio), (0.0, 0.0, 0.0));
    }

    #[test]
    fn split_halves_are_partial_detections() {
        let gt = labels(vec![0, 0, 0, 0, 1, 1, 1, 1]);
        let pred = labels(vec![0, 0, 1, 1, 2, 2, 3, 3]);
        let r = evaluate(&gt, &pred, &cfg(0.75)).unwrap();
        assert_eq!(r.tp, 0);
        assert_eq!(r.pd, 4);
        assert_eq!(r.recall, 0.0);
    }

    #[test]
    fn small_predictions_are_dropped() {
        let gt = labels(vec![0, 0, 0, 0, 1]);
        let pred = labels(vec![0, 0, 0, 0, 1]);
        let r = evaluate(
            &gt,
            &pred,
            &EvalConfig {
                min_pred_size: 2,
                ..cfg(0.75)
            },
        )
        .unwrap();
        assert_eq!((r.n_pred, r.tp, r.n_gt), (1, 1, 2));
    }

    #[test]
    fn threshold_validation() {
        assert!(cfg(0.5).validate().is_err());
        assert!(cfg(1.0).validate().is_ok());
        assert!(EvalConfig {
            iou_threshold: 0.0,
            ..cfg(0.75)
        }
        .validate()
        .is_err());
    }

    #[test]
    fn sweep_grid_and_csv() {
        let t = sweep_thresholds();
        assert_eq!(t.len(), 10);
        assert_eq!(t[0], 0.5);
        assert_eq!(t[9], 0.95);
        let gt = labels(vec![0, 0, 1, 1]);
        let rows = ios_sweep(&[(gt.clone(), gt)], 0).unwrap();
        assert!(!rows[0].exclusive && rows[1].exclusive);
        assert!(rows.iter().all(|r| r.f1 == 1.0));
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,precision,recall,f1,pd,fm,fp\n# t=0.50"));
        assert!(text.contains("\n0.95,1,1,1,0,0,0\n"));
    }

    #[test]
    fn key_value_report() {
        let gt = labels(vec![0, 0]);
        let r = evaluate(&gt, &gt, &cfg(0.75)).unwrap();
        assert!(r.to_key_value().contains("f_score: 1\n"));
    }
}
