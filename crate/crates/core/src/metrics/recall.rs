use std::collections::HashMap;

use crate::scene::{SceneLabels, NOISE};

/// Proposal recall per GT category, their mean, and the pooled total.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalRecall {
    /// `None` for categories without GT objects.
    pub per_category: Vec<Option<f64>>,
    /// Mean over categories present in the GT.
    pub mean: f64,
    /// Detected GTs over all GTs, regardless of category.
    pub total: f64,
}

/// For each GT object, takes the prediction with the highest IoU (lowest id on
/// ties, prediction category ignored) and counts it as detected when
/// `IoU > iou_threshold`. A GT's category is the majority semantic label of
/// its points.
pub fn proposal_recall(gt: &SceneLabels, pred: &SceneLabels, iou_threshold: f64, n_categories: usize) -> ProposalRecall {
    assert_eq!(gt.len(), pred.len(), "GT and prediction cover different point counts");
    let gt_members = gt.members();
    let pred_ids = crate::scene::compact_instance_ids(pred).instance;
    let mut pred_sizes: HashMap<i32, usize> = HashMap::new();
    pred_ids
        .iter()
        .filter(|&&p| p != NOISE)
        .for_each(|&p| *pred_sizes.entry(p).or_default() += 1);

    let mut hits = vec![0usize; n_categories];
    let mut totals = vec![0usize; n_categories];
    for members in &gt_members {
        let mut votes: HashMap<usize, usize> = HashMap::new();
        let mut inter: HashMap<i32, usize> = HashMap::new();
        for &i in members {
            *votes.entry(gt.semantic[i]).or_default() += 1;
            if pred_ids[i] != NOISE {
                *inter.entry(pred_ids[i]).or_default() += 1;
            }
        }
        let category = votes
            .into_iter()
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(c, _)| c)
            .expect("GT objects are non-empty");
        let mut best: Option<(i32, f64)> = None;
        let mut candidates: Vec<(i32, usize)> = inter.into_iter().collect();
        candidates.sort_unstable();
        for (p, common) in candidates {
            let union = members.len() + pred_sizes[&p] - common;
            let iou = common as f64 / union as f64;
            if best.is_none_or(|(_, b)| iou > b) {
                best = Some((p, iou));
            }
        }
        let detected = best.is_some_and(|(_, iou)| iou > iou_threshold);
        if category < n_categories {
            totals[category] += 1;
            hits[category] += usize::from(detected);
        }
    }

    let per_category: Vec<Option<f64>> = hits
        .iter()
        .zip(&totals)
        .map(|(&h, &t)| (t > 0).then(|| h as f64 / t as f64))
        .collect();
    let present: Vec<f64> = per_category.iter().flatten().copied().collect();
    let mean = if present.is_empty() {
        0.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    };
    let all: usize = totals.iter().sum();
    let total = if all == 0 {
        0.0
    } else {
        hits.iter().sum::<usize>() as f64 / all as f64
    };
    ProposalRecall {
        per_category,
        mean,
        total,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_prediction_recalls_everything() {
        let gt = SceneLabels::new(vec![0, 0, 1, 1, 1], vec![0, 0, 1, 1, 2]).unwrap();
        let r = proposal_recall(&gt, &gt, 0.5, 3);
        assert_eq!(r.per_category, vec![Some(1.0), Some(1.0), None]);
        assert_eq!((r.mean, r.total), (1.0, 1.0));
    }

    #[test]
    fn no_predictions() {
        let gt = SceneLabels::new(vec![0, 1], vec![0, 1]).unwrap();
        let pred = SceneLabels::new(vec![0, 0], vec![-1, -1]).unwrap();
        let r = proposal_recall(&gt, &pred, 0.5, 2);
        assert_eq!(r.per_category, vec![Some(0.0), Some(0.0)]);
        assert_eq!((r.mean, r.total), (0.0, 0.0));
    }

    #[test]
    fn partial_cover_above_threshold() {
        // GT of 100 points; prediction covers 60 of them plus 10 outside
        let n = 110;
        let gt_inst: Vec<i32> = (0..n).map(|i| if i < 100 { 0 } else { -1 }).collect();
        let pred_inst: Vec<i32> = (0..n).map(|i| if (40..110).contains(&i) { 0 } else { -1 }).collect();
        let gt = SceneLabels::new(vec![0; n], gt_inst).unwrap();
        let pred = SceneLabels::new(vec![1; n], pred_inst).unwrap();
        let iou = 60.0 / 110.0;
        assert!(iou > 0.5);
        let r = proposal_recall(&gt, &pred, 0.5, 1);
        assert_eq!(r.total, 1.0);
        let strict = proposal_recall(&gt, &pred, iou, 1);
        assert_eq!(strict.total, 0.0);
    }
}
