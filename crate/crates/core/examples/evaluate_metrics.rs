//! Scores hand-made predictions that show each error pattern and sweeps the
//! containment threshold.

use pcinst::metrics::{aggregate_results, evaluate, ios_sweep, proposal_recall, write_sweep_csv, EvalConfig};
use pcinst::SceneLabels;

fn labels(ids: &[i32]) -> SceneLabels {
    SceneLabels::new(vec![0; ids.len()], ids.to_vec()).unwrap()
}

fn main() -> pcinst::Result<()> {
    // three objects of 4 points each, then 4 background points
    let gt = labels(&[0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2, -1, -1, -1, -1]);
    let cases = [
        ("exact", labels(&[0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2, -1, -1, -1, -1])),
        ("split object 0", labels(&[0, 0, 3, 3, 1, 1, 1, 1, 2, 2, 2, 2, -1, -1, -1, -1])),
        ("merge 1 and 2", labels(&[0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 1, 1, -1, -1, -1, -1])),
        ("background blob", labels(&[0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2, 5, 5, 5, 5])),
    ];
    let cfg = EvalConfig {
        min_pred_size: 1,
        ..EvalConfig::default()
    };
    for (name, pred) in &cases {
        let r = evaluate(&gt, pred, &cfg)?;
        let recall = proposal_recall(&gt, pred, cfg.iou_threshold, 1);
        let patterns: Vec<String> = r.per_prediction_labels.iter().map(|p| format!("{p:?}")).collect();
        println!(
            "{name:<16} TP {} PD {} FM {} FP {}  P {:.2} R {:.2} F {:.2}  recall@0.5 {:.2}  {}",
            r.tp,
            r.pd,
            r.fm,
            r.fp,
            r.precision,
            r.recall,
            r.f_score,
            recall.total,
            patterns.join(" ")
        );
    }

    let c = aggregate_results(&gt, &cases[2].1, 0.75);
    println!("\nmerge case containment gt->pred {:?}, pred->gt {:?}", c.gt2pred, c.pred2gt);

    let pairs: Vec<(SceneLabels, SceneLabels)> = cases.iter().map(|(_, p)| (gt.clone(), p.clone())).collect();
    let rows = ios_sweep(&pairs, 1)?;
    println!();
    write_sweep_csv(std::io::stdout().lock(), &rows)?;
    Ok(())
}
