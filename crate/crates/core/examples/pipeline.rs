//! Full synthetic run: generate scenes, train, segment a held-out scene and
//! evaluate it, for a few seeds.

use std::time::Instant;

use pcinst::pipeline::{run_experiment, ExperimentConfig};

fn main() -> pcinst::Result<()> {
    let seeds: u64 = std::env::args().nth(1).map_or(3, |s| s.parse().expect("seed count must be an integer"));
    let mut cfg = ExperimentConfig::default();
    for seed in 0..seeds {
        cfg.scene.rng_seed = seed;
        let start = Instant::now();
        let out = run_experiment(&cfg)?;
        let r = &out.report;
        println!(
            "seed {seed}: F {:.3} P {:.3} R {:.3} PD {} FM {} FP {} margin loss {:.4} recall@0.5 {:.3} ({:.1}s)",
            r.f_score,
            r.precision,
            r.recall,
            r.pd,
            r.fm,
            r.fp,
            out.margin_loss,
            out.recall.total,
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
