//! Times the pairwise-similarity loss against the centroid loss over growing
//! point counts and fits log-log slopes.
//!
//! cargo run --release --example scaling_bench

use std::time::Duration;

use pcinst::bench::{run_scaling_sweep, write_bench_csv, BenchConfig, Method};

fn main() -> pcinst::Result<()> {
    let cfg = BenchConfig {
        n_points: vec![512, 1024, 2048, 4096],
        repeats: 3,
        min_sample_time: Duration::from_millis(20),
        ..BenchConfig::default()
    };
    let sweep = run_scaling_sweep(&cfg)?;
    write_bench_csv(std::io::stdout().lock(), &sweep)?;
    for method in [Method::Pairwise, Method::Centroid] {
        if let Some((bytes, time)) = sweep.slopes(method) {
            println!("{method}: bytes slope {bytes:.3}, time slope {time:.3}");
        }
    }
    Ok(())
}
