//! Speedup over the linear scan across points per segment (K) and
//! segments per fetch (F).

use std::sync::Arc;

use tnn::bench::{best_cell, is_corner, run_sweep, write_sweep_csv, BenchConfig, SweepConfig};
use tnn::data::{generate_smoothed_random_walk, SrwConfig};

fn main() -> tnn::Result<()> {
    let ds = Arc::new(generate_smoothed_random_walk(&SrwConfig::default())?);
    let rows = run_sweep(
        "srw",
        ds,
        &SweepConfig {
            points_per_segment: vec![8, 32, 128],
            fetch: vec![2, 8, 32],
            base: BenchConfig {
                queries: 50,
                repeats: 3,
                ..BenchConfig::default()
            },
        },
    )?;
    write_sweep_csv(&rows, std::io::stdout())?;
    let best = best_cell(&rows).unwrap();
    println!(
        "best: K={} F={} speedup {:.2}x{}",
        best.points_per_segment,
        best.fetch,
        best.speedup,
        if is_corner(&rows, best) { " (grid corner)" } else { "" }
    );
    Ok(())
}
