//! Partition smooth random walks into segments and inspect the summaries.

use std::sync::Arc;

use tnn::data::{generate_smoothed_random_walk, SrwConfig};
use tnn::TrajectoryIndex;

fn main() -> tnn::Result<()> {
    let ds = Arc::new(generate_smoothed_random_walk(&SrwConfig {
        n_traj: 20,
        len: 500,
        ..SrwConfig::default()
    })?);
    for k in [8, 32, 128] {
        let index = TrajectoryIndex::build(ds.clone(), k)?;
        let s = index.stats();
        println!(
            "K = {k:>3}: {:>5} segments, mean E = {:.3e} m², max E = {:.3e} m²",
            s.segments, s.mean_error, s.max_error
        );
    }
    let index = TrajectoryIndex::build(ds, 32)?;
    let seg = index.segment(0);
    println!("first segment: {:?} at t={} -> {:?} at t={}", seg.a, seg.t_a, seg.b, seg.t_b);
    Ok(())
}
