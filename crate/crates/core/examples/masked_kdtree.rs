//! The KD-tree baseline with and without a time mask.

use std::sync::Arc;

use tnn::data::{generate_smoothed_random_walk, SrwConfig};
use tnn::{KdTree, Mask, ScaleParams};

fn main() -> tnn::Result<()> {
    let ds = Arc::new(generate_smoothed_random_walk(&SrwConfig::default())?);
    let tree = KdTree::build(ds.clone(), 16)?;
    println!("{} nodes, depth {}", tree.nodes().len(), tree.depth());

    let sigma = ScaleParams::new(2.5e-9, 4e-6, 3e-7)?;
    let t0 = ds.time_range().unwrap().0;
    for mask in [Mask::Unmasked, Mask::Window(60.0), Mask::Window(1800.0), Mask::Window(7200.0)] {
        let (mut visited, mut n) = (0u64, 0u64);
        for i in (0..ds.len()).step_by(491) {
            let q = ds.point(i);
            if mask.cutoff(q.t) < t0 {
                continue;
            }
            visited += tree.query(q, 100, &sigma, mask)?.visited_nodes;
            n += 1;
        }
        println!("{mask:?}: {:.1} nodes visited per query", visited as f64 / n as f64);
    }
    Ok(())
}
