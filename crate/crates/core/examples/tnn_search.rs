//! Masked k-NN with TNN, checked against the exhaustive scan.

use std::sync::Arc;

use tnn::data::{generate_smoothed_random_walk, SrwConfig};
use tnn::{compare_results, linear_query, tnn_query, Mask, QueryBatch, ScaleParams, TrajectoryIndex};

fn main() -> tnn::Result<()> {
    let ds = Arc::new(generate_smoothed_random_walk(&SrwConfig {
        n_traj: 100,
        len: 1000,
        ..SrwConfig::default()
    })?);
    let index = TrajectoryIndex::build(ds.clone(), 32)?;
    let queries = (0..ds.len()).step_by(997).map(|i| ds.point(i)).collect();
    // horizontal ~20 km, vertical ~500 m, time ~30 min all count as "unit distance"
    let sigma = ScaleParams::new(2.5e-9, 4e-6, 3e-7)?;
    let batch = QueryBatch::new(queries, 100, sigma, Mask::Window(1800.0)).with_fetch(8);

    let fast = tnn_query(&batch, &index)?;
    let exact = linear_query(&batch, &ds)?;
    compare_results(&exact, &fast, 1e-9).expect("same neighbors");

    let mean = fast.iter().map(|r| r.comparisons as f64).sum::<f64>() / fast.len() as f64;
    println!(
        "{} queries over {} points: {:.0} comparisons per query ({:.2}% of a full scan)",
        fast.len(),
        ds.len(),
        mean,
        100.0 * mean / ds.len() as f64
    );
    let r = &fast[0];
    println!("query 0: nearest {:?} at squared distance {:.4}", r.indices.first(), r.distances[0]);
    Ok(())
}
