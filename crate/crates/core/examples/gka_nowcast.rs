//! Wind nowcasts from kernel averaging against the simple baselines.

use std::sync::Arc;

use tnn::data::{generate_smoothed_random_walk, split_by_time, SrwConfig};
use tnn::nowcast::{
    evaluate_rmse, ContextSource, DayAverage, Forecaster, GkaForecaster, GkaModel, HourAverage, KnnBaseline,
    Persistence,
};
use tnn::{ScaleParams, SearchOptions, TrajectoryIndex};

fn main() -> tnn::Result<()> {
    let ds = Arc::new(generate_smoothed_random_walk(&SrwConfig {
        n_traj: 300,
        len: 100,
        start_spread: 6.0 * 3600.0,
        domain: 200e3,
        ..SrwConfig::default()
    })?);
    let split = split_by_time(&ds, (0.7, 0.15, 0.15))?;
    let index = TrajectoryIndex::build(ds.clone(), 32)?;
    let source = ContextSource::tnn(&index);
    let sigma = ScaleParams::new(2.5e-9, 4e-6, 3e-7)?;
    let window = 1800.0;

    let models: Vec<Box<dyn Forecaster>> = vec![
        Box::new(GkaForecaster {
            model: GkaModel::Global(sigma),
            source,
            k: 100,
            window,
        }),
        Box::new(KnnBaseline { source, k: 10, sigma, window }),
        Box::new(Persistence {
            dataset: &ds,
            sigma,
            window,
            options: SearchOptions::default(),
        }),
        Box::new(HourAverage::fit(&ds)),
        Box::new(DayAverage::fit(&ds)),
    ];
    for m in &models {
        let r = evaluate_rmse(m.as_ref(), &ds, &split.test)?;
        println!("{:<12} rmse {:6.3} kn  ({} points, {} without context)", m.name(), r.rmse, r.evaluated, r.no_context);
    }
    Ok(())
}
