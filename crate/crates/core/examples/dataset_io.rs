//! Generate, save, reload and split a dataset.

use tnn::data::{
    generate_random_points, generate_smoothed_random_walk, load_dataset, save_dataset, split_per_day,
    RandomPointsConfig, SrwConfig,
};

fn main() -> tnn::Result<()> {
    let dir = std::env::temp_dir();
    let srw = generate_smoothed_random_walk(&SrwConfig {
        n_traj: 10,
        len: 200,
        seed: 42,
        ..SrwConfig::default()
    })?;
    let path = dir.join("srw.csv");
    save_dataset(&srw, &path)?;
    let (back, report) = load_dataset(&path)?;
    assert_eq!(back, srw);
    println!("{}: {} rows, {} trajectories, reordered: {}", path.display(), report.rows, report.trajectories, report.reordered);

    let split = split_per_day(&back, (0.7, 0.15, 0.15))?;
    println!("split {} / {} / {}", split.train.len(), split.validation.len(), split.test.len());

    let random = generate_random_points(&RandomPointsConfig { n: 1000, group: 32, ..RandomPointsConfig::default() })?;
    println!("random points: {} in {} groups, time range {:?}", random.len(), random.trajectories().len(), random.time_range());
    Ok(())
}
