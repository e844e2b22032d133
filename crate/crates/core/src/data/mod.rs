//! Dataset files, synthetic generators and splitting.

pub mod config;
pub mod generate;
pub mod io;
pub mod split;

pub use config::KeyValues;
pub use generate::{
    generate_random_points, generate_smoothed_random_walk, RandomPointsConfig, SrwConfig, WindField, WindMode,
};
pub use io::{load_dataset, read_dataset, save_dataset, write_dataset, LoadReport};
pub use split::{split_by_time, split_per_day, Split};
