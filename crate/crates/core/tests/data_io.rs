mod common;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tnn::data::{
    generate_smoothed_random_walk, read_dataset, split_by_time, split_per_day, write_dataset, SrwConfig,
};
use tnn::{Dataset, Record, TrajectoryIndex};

fn csv_bytes(ds: &Dataset) -> Vec<u8> {
    let mut out = Vec::new();
    write_dataset(ds, &mut out).unwrap();
    out
}

fn small_srw(seed: u64) -> Dataset {
    generate_smoothed_random_walk(&SrwConfig {
        n_traj: 12,
        len: 300,
        seed,
        ..SrwConfig::default()
    })
    .unwrap()
}

#[test]
fn round_trip_is_exact() {
    for ds in [small_srw(3), common::random_trajectories(4, 20, 50, false)] {
        let (back, report) = read_dataset(csv_bytes(&ds).as_slice()).unwrap();
        assert_eq!(report.rows, ds.len());
        assert_eq!(report.rejected, 0);
        // written in canonical order already
        let (canon, _) = Dataset::from_records(ds.records().collect());
        assert_eq!(back, canon);
        assert_eq!(report.reordered, ds != canon);
        assert_eq!(csv_bytes(&back), csv_bytes(&canon));
    }
}

#[test]
fn row_order_does_not_matter() {
    let ds = common::random_trajectories(8, 15, 40, true);
    let text = String::from_utf8(csv_bytes(&ds)).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    let header = lines.remove(0);
    let (reference, _) = read_dataset(text.as_bytes()).unwrap();
    for seed in 0..5 {
        lines.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let shuffled = format!("{header}\n{}\n", lines.join("\n"));
        let (got, report) = read_dataset(shuffled.as_bytes()).unwrap();
        assert!(report.reordered);
        assert_eq!(got, reference);
    }
}

/// Segment errors are far smaller along true trajectories than along
/// groups of the same points drawn at random.
#[test]
fn smooth_walks_have_small_segment_error() {
    for seed in 0..3 {
        let ds = small_srw(seed);
        let mut recs: Vec<Record> = ds.records().collect();
        recs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let groups = recs
            .chunks(300)
            .enumerate()
            .map(|(j, c)| {
                let mut c = c.to_vec();
                c.sort_by(|a, b| a.point.t.total_cmp(&b.point.t));
                (format!("g{j:03}"), c)
            })
            .collect();
        let scrambled = Dataset::from_trajectories(groups);
        let e_srw = TrajectoryIndex::build(common::arc(ds), 32).unwrap().stats().mean_error;
        let e_rand = TrajectoryIndex::build(common::arc(scrambled), 32).unwrap().stats().mean_error;
        assert!(e_srw * 100.0 < e_rand, "seed {seed}: {e_srw} vs {e_rand}");
    }
}

#[test]
fn splits_partition_the_store() {
    let ds = small_srw(1);
    for split in [
        split_by_time(&ds, (0.7, 0.15, 0.15)).unwrap(),
        split_per_day(&ds, (0.7, 0.15, 0.15)).unwrap(),
    ] {
        let mut all: Vec<usize> = [&split.train, &split.validation, &split.test].into_iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..ds.len()).collect::<Vec<_>>());
    }
    let s = split_by_time(&ds, (0.7, 0.15, 0.15)).unwrap();
    let last_train = s.train.iter().map(|&i| ds.time(i)).fold(f64::MIN, f64::max);
    assert!(s.test.iter().all(|&i| ds.time(i) >= last_train));
}
