//! Fit a global scale and a position-dependent scale network, then save
//! and reload a checkpoint.

use std::sync::Arc;

use tnn::data::{generate_smoothed_random_walk, split_by_time, SrwConfig};
use tnn::nowcast::{
    evaluate_rmse, train, AdamConfig, Checkpoint, ContextSource, GkaForecaster, GkaModel, InputNorm, SigmaNet,
    TrainConfig,
};
use tnn::{ScaleParams, TrajectoryIndex};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = Arc::new(generate_smoothed_random_walk(&SrwConfig {
        n_traj: 200,
        len: 100,
        domain: 200e3,
        ..SrwConfig::default()
    })?);
    let split = split_by_time(&ds, (0.7, 0.15, 0.15))?;
    let index = TrajectoryIndex::build(ds.clone(), 32)?;
    let source = ContextSource::tnn(&index);
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 128,
        k: 50,
        adam: AdamConfig { lr: 0.05, ..AdamConfig::default() },
        ..TrainConfig::default()
    };
    let start = ScaleParams::new(2.5e-9, 4e-6, 3e-7)?;

    let norm = InputNorm::fit(split.train.iter().map(|&i| ds.position(i)).collect::<Vec<_>>().iter());
    let inits = [
        GkaModel::Global(start),
        GkaModel::Net(SigmaNet::new(16, start, norm, 0)?),
    ];
    for init in inits {
        let name = init.name();
        let (model, epochs) = train(&source, &split.train, init, &cfg)?;
        for e in &epochs {
            println!("{name} epoch {} loss {:.4}", e.epoch, e.loss);
        }
        let f = GkaForecaster { model: model.clone(), source, k: cfg.k, window: cfg.window };
        println!("{name} validation rmse {:.3} kn", evaluate_rmse(&f, &ds, &split.validation)?.rmse);

        let ckpt = Checkpoint { model, k: cfg.k, window: cfg.window, points_per_segment: 32, fetch: 8 };
        let path = std::env::temp_dir().join(format!("{name}.ckpt"));
        ckpt.save(&path)?;
        assert_eq!(Checkpoint::load(&path)?, ckpt);
        println!("{name} checkpoint round-trips through {}", path.display());
    }
    Ok(())
}
