//! Wind nowcasting by kernel averaging over retrieved contexts, with
//! fitted scale parameters and simple baselines.

pub mod checkpoint;
pub mod forecast;
pub mod gka;
pub mod sigmanet;
pub mod train;

pub use checkpoint::Checkpoint;
pub use forecast::{
    evaluate_rmse, evaluate_rmse_chunked, rmse, ContextSource, DayAverage, Forecaster, GkaForecaster, GkaModel,
    HourAverage, KnnBaseline, Persistence, Retrieval, RmseReport, DEFAULT_CONTEXT_K, DEFAULT_WINDOW,
};
pub use gka::{gka_loss_and_grad, gka_predict, sample_loss_and_grad, ContextPoint, LossGrad, Sample};
pub use sigmanet::{Adam, AdamConfig, InputNorm, SigmaNet};
pub use train::{train, tune_global_sigma, tune_knn_k, EpochStats, GridConfig, TrainConfig};
