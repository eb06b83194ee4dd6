//! Flow matching between history embeddings and future windows.
//!
//! Training samples `t ~ U[0, 1]`, places the path state on the straight
//! (optionally Gaussian-widened) bridge from the operator's history embedding
//! to the future window, and regresses the operator output onto the future.
//! Inference integrates the induced ODE from the embedding to `t = 1`.

mod config;
mod ode;
mod path;
mod train;

pub use config::{FlowConfig, InferenceVelocity, Integrator, Objective, TrainConfig};
pub use ode::{integrate, integrate_with, predict, predict_with};
pub use path::{conditional_velocity, path_std, sample_path_point, standard_noise, PathPoint};
pub use train::{
    evaluate_mse, sample_loss, train_loop, training_step, Draw, EarlyStopping, EpochRecord, LossProbe, TrainOutcome,
    DIVERGENCE_LOSS, EPOCH_LOG_HEADER,
};
