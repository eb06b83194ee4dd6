//! Time-series forecasting as flow matching between the function families
//! behind history and future windows.
//!
//! The velocity field is a spectral neural operator: instance normalization,
//! a top-K Fourier trend/season split, a learned history embedding, and
//! frequency-domain kernel contraction. Training regresses the operator onto
//! the future window along straight conditional paths; inference integrates
//! the resulting ODE from the history embedding to `t = 1`.
//!
//! Modules, bottom-up:
//! - [`numerics`]: tensors, FFTs, tape autodiff, gradient checking, Adam
//! - [`data`]: CSV ingestion, splits, windows, decimation, task pairs
//! - [`operator`]: the velocity-field model and its checkpoints
//! - [`flow`]: conditional paths, the flow-matching loss, training, ODE inference
//! - [`eval`]: metrics, ablation variants, task runners and reports

pub mod data;
pub mod error;
pub mod eval;
pub mod flow;
pub mod numerics;
pub mod operator;

pub use error::{Error, ErrorClass, Result};
