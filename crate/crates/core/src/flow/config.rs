//! Flow and training configuration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::AdamConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    Euler,
    Midpoint,
}

/// Velocity used at inference when the model predicts the endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferenceVelocity {
    /// `f̂ − g_0`: predicted endpoint minus the fixed path source.
    SourceAnchored,
    /// `(f̂ − g_t)/(1 − t)`: the bridge velocity through the current state.
    Bridge,
}

/// What the operator is trained to do.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Regress along sampled conditional paths and integrate at inference.
    FlowMatching,
    /// A single forward at `t = 0` on the path source; no paths, no ODE.
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    /// Bridge width scale; the standard deviation at `t` is `sigma_path·t(1−t)`.
    pub sigma_path: f64,
    pub n_steps: usize,
    /// The model predicts the endpoint `f` rather than the velocity `f − h`.
    pub reparameterized: bool,
    pub integrator: Integrator,
    pub inference_velocity: InferenceVelocity,
    pub objective: Objective,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            sigma_path: 0.0,
            n_steps: 8,
            reparameterized: true,
            integrator: Integrator::Euler,
            inference_velocity: InferenceVelocity::SourceAnchored,
            objective: Objective::FlowMatching,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_path >= 0.0 && self.sigma_path.is_finite()) {
            return Err(Error::usage(format!("sigma_path = {} must be finite and >= 0", self.sigma_path)));
        }
        if self.n_steps == 0 {
            return Err(Error::usage("n_steps must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Validation uses every `val_stride`-th window.
    pub val_stride: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            batch_size: 32,
            max_epochs: 30,
            patience: 3,
            seed: 0,
            val_stride: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.adam.lr > 0.0) {
            return Err(Error::usage(format!("lr = {} must be positive", self.adam.lr)));
        }
        if !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) {
            return Err(Error::usage("Adam betas must lie in [0, 1)"));
        }
        if self.batch_size == 0 || self.patience == 0 || self.max_epochs == 0 || self.val_stride == 0 {
            return Err(Error::usage("batch_size, max_epochs, patience and val_stride must be at least 1"));
        }
        Ok(())
    }
}
