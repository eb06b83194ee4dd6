//! Hyperparameters and architecture of the velocity-field operator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::spectrum_len;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorHyper {
    /// Expansion width of the lifted feature axis.
    pub k: usize,
    /// Number of retained frequency bins in the trend/season split.
    pub top_k: usize,
    /// Upper bound on the spectral modes kept by each kernel.
    pub m_max: usize,
    /// Width of the history MLP.
    pub hidden: usize,
    /// Floor on the per-channel standard deviation.
    pub eps_norm: f64,
}

impl Default for OperatorHyper {
    fn default() -> Self {
        Self {
            k: 16,
            top_k: 5,
            m_max: 32,
            hidden: 128,
            eps_norm: 1e-5,
        }
    }
}

/// Velocity-field body: the spectral operator or a per-branch linear map of
/// the history that ignores the path state and time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Spectral,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub history_len: usize,
    pub horizon: usize,
    pub channels: usize,
    /// Split the normalized history into trend and season branches.
    pub decompose: bool,
    /// Per-window instance normalization; identity statistics when off.
    pub normalize: bool,
    pub head: Head,
}

impl Architecture {
    pub fn new(history_len: usize, horizon: usize, channels: usize) -> Self {
        Self {
            history_len,
            horizon,
            channels,
            decompose: true,
            normalize: true,
            head: Head::Spectral,
        }
    }

    pub fn branches(&self) -> &'static [&'static str] {
        if self.decompose {
            &["trend", "season"]
        } else {
            &["full"]
        }
    }

    /// Rows of the assembled input: path state, embedding and time.
    pub fn input_rows(&self) -> usize {
        2 * self.channels + 1
    }

    pub fn validate(&self, hyper: &OperatorHyper) -> Result<()> {
        if self.history_len < 2 {
            return Err(Error::usage(format!("history length {} must be at least 2", self.history_len)));
        }
        if self.horizon == 0 || self.channels == 0 {
            return Err(Error::usage("horizon and channel count must be positive"));
        }
        if hyper.k == 0 || hyper.hidden == 0 || hyper.m_max == 0 {
            return Err(Error::usage("k, hidden and m_max must be positive"));
        }
        let bins = spectrum_len(self.history_len);
        if self.decompose && !(1..=bins).contains(&hyper.top_k) {
            return Err(Error::usage(format!(
                "top_k = {} outside 1..={bins} for history length {}",
                hyper.top_k, self.history_len
            )));
        }
        if !(hyper.eps_norm > 0.0) {
            return Err(Error::usage("eps_norm must be positive"));
        }
        Ok(())
    }

    /// Spectral modes retained by each kernel.
    pub fn modes(&self, hyper: &OperatorHyper) -> usize {
        hyper.m_max.min(spectrum_len(self.horizon))
    }
}
