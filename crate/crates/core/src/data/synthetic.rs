//! Synthetic sinusoid mixtures with a known noise floor.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::table::SeriesTable;
use crate::error::{Error, Result};
use crate::numerics::RealTensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub length: usize,
    pub channels: usize,
    /// Periods (in samples) of the mixture components shared by all channels.
    pub periods: Vec<f64>,
    /// Standard deviation of the additive white Gaussian noise.
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            length: 2000,
            channels: 2,
            periods: vec![24.0, 12.0, 48.0],
            noise_std: 0.3,
            seed: 0,
        }
    }
}

/// `x_c(t) = Σ_i a_ci·sin(2πt/p_i + φ_ci) + σ·ξ`, with amplitudes in
/// `[0.5, 1.5]` and uniform phases drawn per channel and component.
///
/// Returns the noisy table and the clean signal.
pub fn sinusoid_mixture(spec: &SyntheticSpec) -> Result<(SeriesTable, RealTensor)> {
    if spec.length == 0 || spec.channels == 0 || spec.periods.is_empty() {
        return Err(Error::usage("synthetic series needs a length, channels and at least one period"));
    }
    if spec.periods.iter().any(|&p| !(p > 0.0)) || !(spec.noise_std >= 0.0) {
        return Err(Error::usage("synthetic periods must be positive and noise_std non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let comps: Vec<Vec<(f64, f64)>> = (0..spec.channels)
        .map(|_| {
            spec.periods
                .iter()
                .map(|_| (rng.random_range(0.5..1.5), rng.random_range(0.0..2.0 * PI)))
                .collect()
        })
        .collect();
    let (t, c) = (spec.length, spec.channels);
    let clean = RealTensor::from_fn(&[t, c], |i| {
        let (s, ch) = ((i / c) as f64, i % c);
        comps[ch]
            .iter()
            .zip(&spec.periods)
            .map(|(&(a, ph), &p)| a * (2.0 * PI * s / p + ph).sin())
            .sum()
    });
    let noise = crate::flow::standard_noise(&mut rng, &[t, c]);
    let noisy = clean.zip_map(&noise, "synthetic", |x, n| x + spec.noise_std * n)?;
    Ok((SeriesTable::from_values(noisy)?, clean))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_has_the_requested_variance() {
        let spec = SyntheticSpec {
            length: 20_000,
            noise_std: 0.5,
            ..Default::default()
        };
        let (table, clean) = sinusoid_mixture(&spec).unwrap();
        let resid = table.values().sub(&clean).unwrap();
        let var = resid.data().iter().map(|v| v * v).sum::<f64>() / resid.len() as f64;
        assert!((var - 0.25).abs() < 0.01, "{var}");
        assert_eq!(sinusoid_mixture(&spec).unwrap().1, clean);
    }
}
