//! Per-window instance normalization.

use serde::{Deserialize, Serialize};

use crate::error::{check_shape, Result};
use crate::numerics::RealTensor;

/// Per-channel mean and floored standard deviation of a history window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl NormStats {
    pub fn identity(channels: usize) -> Self {
        Self {
            mu: vec![0.0; channels],
            sigma: vec![1.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.mu.len()
    }

    /// `(x − mu)/sigma` per channel of an `N×C` tensor.
    pub fn apply(&self, x: &RealTensor) -> Result<RealTensor> {
        let (_, c) = x.dims2()?;
        check_shape("normalize", &[self.channels()], &[c])?;
        let mut y = x.clone();
        for (i, v) in y.data_mut().iter_mut().enumerate() {
            let j = i % c;
            *v = (*v - self.mu[j]) / self.sigma[j];
        }
        Ok(y)
    }
}

/// Normalizes `h` (S×C) by its own per-channel population mean and std.
///
/// The std is floored at `eps`; a constant channel maps to zeros.
pub fn instance_normalize(h: &RealTensor, eps: f64) -> Result<(RealTensor, NormStats)> {
    let (s, c) = h.dims2()?;
    let mut mu = vec![0.0; c];
    let mut sigma = vec![0.0; c];
    for j in 0..c {
        let col = h.column(j);
        let m = col.iter().sum::<f64>() / s as f64;
        let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / s as f64;
        mu[j] = m;
        sigma[j] = var.sqrt().max(eps);
    }
    let stats = NormStats { mu, sigma };
    Ok((stats.apply(h)?, stats))
}

/// `y·sigma + mu` per channel.
pub fn denormalize(y: &RealTensor, stats: &NormStats) -> Result<RealTensor> {
    let (_, c) = y.dims2()?;
    check_shape("denormalize", &[stats.channels()], &[c])?;
    let mut out = y.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        let j = i % c;
        *v = *v * stats.sigma[j] + stats.mu[j];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_point_example() {
        let h = RealTensor::new(vec![2, 1], vec![1.0, 3.0]).unwrap();
        let (n, s) = instance_normalize(&h, 1e-5).unwrap();
        assert_eq!(n.data(), [-1.0, 1.0]);
        assert_eq!((s.mu[0], s.sigma[0]), (2.0, 1.0));
    }

    #[test]
    fn constant_channel() {
        let h = RealTensor::new(vec![3, 2], vec![4.0, 1.0, 4.0, 2.0, 4.0, 3.0]).unwrap();
        let (n, s) = instance_normalize(&h, 1e-5).unwrap();
        assert_eq!(s.sigma[0], 1e-5);
        assert!(n.column(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn denormalize_examples() {
        let stats = NormStats {
            mu: vec![1.0, -2.0],
            sigma: vec![2.0, 3.0],
        };
        let y = denormalize(&RealTensor::zeros(&[4, 2]), &stats).unwrap();
        assert!(y.data().chunks(2).all(|r| r == [1.0, -2.0]));
        let r = RealTensor::from_fn(&[5, 2], |i| i as f64 * 0.3 - 1.0);
        assert_eq!(denormalize(&r, &NormStats::identity(2)).unwrap(), r);
        assert!(denormalize(&RealTensor::zeros(&[4, 3]), &stats).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip_and_moments(vals in proptest::collection::vec(-50.0f64..50.0, 24), shift in -100.0f64..100.0) {
            let h = RealTensor::new(vec![8, 3], vals.iter().map(|v| v + shift).collect()).unwrap();
            let (n, stats) = instance_normalize(&h, 1e-5).unwrap();
            let back = denormalize(&n, &stats).unwrap();
            prop_assert!(back.max_abs_diff(&h) < 1e-10);
            for j in 0..3 {
                if stats.sigma[j] > 1e-5 {
                    let col = n.column(j);
                    let m = col.iter().sum::<f64>() / 8.0;
                    let sd = (col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / 8.0).sqrt();
                    prop_assert!(m.abs() < 1e-10);
                    prop_assert!((sd - 1.0).abs() < 1e-8);
                }
            }
            let y = RealTensor::new(vec![8, 3], vals.clone()).unwrap();
            let fixed = stats.apply(&denormalize(&y, &stats).unwrap()).unwrap();
            prop_assert!(fixed.max_abs_diff(&y) < 1e-10);
        }
    }
}
