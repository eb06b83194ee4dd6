//! Point-forecast error metrics.

use crate::error::{Error, Result};
use crate::numerics::RealTensor;

fn check(pred: &RealTensor, target: &RealTensor, what: &str) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(Error::usage(format!(
            "{what}: prediction shape {:?} does not match target shape {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    if pred.is_empty() {
        return Err(Error::usage(format!("{what}: empty input")));
    }
    Ok(())
}

/// Mean squared error over all entries.
pub fn mse(pred: &RealTensor, target: &RealTensor) -> Result<f64> {
    check(pred, target, "mse")?;
    let s: f64 = pred.data().iter().zip(target.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(s / pred.len() as f64)
}

/// Mean absolute error over all entries.
pub fn mae(pred: &RealTensor, target: &RealTensor) -> Result<f64> {
    check(pred, target, "mae")?;
    let s: f64 = pred.data().iter().zip(target.data()).map(|(a, b)| (a - b).abs()).sum();
    Ok(s / pred.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn trivial_cases() {
        let a = RealTensor::from_fn(&[4, 3], |i| i as f64 * 0.3);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        let b = a.map(|v| v + 2.0);
        assert!((mse(&a, &b).unwrap() - 4.0).abs() < 1e-12);
        assert!((mae(&a, &b).unwrap() - 2.0).abs() < 1e-12);
        let err = mse(&a, &RealTensor::zeros(&[3, 4])).unwrap_err();
        assert_eq!(err.class(), crate::ErrorClass::Usage);
    }

    proptest! {
        #[test]
        fn matches_loop_oracle(v in proptest::collection::vec(-10.0f64..10.0, 2..60)) {
            let n = v.len() / 2;
            let p = RealTensor::new(vec![n, 1], v[..n].to_vec()).unwrap();
            let t = RealTensor::new(vec![n, 1], v[n..2 * n].to_vec()).unwrap();
            let (mut se, mut ae) = (0.0, 0.0);
            for i in 0..n {
                let d = v[i] - v[n + i];
                se += d * d;
                ae += d.abs();
            }
            prop_assert!((mse(&p, &t).unwrap() - se / n as f64).abs() < 1e-12);
            prop_assert!((mae(&p, &t).unwrap() - ae / n as f64).abs() < 1e-12);
        }
    }
}
