//! Conditional Gaussian bridges between the history embedding and the future.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_shape, Error, Result};
use crate::numerics::RealTensor;

/// A point on a conditional path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPoint {
    pub t: f64,
    pub g: RealTensor,
}

/// Standard deviation of the bridge at time `t`; zero at both endpoints.
pub fn path_std(sigma_path: f64, t: f64) -> f64 {
    sigma_path * t * (1.0 - t)
}

/// Standard-normal noise of the given shape.
pub fn standard_noise<R: Rng + ?Sized>(rng: &mut R, shape: &[usize]) -> RealTensor {
    RealTensor::from_fn(shape, |_| rng.sample(StandardNormal))
}

/// `g = t·f + (1−t)·h_emb + sigma_path·t(1−t)·ξ`.
///
/// Noise is only drawn when the bridge has nonzero width at `t`.
pub fn sample_path_point<R: Rng + ?Sized>(
    h_emb: &RealTensor,
    f: &RealTensor,
    t: f64,
    sigma_path: f64,
    rng: &mut R,
) -> Result<PathPoint> {
    check_shape("sample_path_point", h_emb.shape(), f.shape())?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::usage(format!("path time t = {t} outside [0, 1]")));
    }
    if !(sigma_path >= 0.0) {
        return Err(Error::usage(format!("sigma_path = {sigma_path} must be non-negative")));
    }
    let mut g = h_emb.zip_map(f, "sample_path_point", |h, f| t * f + (1.0 - t) * h)?;
    let sd = path_std(sigma_path, t);
    if sd > 0.0 {
        let xi = standard_noise(rng, f.shape());
        for (v, x) in g.data_mut().iter_mut().zip(xi.data()) {
            *v += sd * x;
        }
    }
    Ok(PathPoint { t, g })
}

/// Straight-line velocity `f − h_emb`.
pub fn conditional_velocity(f: &RealTensor, h_emb: &RealTensor) -> Result<RealTensor> {
    f.sub(h_emb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pair() -> (RealTensor, RealTensor) {
        let h = RealTensor::from_fn(&[6, 2], |i| (i as f64 * 0.9).sin() * 3.1);
        let f = RealTensor::from_fn(&[6, 2], |i| (i as f64 * 0.4).cos() - 0.7);
        (h, f)
    }

    #[test]
    fn endpoints_are_exact() {
        let (h, f) = pair();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_path_point(&h, &f, 0.0, 0.0, &mut rng).unwrap().g, h);
        assert_eq!(sample_path_point(&h, &f, 1.0, 0.0, &mut rng).unwrap().g, f);
        // the bridge width vanishes at the endpoints even with sigma_path > 0
        assert_eq!(sample_path_point(&h, &f, 0.0, 2.0, &mut rng).unwrap().g, h);
        assert_eq!(sample_path_point(&h, &f, 1.0, 2.0, &mut rng).unwrap().g, f);
    }

    #[test]
    fn midpoint_example() {
        let h = RealTensor::zeros(&[1, 1]);
        let f = RealTensor::new(vec![1, 1], vec![2.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_path_point(&h, &f, 0.5, 0.0, &mut rng).unwrap().g.data(), [1.0]);
    }

    #[test]
    fn noisy_bridge_has_the_right_spread() {
        let h = RealTensor::zeros(&[200, 10]);
        let f = RealTensor::zeros(&[200, 10]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = sample_path_point(&h, &f, 0.5, 2.0, &mut rng).unwrap();
        let var = p.g.data().iter().map(|v| v * v).sum::<f64>() / p.g.len() as f64;
        // sd = 2·0.25 = 0.5
        assert!((var - 0.25).abs() < 0.03, "{var}");
    }

    #[test]
    fn velocity_examples() {
        let (h, f) = pair();
        assert_eq!(conditional_velocity(&h, &h).unwrap().max_abs(), 0.0);
        let zero = RealTensor::zeros(h.shape());
        assert_eq!(conditional_velocity(&f, &zero).unwrap(), f);
        assert!(conditional_velocity(&f, &RealTensor::zeros(&[5, 2])).is_err());
    }

    #[test]
    fn rejects_bad_arguments() {
        let (h, f) = pair();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_path_point(&h, &f, 1.2, 0.0, &mut rng).is_err());
        assert!(sample_path_point(&h, &f, 0.5, -1.0, &mut rng).is_err());
    }

    proptest! {
        #[test]
        fn straight_path_consistency(s in 0.0f64..1.0, dt in 0.0f64..1.0) {
            let t = s + (1.0 - s) * dt;
            let (h, f) = pair();
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let gs = sample_path_point(&h, &f, s, 0.0, &mut rng).unwrap().g;
            let gt = sample_path_point(&h, &f, t, 0.0, &mut rng).unwrap().g;
            let v = conditional_velocity(&f, &h).unwrap();
            let expected = v.scale(t - s);
            prop_assert!(gt.sub(&gs).unwrap().max_abs_diff(&expected) < 1e-12);
        }

        #[test]
        fn exact_ode_solution(t in 0.0f64..0.99) {
            // g(t) = h + t(f − h) has dg/dt = f − h
            let (h, f) = pair();
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let dt = 1e-3;
            let a = sample_path_point(&h, &f, t, 0.0, &mut rng).unwrap().g;
            let b = sample_path_point(&h, &f, t + dt, 0.0, &mut rng).unwrap().g;
            let slope = b.sub(&a).unwrap().scale(1.0 / dt);
            prop_assert!(slope.max_abs_diff(&conditional_velocity(&f, &h).unwrap()) < 1e-9);
        }
    }
}
