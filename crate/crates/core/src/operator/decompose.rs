//! Trend/season split by top-K spectral amplitude.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::fft::{irfft_lanes, rfft_lanes};
use crate::numerics::{spectrum_len, RealTensor};

/// Relative amplitude difference below which two bins count as tied.
const TIE_TOL: f64 = 1e-12;

/// Indices of the `k` largest-amplitude bins; ties go to the lower index.
///
/// Amplitudes within a relative `1e-12` of each other are treated as equal so
/// that FFT rounding cannot reorder mathematically tied bins.
pub(crate) fn top_k_bins(spec: &[Complex64], k: usize) -> Vec<usize> {
    let amp: Vec<f64> = spec.iter().map(|z| z.norm()).collect();
    let mut taken = vec![false; amp.len()];
    let mut out = Vec::with_capacity(k);
    for _ in 0..k.min(amp.len()) {
        let mut best: Option<usize> = None;
        for (i, &a) in amp.iter().enumerate() {
            if taken[i] {
                continue;
            }
            match best {
                Some(b) if a <= amp[b] * (1.0 + TIE_TOL) => {}
                _ => best = Some(i),
            }
        }
        let b = best.expect("bins remain");
        taken[b] = true;
        out.push(b);
    }
    out
}

/// Splits each channel of `h` (S×C) into `(trend, season)`.
///
/// `season` keeps the `top_k` largest-amplitude one-sided DFT bins (DC
/// included) and `trend = h − season`.
pub fn spectral_decompose(h: &RealTensor, top_k: usize) -> Result<(RealTensor, RealTensor)> {
    let (s, c) = h.dims2()?;
    let bins = spectrum_len(s);
    if !(1..=bins).contains(&top_k) {
        return Err(Error::usage(format!("spectral_decompose: K = {top_k} outside 1..={bins}")));
    }
    let mut season = RealTensor::zeros(&[s, c]);
    for j in 0..c {
        let spec = rfft_lanes(&h.column(j), s);
        let mut kept = vec![Complex64::new(0.0, 0.0); bins];
        for b in top_k_bins(&spec, top_k) {
            kept[b] = spec[b];
        }
        for (i, v) in irfft_lanes(&kept, s).into_iter().enumerate() {
            season.set(i, j, v);
        }
    }
    let trend = h.sub(&season)?;
    Ok((trend, season))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::fft::oracle::{naive_irdft, naive_rdft};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn pure_cosine_is_all_season() {
        let s = 48;
        let h = RealTensor::from_fn(&[s, 1], |i| 1.7 * (2.0 * PI * 5.0 * i as f64 / s as f64).cos());
        let (trend, season) = spectral_decompose(&h, 1).unwrap();
        assert!(season.max_abs_diff(&h) < 1e-9);
        assert!(trend.max_abs() < 1e-9);
    }

    #[test]
    fn all_modes_kept() {
        let s = 25;
        let h = RealTensor::from_fn(&[s, 2], |i| ((i * 7919) % 13) as f64 - 6.0);
        let (trend, season) = spectral_decompose(&h, s / 2 + 1).unwrap();
        assert!(season.max_abs_diff(&h) < 1e-9);
        assert!(trend.max_abs() < 1e-9);
    }

    #[test]
    fn ramp_against_naive_oracle() {
        let s = 16;
        let x: Vec<f64> = (0..s).map(|i| i as f64).collect();
        let h = RealTensor::new(vec![s, 1], x.clone()).unwrap();
        let (trend, season) = spectral_decompose(&h, 1).unwrap();
        // for a ramp the DC bin dominates, so the season is the mean
        let spec = naive_rdft(&x);
        let best = (0..spec.len()).max_by(|&a, &b| spec[a].norm().total_cmp(&spec[b].norm()).then(b.cmp(&a))).unwrap();
        let mut kept = vec![Complex64::new(0.0, 0.0); spec.len()];
        kept[best] = spec[best];
        let expected = naive_irdft(&kept, s);
        for i in 0..s {
            assert!((season.at(i, 0) - expected[i]).abs() < 1e-9);
            assert!((season.at(i, 0) - 7.5).abs() < 1e-9);
        }
        assert!(trend.add(&season).unwrap().max_abs_diff(&h) < 1e-12);
    }

    #[test]
    fn ties_prefer_lower_index() {
        let s = 8;
        let x: Vec<f64> = (0..s)
            .map(|i| {
                let th = 2.0 * PI * i as f64 / s as f64;
                th.cos() + (2.0 * th).cos()
            })
            .collect();
        assert_eq!(top_k_bins(&rfft_lanes(&x, s), 1), vec![1]);
    }

    #[test]
    fn k_out_of_range() {
        let h = RealTensor::zeros(&[8, 1]);
        assert!(spectral_decompose(&h, 0).is_err());
        assert!(spectral_decompose(&h, 6).is_err());
    }

    proptest! {
        #[test]
        fn parts_sum_to_input(vals in proptest::collection::vec(-10.0f64..10.0, 2..80), k in 1usize..6) {
            let s = vals.len();
            let k = k.min(s / 2 + 1);
            let h = RealTensor::new(vec![s, 1], vals).unwrap();
            let (trend, season) = spectral_decompose(&h, k).unwrap();
            let sum = trend.add(&season).unwrap();
            let scale = h.max_abs().max(1.0);
            prop_assert!(sum.max_abs_diff(&h) <= 4.0 * f64::EPSILON * scale);
        }
    }
}
