//! Real-input FFTs along an arbitrary axis, and their adjoints.
//!
//! Convention: the forward transform is unnormalized,
//! `X[m] = Σ_n x[n]·exp(-2πi·mn/L)`, and the inverse divides by `L`.
//! Only the one-sided spectrum `m = 0..=L/2` is stored. The inverse ignores
//! the imaginary parts of the DC bin and, for even `L`, the Nyquist bin.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::tensor::{axis_split, ComplexTensor, RealTensor};
use crate::error::{Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    })
}

/// Number of one-sided bins for a length-`n` real signal.
pub fn spectrum_len(n: usize) -> usize {
    n / 2 + 1
}

/// Forward transform of `lanes` contiguous real signals of length `n`.
pub(crate) fn rfft_lanes(x: &[f64], n: usize) -> Vec<Complex64> {
    let lanes = if n == 0 { 0 } else { x.len() / n };
    let nf = spectrum_len(n);
    let fft = plan(n, false);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut out = Vec::with_capacity(lanes * nf);
    for lane in x.chunks_exact(n) {
        for (b, &v) in buf.iter_mut().zip(lane) {
            *b = Complex64::new(v, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        out.extend_from_slice(&buf[..nf]);
    }
    out
}

/// Inverse transform of `lanes` contiguous one-sided spectra to length `n`.
pub(crate) fn irfft_lanes(spec: &[Complex64], n: usize) -> Vec<f64> {
    let nf = spectrum_len(n);
    let lanes = spec.len() / nf;
    let fft = plan(n, true);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let scale = 1.0 / n as f64;
    let mut out = Vec::with_capacity(lanes * n);
    for lane in spec.chunks_exact(nf) {
        buf[0] = Complex64::new(lane[0].re, 0.0);
        for m in 1..nf {
            if 2 * m == n {
                buf[m] = Complex64::new(lane[m].re, 0.0);
            } else {
                buf[m] = lane[m];
                buf[n - m] = lane[m].conj();
            }
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        out.extend(buf.iter().map(|c| c.re * scale));
    }
    out
}

/// Adjoint of [`rfft_lanes`]: maps an upstream spectrum gradient
/// (`∂/∂re + i·∂/∂im`) onto the real input, `Re Σ_m g[m]·exp(+2πi·mn/L)`.
pub(crate) fn rfft_adjoint_lanes(grad: &[Complex64], n: usize) -> Vec<f64> {
    let nf = spectrum_len(n);
    let lanes = grad.len() / nf;
    let fft = plan(n, true);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut out = Vec::with_capacity(lanes * n);
    for lane in grad.chunks_exact(nf) {
        buf[..nf].copy_from_slice(lane);
        buf[nf..].fill(Complex64::new(0.0, 0.0));
        fft.process_with_scratch(&mut buf, &mut scratch);
        out.extend(buf.iter().map(|c| c.re));
    }
    out
}

/// Adjoint of [`irfft_lanes`]: `(w_m/L)·rfft(g)[m]` with `w_m = 2` for
/// interior bins and 1 for DC/Nyquist, whose imaginary parts are discarded
/// by the inverse and so receive no gradient.
pub(crate) fn irfft_adjoint_lanes(grad: &[f64], n: usize) -> Vec<Complex64> {
    let nf = spectrum_len(n);
    let mut out = rfft_lanes(grad, n);
    let inv = 1.0 / n as f64;
    for lane in out.chunks_exact_mut(nf) {
        for (m, c) in lane.iter_mut().enumerate() {
            if m == 0 || 2 * m == n {
                *c = Complex64::new(c.re * inv, 0.0);
            } else {
                *c *= 2.0 * inv;
            }
        }
    }
    out
}

fn gather_lanes<T: Copy>(data: &[T], outer: usize, len: usize, inner: usize) -> Vec<T> {
    if inner == 1 {
        return data.to_vec();
    }
    let mut out = Vec::with_capacity(data.len());
    for o in 0..outer {
        for i in 0..inner {
            out.extend((0..len).map(|l| data[(o * len + l) * inner + i]));
        }
    }
    out
}

fn scatter_lanes<T: Copy + Default>(lanes: &[T], outer: usize, len: usize, inner: usize) -> Vec<T> {
    if inner == 1 {
        return lanes.to_vec();
    }
    let mut out = vec![T::default(); lanes.len()];
    let mut src = lanes.iter();
    for o in 0..outer {
        for i in 0..inner {
            for l in 0..len {
                out[(o * len + l) * inner + i] = *src.next().unwrap();
            }
        }
    }
    out
}

/// Real-input FFT along `axis`; the output has `L/2 + 1` bins on that axis.
pub fn rfft(x: &RealTensor, axis: usize) -> Result<ComplexTensor> {
    let (outer, len, inner) = axis_split(x.shape(), axis)?;
    if len == 0 {
        return Err(Error::usage("rfft: empty axis"));
    }
    let lanes = gather_lanes(x.data(), outer, len, inner);
    let spec = rfft_lanes(&lanes, len);
    let nf = spectrum_len(len);
    let mut shape = x.shape().to_vec();
    shape[axis] = nf;
    ComplexTensor::new(shape, scatter_lanes(&spec, outer, nf, inner))
}

/// Inverse of [`rfft`] producing `n` real samples along `axis`.
pub fn irfft(spec: &ComplexTensor, n: usize, axis: usize) -> Result<RealTensor> {
    let (outer, nf, inner) = axis_split(spec.shape(), axis)?;
    if n == 0 || nf != spectrum_len(n) {
        return Err(Error::usage(format!(
            "irfft: spectrum has {nf} bins along axis {axis}, length {n} needs {}",
            spectrum_len(n)
        )));
    }
    let lanes = gather_lanes(spec.data(), outer, nf, inner);
    let signal = irfft_lanes(&lanes, n);
    let mut shape = spec.shape().to_vec();
    shape[axis] = n;
    RealTensor::new(shape, scatter_lanes(&signal, outer, n, inner))
}
