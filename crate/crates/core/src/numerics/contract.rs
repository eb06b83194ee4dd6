//! Mode-wise complex contraction used by the spectral kernel.

use num_complex::Complex64;

use super::tensor::ComplexTensor;
use crate::error::{Error, Result};

/// `Y[.., o, m] = Σ_i X[.., i, m]·W[i, o, m]`.
///
/// `X` has shape `[.., k_in, M]` (any number of leading batch axes), `W` has
/// shape `[k_in, k_out, M]`.
pub fn complex_contract(x: &ComplexTensor, w: &ComplexTensor) -> Result<ComplexTensor> {
    let (batch, k_in, k_out, modes) = contract_dims(x.shape(), w.shape())?;
    let mut shape = x.shape().to_vec();
    let r = shape.len();
    shape[r - 2] = k_out;
    let out = contract_forward(x.data(), w.data(), batch, k_in, k_out, modes);
    ComplexTensor::new(shape, out)
}

pub(crate) fn contract_dims(x: &[usize], w: &[usize]) -> Result<(usize, usize, usize, usize)> {
    let shape_err = || Error::Shape {
        op: "complex_contract",
        expected: x.to_vec(),
        got: w.to_vec(),
    };
    if x.len() < 2 || w.len() != 3 {
        return Err(shape_err());
    }
    let r = x.len();
    let (k_in, modes) = (x[r - 2], x[r - 1]);
    if w[0] != k_in || w[2] != modes {
        return Err(shape_err());
    }
    let batch = x[..r - 2].iter().product();
    Ok((batch, k_in, w[1], modes))
}

pub(crate) fn contract_forward(
    x: &[Complex64],
    w: &[Complex64],
    batch: usize,
    k_in: usize,
    k_out: usize,
    modes: usize,
) -> Vec<Complex64> {
    let mut y = vec![Complex64::new(0.0, 0.0); batch * k_out * modes];
    for b in 0..batch {
        let xb = &x[b * k_in * modes..(b + 1) * k_in * modes];
        let yb = &mut y[b * k_out * modes..(b + 1) * k_out * modes];
        for i in 0..k_in {
            let xi = &xb[i * modes..(i + 1) * modes];
            for o in 0..k_out {
                let wio = &w[(i * k_out + o) * modes..(i * k_out + o + 1) * modes];
                let yo = &mut yb[o * modes..(o + 1) * modes];
                for m in 0..modes {
                    yo[m] += xi[m] * wio[m];
                }
            }
        }
    }
    y
}

/// Gradients of the contraction w.r.t. `X` and `W`, given `∂L/∂Y` in the
/// `∂/∂re + i·∂/∂im` convention.
pub(crate) fn contract_backward(
    grad_y: &[Complex64],
    x: &[Complex64],
    w: &[Complex64],
    batch: usize,
    k_in: usize,
    k_out: usize,
    modes: usize,
    want_x: bool,
    want_w: bool,
) -> (Option<Vec<Complex64>>, Option<Vec<Complex64>>) {
    let zero = Complex64::new(0.0, 0.0);
    let mut gx = want_x.then(|| vec![zero; batch * k_in * modes]);
    let mut gw = want_w.then(|| vec![zero; k_in * k_out * modes]);
    for b in 0..batch {
        let gyb = &grad_y[b * k_out * modes..(b + 1) * k_out * modes];
        let xb = &x[b * k_in * modes..(b + 1) * k_in * modes];
        for i in 0..k_in {
            for o in 0..k_out {
                let base = (i * k_out + o) * modes;
                let gyo = &gyb[o * modes..(o + 1) * modes];
                if let Some(gx) = gx.as_mut() {
                    let gxi = &mut gx[(b * k_in + i) * modes..(b * k_in + i + 1) * modes];
                    for m in 0..modes {
                        gxi[m] += gyo[m] * w[base + m].conj();
                    }
                }
                if let Some(gw) = gw.as_mut() {
                    let xi = &xb[i * modes..(i + 1) * modes];
                    let gwio = &mut gw[base..base + modes];
                    for m in 0..modes {
                        gwio[m] += gyo[m] * xi[m].conj();
                    }
                }
            }
        }
    }
    (gx, gw)
}
