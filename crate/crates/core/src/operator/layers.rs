//! Operator building blocks.
//!
//! Each block has a tape form used for training, which works in a
//! channel-major layout (`C×L`, `P×k×L` with `P = 2C+1`), and a plain
//! time-major wrapper (`L×C`, `L×P×k`) that evaluates the same tape code on
//! constants.

use crate::error::{check_shape, Result};
use crate::numerics::{spectrum_len, ComplexTensor, RealTensor, Tape, Value, Var};

/// `E = gelu(B·W1 + b1)·W2 + b2` with `B` of shape `C×S`; returns `C×L`.
///
/// Rows are channels, so the MLP acts on each channel's time axis with
/// shared weights.
pub fn embed_history_graph(tape: &mut Tape, branch: Var, w1: Var, b1: Var, w2: Var, b2: Var) -> Result<Var> {
    let a = tape.matmul(branch, w1)?;
    let a = tape.add_row_bias(a, b1)?;
    let a = tape.gelu(a)?;
    let e = tape.matmul(a, w2)?;
    tape.add_row_bias(e, b2)
}

/// Stacks `[G; E; t]` into `P×L`.
pub fn assemble_graph(tape: &mut Tape, g_norm: Var, emb: Var, t: f64) -> Result<Var> {
    let l = tape.real(g_norm).dims2()?.1;
    let t_row = tape.constant(RealTensor::filled(&[1, l], t));
    tape.concat_rows(&[g_norm, emb, t_row])
}

/// Lifts `P×L` to `P×k×L` by an outer product with `W_e`.
pub fn expand_graph(tape: &mut Tape, z0: Var, we: Var) -> Result<Var> {
    tape.expand(z0, we)
}

/// Truncated frequency-domain contraction along the last axis of `P×k×L`.
pub fn spectral_graph(tape: &mut Tape, z1: Var, kernel: Var) -> Result<Var> {
    let l = *tape.real(z1).shape().last().unwrap_or(&0);
    let modes = tape.complex(kernel).shape().get(2).copied().unwrap_or(0);
    let x = tape.rfft(z1)?;
    let x = tape.truncate_modes(x, modes)?;
    let y = tape.contract(x, kernel)?;
    let y = tape.pad_modes(y, spectrum_len(l))?;
    tape.irfft(y, l)
}

/// Maps the `P·k` features of every time step to `C` outputs: `C×L`.
pub fn project_graph(tape: &mut Tape, y: Var, w: Var, b: Var) -> Result<Var> {
    let shape = tape.real(y).shape().to_vec();
    if shape.len() != 3 {
        return Err(crate::Error::usage(format!("project: expected a 3-D input, got {shape:?}")));
    }
    let flat = tape.reshape(y, &[shape[0] * shape[1], shape[2]])?;
    let out = tape.matmul(w, flat)?;
    tape.add_col_bias(out, b)
}

fn lpk_to_pkl(x: &RealTensor) -> Result<RealTensor> {
    let &[l, p, k] = x.shape() else {
        return Err(crate::Error::usage(format!("expected a 3-D tensor, got {:?}", x.shape())));
    };
    let d = x.data();
    RealTensor::new(vec![p, k, l], (0..p * k * l).map(|i| {
        let (pk, li) = (i / l, i % l);
        d[li * p * k + pk]
    }).collect())
}

fn pkl_to_lpk(x: &RealTensor) -> Result<RealTensor> {
    let &[p, k, l] = x.shape() else {
        return Err(crate::Error::usage(format!("expected a 3-D tensor, got {:?}", x.shape())));
    };
    let d = x.data();
    RealTensor::new(vec![l, p, k], (0..p * k * l).map(|i| {
        let (li, pk) = (i / (p * k), i % (p * k));
        d[pk * l + li]
    }).collect())
}

/// Per-channel history MLP on `S×C` input; returns `L×C`.
pub fn embed_history(
    branch: &RealTensor,
    w1: &RealTensor,
    b1: &RealTensor,
    w2: &RealTensor,
    b2: &RealTensor,
) -> Result<RealTensor> {
    let mut tape = Tape::new();
    let x = tape.constant(branch.transpose()?);
    let vars = [w1, b1, w2, b2].map(|p| tape.constant(p.clone()));
    let e = embed_history_graph(&mut tape, x, vars[0], vars[1], vars[2], vars[3])?;
    tape.real(e).transpose()
}

/// `[G_t | E | t]` as `L×(2C+1)`.
pub fn assemble_input(g: &RealTensor, emb: &RealTensor, t: f64) -> Result<RealTensor> {
    check_shape("assemble_input", g.shape(), emb.shape())?;
    let mut tape = Tape::new();
    let gv = tape.constant(g.transpose()?);
    let ev = tape.constant(emb.transpose()?);
    let z = assemble_graph(&mut tape, gv, ev, t)?;
    tape.real(z).transpose()
}

/// `z1[l, c, j] = z0[l, c]·W_e[j]`.
pub fn dimension_expand(z0: &RealTensor, we: &RealTensor) -> Result<RealTensor> {
    let mut tape = Tape::new();
    let zv = tape.constant(z0.transpose()?);
    let wv = tape.constant(we.clone());
    let z1 = expand_graph(&mut tape, zv, wv)?;
    pkl_to_lpk(tape.real(z1))
}

/// rfft over time, truncate to the kernel's `M` modes, contract, pad, irfft.
pub fn spectral_layer(z1: &RealTensor, kernel: &ComplexTensor) -> Result<RealTensor> {
    let mut tape = Tape::new();
    let zv = tape.constant(lpk_to_pkl(z1)?);
    let kv = tape.leaf(Value::Complex(kernel.clone()), false);
    let y = spectral_graph(&mut tape, zv, kv)?;
    pkl_to_lpk(tape.real(y))
}

/// Affine map of the flattened `P·k` features of each time step to `C`.
pub fn project(y: &RealTensor, w: &RealTensor, b: &RealTensor) -> Result<RealTensor> {
    let mut tape = Tape::new();
    let yv = tape.constant(lpk_to_pkl(y)?);
    let wv = tape.constant(w.clone());
    let bv = tape.constant(b.clone());
    let out = project_graph(&mut tape, yv, wv, bv)?;
    tape.real(out).transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::autodiff::gelu;
    use crate::numerics::fft::oracle::{naive_irdft, naive_rdft};
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> RealTensor {
        RealTensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    fn rand_kernel(rng: &mut ChaCha8Rng, k: usize, m: usize) -> ComplexTensor {
        ComplexTensor::from_fn(&[k, k, m], |_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn identity_kernel(k: usize, m: usize) -> ComplexTensor {
        ComplexTensor::from_fn(&[k, k, m], |i| {
            let (a, b) = (i / (k * m), (i / m) % k);
            Complex64::new(if a == b { 1.0 } else { 0.0 }, 0.0)
        })
    }

    #[test]
    fn embed_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (s, c, h, l) = (6, 3, 5, 4);
        let x = rand_tensor(&mut rng, &[s, c]);
        let w1 = rand_tensor(&mut rng, &[s, h]);
        let b1 = rand_tensor(&mut rng, &[h]);
        let w2 = rand_tensor(&mut rng, &[h, l]);
        let b2 = rand_tensor(&mut rng, &[l]);
        let e = embed_history(&x, &w1, &b1, &w2, &b2).unwrap();
        assert_eq!(e.shape(), [l, c]);
        for ch in 0..c {
            let hid: Vec<f64> = (0..h)
                .map(|j| gelu((0..s).map(|i| x.at(i, ch) * w1.at(i, j)).sum::<f64>() + b1.data()[j]))
                .collect();
            for o in 0..l {
                let v = (0..h).map(|j| hid[j] * w2.at(j, o)).sum::<f64>() + b2.data()[o];
                assert!((e.at(o, ch) - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn embed_zero_and_shared_channels() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w1 = rand_tensor(&mut rng, &[4, 3]);
        let w2 = rand_tensor(&mut rng, &[3, 5]);
        let (b1, b2) = (RealTensor::zeros(&[3]), RealTensor::zeros(&[5]));
        let e = embed_history(&RealTensor::zeros(&[4, 2]), &w1, &b1, &w2, &b2).unwrap();
        assert_eq!(e.max_abs(), 0.0);
        let col = rand_tensor(&mut rng, &[4, 1]);
        let twin = RealTensor::from_fn(&[4, 2], |i| col.data()[i / 2]);
        let e = embed_history(&twin, &w1, &b1, &w2, &b2).unwrap();
        assert_eq!(e.column(0), e.column(1));
        assert!(embed_history(&twin, &w2, &b1, &w2, &b2).is_err());
    }

    #[test]
    fn assemble_examples() {
        let g = RealTensor::new(vec![2, 1], vec![1.0, 2.0]).unwrap();
        let e = RealTensor::new(vec![2, 1], vec![3.0, 4.0]).unwrap();
        let z = assemble_input(&g, &e, 0.5).unwrap();
        assert_eq!(z.data(), [1.0, 3.0, 0.5, 2.0, 4.0, 0.5]);
        assert!(assemble_input(&g, &e, 0.0).unwrap().column(2).iter().all(|&v| v == 0.0));
        assert!(assemble_input(&g, &e, 1.0).unwrap().column(2).iter().all(|&v| v == 1.0));
        assert!(assemble_input(&g, &RealTensor::zeros(&[3, 1]), 0.0).is_err());
    }

    #[test]
    fn expand_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z0 = rand_tensor(&mut rng, &[5, 3]);
        let one = dimension_expand(&z0, &RealTensor::new(vec![1, 1], vec![1.0]).unwrap()).unwrap();
        assert_eq!(one.shape(), [5, 3, 1]);
        assert_eq!(one.data(), z0.data());
        let two = dimension_expand(&z0, &RealTensor::new(vec![1, 2], vec![1.0, -1.0]).unwrap()).unwrap();
        for i in 0..15 {
            assert_eq!(two.data()[2 * i], z0.data()[i]);
            assert_eq!(two.data()[2 * i + 1], -z0.data()[i]);
        }
        let we = rand_tensor(&mut rng, &[1, 4]);
        let z1 = dimension_expand(&z0, &we).unwrap();
        for l in 0..5 {
            for c in 0..3 {
                for j in 0..4 {
                    let got = z1.data()[(l * 3 + c) * 4 + j];
                    assert!((got - z0.at(l, c) * we.data()[j]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn spectral_identity_and_dc_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (l, p, k) = (10, 3, 2);
        let z1 = rand_tensor(&mut rng, &[l, p, k]);
        let y = spectral_layer(&z1, &identity_kernel(k, l / 2 + 1)).unwrap();
        assert!(y.max_abs_diff(&z1) < 1e-9);
        let y = spectral_layer(&z1, &identity_kernel(k, 1)).unwrap();
        for f in 0..p * k {
            let mean = (0..l).map(|t| z1.data()[t * p * k + f]).sum::<f64>() / l as f64;
            for t in 0..l {
                assert!((y.data()[t * p * k + f] - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn spectral_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (l, p, k, m) = (8, 3, 2, 3);
        let z1 = rand_tensor(&mut rng, &[l, p, k]);
        let w = rand_kernel(&mut rng, k, m);
        let y = spectral_layer(&z1, &w).unwrap();
        for c in 0..p {
            let specs: Vec<Vec<Complex64>> = (0..k)
                .map(|i| naive_rdft(&(0..l).map(|t| z1.data()[(t * p + c) * k + i]).collect::<Vec<_>>()))
                .collect();
            for o in 0..k {
                let mut out = vec![Complex64::new(0.0, 0.0); l / 2 + 1];
                for (mi, slot) in out.iter_mut().enumerate().take(m) {
                    for i in 0..k {
                        *slot += specs[i][mi] * w.data()[(i * k + o) * m + mi];
                    }
                }
                let series = naive_irdft(&out, l);
                for t in 0..l {
                    assert!((y.data()[(t * p + c) * k + o] - series[t]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn truncation_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (l, p, k) = (16, 3, 2);
        let z1 = rand_tensor(&mut rng, &[l, p, k]);
        let mut last = f64::INFINITY;
        for m in 1..=l / 2 + 1 {
            let err = spectral_layer(&z1, &identity_kernel(k, m)).unwrap().sub(&z1).unwrap().norm();
            assert!(err < last || (err < 1e-9 && last < 1e-9), "m={m}: {err} !< {last}");
            last = err;
        }
        assert!(last < 1e-9);
    }

    #[test]
    fn project_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (l, c, k) = (4, 2, 3);
        let p = 2 * c + 1;
        let w = rand_tensor(&mut rng, &[c, p * k]);
        let zero = project(&RealTensor::zeros(&[l, p, k]), &w, &RealTensor::zeros(&[c])).unwrap();
        assert_eq!(zero.max_abs(), 0.0);

        let y = rand_tensor(&mut rng, &[l, 3, 1]);
        let sum = project(&y, &RealTensor::filled(&[1, 3], 1.0), &RealTensor::zeros(&[1])).unwrap();
        for t in 0..l {
            assert!((sum.at(t, 0) - (0..3).map(|f| y.data()[t * 3 + f]).sum::<f64>()).abs() < 1e-12);
        }

        let y = rand_tensor(&mut rng, &[l, p, k]);
        let b = rand_tensor(&mut rng, &[c]);
        let out = project(&y, &w, &b).unwrap();
        for t in 0..l {
            for o in 0..c {
                let v = (0..p * k).map(|f| w.at(o, f) * y.data()[t * p * k + f]).sum::<f64>() + b.data()[o];
                assert!((out.at(t, o) - v).abs() < 1e-12);
            }
        }
    }
}
