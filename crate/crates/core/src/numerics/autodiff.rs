//! Tape-based reverse-mode differentiation over whole tensors.
//!
//! Every operation appends a node holding its value and the handles of its
//! inputs. [`Tape::backward`] walks the tape in reverse and accumulates
//! gradients for every node that (transitively) depends on a leaf created
//! with `requires_grad = true`.
//!
//! Complex gradients use the `∂L/∂re + i·∂L/∂im` convention, so a complex
//! parameter can be updated by treating its real and imaginary parts as
//! independent real scalars.

use super::contract::{contract_backward, contract_dims, contract_forward};
use super::fft::{irfft_adjoint_lanes, irfft_lanes, rfft_adjoint_lanes, rfft_lanes, spectrum_len};
use super::params::ParamTensor;
use super::tensor::{compensated_sum, matmul_into, ComplexTensor, RealTensor};
use crate::error::{check_shape, Error, Result};

/// A value held on the tape.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Real(RealTensor),
    Complex(ComplexTensor),
}

impl Value {
    pub fn shape(&self) -> &[usize] {
        match self {
            Value::Real(t) => t.shape(),
            Value::Complex(t) => t.shape(),
        }
    }

    fn add_assign(&mut self, other: Value) {
        match (self, other) {
            (Value::Real(a), Value::Real(b)) => {
                for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                    *x += y;
                }
            }
            (Value::Complex(a), Value::Complex(b)) => {
                for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                    *x += y;
                }
            }
            _ => unreachable!("gradient kind mismatch"),
        }
    }
}

impl From<ParamTensor> for Value {
    fn from(p: ParamTensor) -> Self {
        match p {
            ParamTensor::Real(t) => Value::Real(t),
            ParamTensor::Complex(t) => Value::Complex(t),
        }
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRowBias(Var, Var),
    AddColBias(Var, Var),
    AffineRows { x: Var, scale: Vec<f64> },
    Gelu(Var),
    ConcatRows(Vec<Var>),
    Reshape(Var),
    Expand(Var, Var),
    Rfft(Var),
    Irfft(Var),
    Truncate(Var),
    Pad(Var),
    Contract(Var, Var),
    Sum(Var),
    SumSquares(Var),
    Mse(Var, RealTensor),
}

#[derive(Debug)]
struct Node {
    value: Value,
    op: Op,
    requires_grad: bool,
}

/// Records a computation for reverse-mode differentiation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Value>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Value> {
        self.grads[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Value> {
        self.grads[v.0].take()
    }

    pub fn real(&self, v: Var) -> Option<&RealTensor> {
        match self.get(v) {
            Some(Value::Real(t)) => Some(t),
            _ => None,
        }
    }

    pub fn complex(&self, v: Var) -> Option<&ComplexTensor> {
        match self.get(v) {
            Some(Value::Complex(t)) => Some(t),
            _ => None,
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// Tanh approximation of GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let th = u.tanh();
    let du = GELU_C * (1.0 + 3.0 * GELU_A * x * x);
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Value, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn leaf(&mut self, value: Value, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, t: RealTensor) -> Var {
        self.leaf(Value::Real(t), false)
    }

    pub fn variable(&mut self, t: RealTensor) -> Var {
        self.leaf(Value::Real(t), true)
    }

    pub fn value(&self, v: Var) -> &Value {
        &self.nodes[v.0].value
    }

    /// Real value of `v`. Panics if `v` is complex.
    pub fn real(&self, v: Var) -> &RealTensor {
        match &self.nodes[v.0].value {
            Value::Real(t) => t,
            Value::Complex(_) => panic!("expected a real node"),
        }
    }

    /// Complex value of `v`. Panics if `v` is real.
    pub fn complex(&self, v: Var) -> &ComplexTensor {
        match &self.nodes[v.0].value {
            Value::Complex(t) => t,
            Value::Real(_) => panic!("expected a complex node"),
        }
    }

    fn real_checked(&self, v: Var, op: &'static str) -> Result<&RealTensor> {
        match &self.nodes[v.0].value {
            Value::Real(t) => Ok(t),
            Value::Complex(_) => Err(Error::usage(format!("{op}: expected a real operand"))),
        }
    }

    fn complex_checked(&self, v: Var, op: &'static str) -> Result<&ComplexTensor> {
        match &self.nodes[v.0].value {
            Value::Complex(t) => Ok(t),
            Value::Real(_) => Err(Error::usage(format!("{op}: expected a complex operand"))),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = self
            .real_checked(a, "matmul")?
            .matmul(self.real_checked(b, "matmul")?)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Value::Real(y), Op::MatMul(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = self.real_checked(a, "add")?.add(self.real_checked(b, "add")?)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Value::Real(y), Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = self.real_checked(a, "sub")?.sub(self.real_checked(b, "sub")?)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Value::Real(y), Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = self
            .real_checked(a, "mul")?
            .zip_map(self.real_checked(b, "mul")?, "mul", |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Value::Real(y), Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var> {
        let y = self.real_checked(x, "scale")?.scale(s);
        let rg = self.rg(x);
        Ok(self.push(Value::Real(y), Op::Scale(x, s), rg))
    }

    /// Adds a length-`N` bias to every row of an `[.., N]` tensor.
    pub fn add_row_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let xt = self.real_checked(x, "add_row_bias")?;
        let bt = self.real_checked(b, "add_row_bias")?;
        let n = *xt.shape().last().unwrap_or(&0);
        if bt.len() != n || n == 0 {
            return Err(Error::Shape {
                op: "add_row_bias",
                expected: vec![n],
                got: bt.shape().to_vec(),
            });
        }
        let mut y = xt.clone();
        for row in y.data_mut().chunks_exact_mut(n) {
            for (v, bv) in row.iter_mut().zip(bt.data()) {
                *v += bv;
            }
        }
        let rg = self.rg(x) || self.rg(b);
        Ok(self.push(Value::Real(y), Op::AddRowBias(x, b), rg))
    }

    /// Adds `b[r]` to every entry of row `r` of a 2-D tensor.
    pub fn add_col_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let xt = self.real_checked(x, "add_col_bias")?;
        let bt = self.real_checked(b, "add_col_bias")?;
        let (r, c) = xt.dims2()?;
        if bt.len() != r {
            return Err(Error::Shape {
                op: "add_col_bias",
                expected: vec![r],
                got: bt.shape().to_vec(),
            });
        }
        let mut y = xt.clone();
        for (row, bv) in y.data_mut().chunks_exact_mut(c.max(1)).zip(bt.data()) {
            for v in row {
                *v += bv;
            }
        }
        let rg = self.rg(x) || self.rg(b);
        Ok(self.push(Value::Real(y), Op::AddColBias(x, b), rg))
    }

    /// `y[r, :] = x[r, :]·scale[r] + shift[r]` with constant `scale`, `shift`.
    pub fn affine_rows(&mut self, x: Var, scale: &[f64], shift: &[f64]) -> Result<Var> {
        let xt = self.real_checked(x, "affine_rows")?;
        let (r, c) = xt.dims2()?;
        if scale.len() != r || shift.len() != r {
            return Err(Error::Shape {
                op: "affine_rows",
                expected: vec![r],
                got: vec![scale.len(), shift.len()],
            });
        }
        let mut y = xt.clone();
        for (i, row) in y.data_mut().chunks_exact_mut(c.max(1)).enumerate() {
            for v in row {
                *v = *v * scale[i] + shift[i];
            }
        }
        let rg = self.rg(x);
        Ok(self.push(
            Value::Real(y),
            Op::AffineRows {
                x,
                scale: scale.to_vec(),
            },
            rg,
        ))
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let y = self.real_checked(x, "gelu")?.map(gelu);
        let rg = self.rg(x);
        Ok(self.push(Value::Real(y), Op::Gelu(x), rg))
    }

    /// Stacks 2-D tensors with equal column counts along the row axis.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = self.real_checked(*parts.first().ok_or_else(|| Error::usage("concat of nothing"))?, "concat_rows")?;
        let (_, cols) = first.dims2()?;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.real_checked(p, "concat_rows")?;
            let (r, c) = t.dims2()?;
            check_shape("concat_rows", &[r, cols], &[r, c])?;
            data.extend_from_slice(t.data());
            rows += r;
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        let y = RealTensor::new(vec![rows, cols], data)?;
        Ok(self.push(Value::Real(y), Op::ConcatRows(parts.to_vec()), rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let y = match self.value(x) {
            Value::Real(t) => Value::Real(t.clone().reshape(shape)?),
            Value::Complex(t) => Value::Complex(t.clone().reshape(shape)?),
        };
        let rg = self.rg(x);
        Ok(self.push(y, Op::Reshape(x), rg))
    }

    /// Outer product along a new middle axis: `z0 [P, L]`, `w [.., k]` →
    /// `[P, k, L]` with `y[p, j, l] = z0[p, l]·w[j]`.
    pub fn expand(&mut self, z0: Var, w: Var) -> Result<Var> {
        let zt = self.real_checked(z0, "expand")?;
        let wt = self.real_checked(w, "expand")?;
        let (p, l) = zt.dims2()?;
        let k = wt.len();
        let mut y = Vec::with_capacity(p * k * l);
        for pi in 0..p {
            let row = zt.row(pi);
            for &wj in wt.data() {
                y.extend(row.iter().map(|v| v * wj));
            }
        }
        let rg = self.rg(z0) || self.rg(w);
        let y = RealTensor::new(vec![p, k, l], y)?;
        Ok(self.push(Value::Real(y), Op::Expand(z0, w), rg))
    }

    /// Real FFT along the last axis.
    pub fn rfft(&mut self, x: Var) -> Result<Var> {
        let xt = self.real_checked(x, "rfft")?;
        let n = *xt.shape().last().ok_or_else(|| Error::usage("rfft of a scalar"))?;
        if n == 0 {
            return Err(Error::usage("rfft: empty axis"));
        }
        let mut shape = xt.shape().to_vec();
        *shape.last_mut().unwrap() = spectrum_len(n);
        let y = ComplexTensor::new(shape, rfft_lanes(xt.data(), n))?;
        let rg = self.rg(x);
        Ok(self.push(Value::Complex(y), Op::Rfft(x), rg))
    }

    /// Inverse real FFT to length `n` along the last axis.
    pub fn irfft(&mut self, x: Var, n: usize) -> Result<Var> {
        let xt = self.complex_checked(x, "irfft")?;
        let nf = *xt.shape().last().ok_or_else(|| Error::usage("irfft of a scalar"))?;
        if n == 0 || nf != spectrum_len(n) {
            return Err(Error::usage(format!(
                "irfft: {nf} bins cannot be inverted to length {n}"
            )));
        }
        let mut shape = xt.shape().to_vec();
        *shape.last_mut().unwrap() = n;
        let y = RealTensor::new(shape, irfft_lanes(xt.data(), n))?;
        let rg = self.rg(x);
        Ok(self.push(Value::Real(y), Op::Irfft(x), rg))
    }

    /// Keeps the first `m` bins along the last axis.
    pub fn truncate_modes(&mut self, x: Var, m: usize) -> Result<Var> {
        let y = self.complex_checked(x, "truncate_modes")?.truncate_last(m)?;
        let rg = self.rg(x);
        Ok(self.push(Value::Complex(y), Op::Truncate(x), rg))
    }

    /// Zero-pads the last axis to `n` bins.
    pub fn pad_modes(&mut self, x: Var, n: usize) -> Result<Var> {
        let y = self.complex_checked(x, "pad_modes")?.pad_last(n)?;
        let rg = self.rg(x);
        Ok(self.push(Value::Complex(y), Op::Pad(x), rg))
    }

    /// See [`super::contract::complex_contract`].
    pub fn contract(&mut self, x: Var, w: Var) -> Result<Var> {
        let xt = self.complex_checked(x, "contract")?;
        let wt = self.complex_checked(w, "contract")?;
        let (batch, k_in, k_out, modes) = contract_dims(xt.shape(), wt.shape())?;
        let mut shape = xt.shape().to_vec();
        let r = shape.len();
        shape[r - 2] = k_out;
        let y = contract_forward(xt.data(), wt.data(), batch, k_in, k_out, modes);
        let y = ComplexTensor::new(shape, y)?;
        let rg = self.rg(x) || self.rg(w);
        Ok(self.push(Value::Complex(y), Op::Contract(x, w), rg))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.real_checked(x, "sum")?.sum();
        let rg = self.rg(x);
        Ok(self.push(Value::Real(RealTensor::scalar(s)), Op::Sum(x), rg))
    }

    pub fn sum_squares(&mut self, x: Var) -> Result<Var> {
        let s = compensated_sum(self.real_checked(x, "sum_squares")?.data().iter().map(|v| v * v));
        let rg = self.rg(x);
        Ok(self.push(Value::Real(RealTensor::scalar(s)), Op::SumSquares(x), rg))
    }

    /// Mean squared error against a constant target.
    pub fn mse(&mut self, x: Var, target: &RealTensor) -> Result<Var> {
        let xt = self.real_checked(x, "mse")?;
        check_shape("mse", target.shape(), xt.shape())?;
        let n = xt.len().max(1) as f64;
        let s = compensated_sum(xt.data().iter().zip(target.data()).map(|(a, b)| (a - b) * (a - b))) / n;
        let rg = self.rg(x);
        Ok(self.push(
            Value::Real(RealTensor::scalar(s)),
            Op::Mse(x, target.clone()),
            rg,
        ))
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = match self.value(loss) {
            Value::Real(t) if t.len() == 1 => t,
            other => {
                return Err(Error::usage(format!(
                    "backward needs a real scalar loss, got shape {:?}",
                    other.shape()
                )))
            }
        };
        let mut grads: Vec<Option<Value>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Value::Real(RealTensor::filled(lt.shape(), 1.0)));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Value>], v: Var, g: Value) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node, g: &Value, grads: &mut [Option<Value>]) {
        let greal = || match g {
            Value::Real(t) => t,
            Value::Complex(_) => unreachable!(),
        };
        let gcomplex = || match g {
            Value::Complex(t) => t,
            Value::Real(_) => unreachable!(),
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let gy = greal();
                let (at, bt) = (self.real(*a), self.real(*b));
                let (m, n) = at.dims2().unwrap();
                let p = bt.shape()[1];
                if self.rg(*a) {
                    // ga = gy · bᵀ
                    let bt_t = bt.transpose().unwrap();
                    let mut ga = vec![0.0; m * n];
                    matmul_into(gy.data(), bt_t.data(), &mut ga, m, p, n);
                    self.accumulate(grads, *a, Value::Real(RealTensor::new(vec![m, n], ga).unwrap()));
                }
                if self.rg(*b) {
                    // gb = aᵀ · gy
                    let at_t = at.transpose().unwrap();
                    let mut gb = vec![0.0; n * p];
                    matmul_into(at_t.data(), gy.data(), &mut gb, n, m, p);
                    self.accumulate(grads, *b, Value::Real(RealTensor::new(vec![n, p], gb).unwrap()));
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, Value::Real(greal().scale(-1.0)));
            }
            Op::Mul(a, b) => {
                let gy = greal();
                if self.rg(*a) {
                    let ga = gy.zip_map(self.real(*b), "mul", |x, y| x * y).unwrap();
                    self.accumulate(grads, *a, Value::Real(ga));
                }
                if self.rg(*b) {
                    let gb = gy.zip_map(self.real(*a), "mul", |x, y| x * y).unwrap();
                    self.accumulate(grads, *b, Value::Real(gb));
                }
            }
            Op::Scale(x, s) => {
                self.accumulate(grads, *x, Value::Real(greal().scale(*s)));
            }
            Op::AddRowBias(x, b) => {
                let gy = greal();
                self.accumulate(grads, *x, g.clone());
                if self.rg(*b) {
                    let n = self.real(*b).len();
                    let mut gb = vec![0.0; n];
                    for row in gy.data().chunks_exact(n) {
                        for (acc, v) in gb.iter_mut().zip(row) {
                            *acc += v;
                        }
                    }
                    let shape = self.real(*b).shape().to_vec();
                    self.accumulate(grads, *b, Value::Real(RealTensor::new(shape, gb).unwrap()));
                }
            }
            Op::AddColBias(x, b) => {
                let gy = greal();
                self.accumulate(grads, *x, g.clone());
                if self.rg(*b) {
                    let (_, c) = gy.dims2().unwrap();
                    let gb: Vec<f64> = gy.data().chunks_exact(c.max(1)).map(|r| r.iter().sum()).collect();
                    let shape = self.real(*b).shape().to_vec();
                    self.accumulate(grads, *b, Value::Real(RealTensor::new(shape, gb).unwrap()));
                }
            }
            Op::AffineRows { x, scale } => {
                let gy = greal();
                let (_, c) = gy.dims2().unwrap();
                let mut gx = gy.clone();
                for (row, s) in gx.data_mut().chunks_exact_mut(c.max(1)).zip(scale) {
                    for v in row {
                        *v *= s;
                    }
                }
                self.accumulate(grads, *x, Value::Real(gx));
            }
            Op::Gelu(x) => {
                let gx = greal()
                    .zip_map(self.real(*x), "gelu", |gy, xv| gy * gelu_grad(xv))
                    .unwrap();
                self.accumulate(grads, *x, Value::Real(gx));
            }
            Op::ConcatRows(parts) => {
                let gy = greal();
                let (_, c) = gy.dims2().unwrap();
                let mut start = 0;
                for &p in parts {
                    let r = self.real(p).shape()[0];
                    if self.rg(p) {
                        let piece = gy.data()[start * c..(start + r) * c].to_vec();
                        self.accumulate(grads, p, Value::Real(RealTensor::new(vec![r, c], piece).unwrap()));
                    }
                    start += r;
                }
            }
            Op::Reshape(x) => {
                let shape = self.value(*x).shape().to_vec();
                let gx = match g {
                    Value::Real(t) => Value::Real(t.clone().reshape(&shape).unwrap()),
                    Value::Complex(t) => Value::Complex(t.clone().reshape(&shape).unwrap()),
                };
                self.accumulate(grads, *x, gx);
            }
            Op::Expand(z0, w) => {
                let gy = greal();
                let zt = self.real(*z0);
                let wt = self.real(*w);
                let (p, l) = zt.dims2().unwrap();
                let k = wt.len();
                if self.rg(*z0) {
                    let mut gz = vec![0.0; p * l];
                    for pi in 0..p {
                        let out = &mut gz[pi * l..(pi + 1) * l];
                        for (j, &wj) in wt.data().iter().enumerate() {
                            let src = &gy.data()[(pi * k + j) * l..(pi * k + j + 1) * l];
                            for (o, s) in out.iter_mut().zip(src) {
                                *o += s * wj;
                            }
                        }
                    }
                    self.accumulate(grads, *z0, Value::Real(RealTensor::new(vec![p, l], gz).unwrap()));
                }
                if self.rg(*w) {
                    let mut gw = vec![0.0; k];
                    for pi in 0..p {
                        let row = zt.row(pi);
                        for (j, acc) in gw.iter_mut().enumerate() {
                            let src = &gy.data()[(pi * k + j) * l..(pi * k + j + 1) * l];
                            *acc += src.iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
                        }
                    }
                    let shape = wt.shape().to_vec();
                    self.accumulate(grads, *w, Value::Real(RealTensor::new(shape, gw).unwrap()));
                }
            }
            Op::Rfft(x) => {
                let shape = self.real(*x).shape().to_vec();
                let n = *shape.last().unwrap();
                let gx = rfft_adjoint_lanes(gcomplex().data(), n);
                self.accumulate(grads, *x, Value::Real(RealTensor::new(shape, gx).unwrap()));
            }
            Op::Irfft(x) => {
                let gy = greal();
                let n = *gy.shape().last().unwrap();
                let shape = self.complex(*x).shape().to_vec();
                let gx = irfft_adjoint_lanes(gy.data(), n);
                self.accumulate(grads, *x, Value::Complex(ComplexTensor::new(shape, gx).unwrap()));
            }
            Op::Truncate(x) => {
                let n = *self.complex(*x).shape().last().unwrap();
                let gx = gcomplex().pad_last(n).unwrap();
                self.accumulate(grads, *x, Value::Complex(gx));
            }
            Op::Pad(x) => {
                let m = *self.complex(*x).shape().last().unwrap();
                let gx = gcomplex().truncate_last(m).unwrap();
                self.accumulate(grads, *x, Value::Complex(gx));
            }
            Op::Contract(x, w) => {
                let xt = self.complex(*x);
                let wt = self.complex(*w);
                let (batch, k_in, k_out, modes) = contract_dims(xt.shape(), wt.shape()).unwrap();
                let (gx, gw) = contract_backward(
                    gcomplex().data(),
                    xt.data(),
                    wt.data(),
                    batch,
                    k_in,
                    k_out,
                    modes,
                    self.rg(*x),
                    self.rg(*w),
                );
                if let Some(gx) = gx {
                    let t = ComplexTensor::new(xt.shape().to_vec(), gx).unwrap();
                    self.accumulate(grads, *x, Value::Complex(t));
                }
                if let Some(gw) = gw {
                    let t = ComplexTensor::new(wt.shape().to_vec(), gw).unwrap();
                    self.accumulate(grads, *w, Value::Complex(t));
                }
            }
            Op::Sum(x) => {
                let s = greal().data()[0];
                let shape = self.real(*x).shape().to_vec();
                self.accumulate(grads, *x, Value::Real(RealTensor::filled(&shape, s)));
            }
            Op::SumSquares(x) => {
                let s = greal().data()[0];
                let gx = self.real(*x).scale(2.0 * s);
                self.accumulate(grads, *x, Value::Real(gx));
            }
            Op::Mse(x, target) => {
                let s = greal().data()[0];
                let xt = self.real(*x);
                let n = xt.len().max(1) as f64;
                let gx = xt.zip_map(target, "mse", |a, b| 2.0 * (a - b) * s / n).unwrap();
                self.accumulate(grads, *x, Value::Real(gx));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> RealTensor {
        RealTensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    /// Central differences of `f` w.r.t. every entry of `x`.
    fn numeric_grad(x: &RealTensor, f: impl Fn(&RealTensor) -> f64) -> Vec<f64> {
        let eps = 1e-6;
        (0..x.len())
            .map(|i| {
                let mut xp = x.clone();
                xp.data_mut()[i] += eps;
                let mut xm = x.clone();
                xm.data_mut()[i] -= eps;
                (f(&xp) - f(&xm)) / (2.0 * eps)
            })
            .collect()
    }

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (i, (x, y)) in a.iter().zip(b).enumerate() {
            let scale = x.abs().max(y.abs()).max(1.0);
            assert!((x - y).abs() <= tol * scale, "entry {i}: {x} vs {y}");
        }
    }

    #[test]
    fn sum_of_squares_gradient_is_two_p() {
        let p = RealTensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap();
        let mut tape = Tape::new();
        let v = tape.variable(p.clone());
        let loss = tape.sum_squares(v).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.real(v).unwrap().data(), &[2.0, -4.0, 1.0]);
    }

    #[test]
    fn linear_mse_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random(&[5, 3], &mut rng);
        let p = random(&[3, 1], &mut rng);
        let y = random(&[5, 1], &mut rng);
        let mut tape = Tape::new();
        let av = tape.constant(a.clone());
        let pv = tape.variable(p.clone());
        let ap = tape.matmul(av, pv).unwrap();
        let loss = tape.mse(ap, &y).unwrap();
        let g = tape.backward(loss).unwrap();
        // 2 Aᵀ(Ap − y)/n
        let resid = a.matmul(&p).unwrap().sub(&y).unwrap();
        let expected = a.transpose().unwrap().matmul(&resid).unwrap().scale(2.0 / 5.0);
        assert_close(g.real(pv).unwrap().data(), expected.data(), 1e-14);
        assert!(g.get(av).is_none());
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::new();
        let v = tape.variable(RealTensor::zeros(&[2]));
        assert!(tape.backward(v).is_err());
    }

    #[test]
    fn elementwise_and_bias_ops_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random(&[3, 4], &mut rng);
        let rb = random(&[4], &mut rng);
        let cb = random(&[3], &mut rng);
        let other = random(&[3, 4], &mut rng);
        let build = |x: &RealTensor, tape: &mut Tape| {
            let xv = tape.variable(x.clone());
            let r = tape.constant(rb.clone());
            let c = tape.constant(cb.clone());
            let o = tape.constant(other.clone());
            let a = tape.add_row_bias(xv, r).unwrap();
            let b = tape.add_col_bias(a, c).unwrap();
            let d = tape.gelu(b).unwrap();
            let e = tape.mul(d, o).unwrap();
            let f = tape.affine_rows(e, &[1.5, -0.5, 2.0], &[0.1, 0.2, 0.3]).unwrap();
            let h = tape.sub(f, xv).unwrap();
            let k = tape.scale(h, 0.7).unwrap();
            let loss = tape.sum_squares(k).unwrap();
            (xv, loss)
        };
        let mut tape = Tape::new();
        let (xv, loss) = build(&x, &mut tape);
        let g = tape.backward(loss).unwrap();
        let num = numeric_grad(&x, |x| {
            let mut t = Tape::new();
            let (_, l) = build(x, &mut t);
            t.real(l).data()[0]
        });
        assert_close(g.real(xv).unwrap().data(), &num, 1e-7);
    }

    #[test]
    fn spectral_chain_matches_finite_differences() {
        // expand -> rfft -> truncate -> contract -> pad -> irfft -> sum of squares
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (p, k, l, m) = (3, 2, 8, 3);
        let z0 = random(&[p, l], &mut rng);
        let we = random(&[1, k], &mut rng);
        let w = ComplexTensor::from_fn(&[k, k, m], |_| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let build = |z0: &RealTensor, w: &ComplexTensor, tape: &mut Tape| {
            let zv = tape.variable(z0.clone());
            let ev = tape.variable(we.clone());
            let wv = tape.leaf(Value::Complex(w.clone()), true);
            let z1 = tape.expand(zv, ev).unwrap();
            let xf = tape.rfft(z1).unwrap();
            let xm = tape.truncate_modes(xf, m).unwrap();
            let yf = tape.contract(xm, wv).unwrap();
            let yp = tape.pad_modes(yf, spectrum_len(l)).unwrap();
            let yr = tape.irfft(yp, l).unwrap();
            let flat = tape.reshape(yr, &[p * k, l]).unwrap();
            let loss = tape.sum_squares(flat).unwrap();
            (zv, wv, loss)
        };
        let mut tape = Tape::new();
        let (zv, wv, loss) = build(&z0, &w, &mut tape);
        let g = tape.backward(loss).unwrap();

        let num = numeric_grad(&z0, |z| {
            let mut t = Tape::new();
            let (_, _, l) = build(z, &w, &mut t);
            t.real(l).data()[0]
        });
        assert_close(g.real(zv).unwrap().data(), &num, 1e-6);

        // complex kernel: perturb re and im separately
        let gw = g.complex(wv).unwrap();
        let eps = 1e-6;
        for idx in 0..w.len() {
            for (part, unit) in [(0, Complex64::new(eps, 0.0)), (1, Complex64::new(0.0, eps))] {
                let mut wp = w.clone();
                wp.data_mut()[idx] += unit;
                let mut wm = w.clone();
                wm.data_mut()[idx] -= unit;
                let eval = |w: &ComplexTensor| {
                    let mut t = Tape::new();
                    let (_, _, l) = build(&z0, w, &mut t);
                    t.real(l).data()[0]
                };
                let fd = (eval(&wp) - eval(&wm)) / (2.0 * eps);
                let an = if part == 0 { gw.data()[idx].re } else { gw.data()[idx].im };
                assert!((fd - an).abs() < 1e-6 * fd.abs().max(1.0), "w[{idx}].{part}: {an} vs {fd}");
            }
        }
    }

    #[test]
    fn matmul_and_concat_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random(&[2, 3], &mut rng);
        let b = random(&[3, 4], &mut rng);
        let c = random(&[1, 4], &mut rng);
        let target = random(&[3, 4], &mut rng);
        let build = |a: &RealTensor, tape: &mut Tape| {
            let av = tape.variable(a.clone());
            let bv = tape.variable(b.clone());
            let cv = tape.constant(c.clone());
            let ab = tape.matmul(av, bv).unwrap();
            let cat = tape.concat_rows(&[ab, cv]).unwrap();
            let s = tape.mse(cat, &target).unwrap();
            (av, bv, s)
        };
        let mut tape = Tape::new();
        let (av, bv, loss) = build(&a, &mut tape);
        let g = tape.backward(loss).unwrap();
        let num = numeric_grad(&a, |a| {
            let mut t = Tape::new();
            let (_, _, l) = build(a, &mut t);
            t.real(l).data()[0]
        });
        assert_close(g.real(av).unwrap().data(), &num, 1e-7);
        assert_eq!(g.real(bv).unwrap().shape(), &[3, 4]);
    }

    #[test]
    fn shared_node_accumulates() {
        let mut tape = Tape::new();
        let x = tape.variable(RealTensor::new(vec![2], vec![1.0, 2.0]).unwrap());
        let y = tape.add(x, x).unwrap();
        let s = tape.sum(y).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.real(x).unwrap().data(), &[2.0, 2.0]);
    }
}
