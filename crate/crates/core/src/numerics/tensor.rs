//! Dense row-major real and complex tensors.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_shape, Error, Result};

/// Neumaier-compensated sum; error stays near one rounding regardless of length.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Dense real tensor, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Dense complex tensor, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTensor {
    shape: Vec<usize>,
    data: Vec<Complex64>,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Splits `shape` around `axis` into (outer, len, inner) element counts.
pub(crate) fn axis_split(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::usage(format!(
            "axis {axis} out of range for tensor of rank {}",
            shape.len()
        )));
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

impl RealTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if numel(&shape) != data.len() {
            return Err(Error::usage(format!(
                "shape {shape:?} holds {} values, got {}",
                numel(&shape),
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; numel(shape)],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; numel(shape)],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![],
            data: vec![value],
        }
    }

    /// Builds a 2-D tensor from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::usage("ragged rows"));
        }
        let data = rows.iter().flatten().copied().collect();
        Self::new(vec![rows.len(), ncols], data)
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let data = (0..numel(shape)).map(&mut f).collect();
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Rows and columns of a 2-D tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(Error::usage(format!(
                "expected a 2-D tensor, got shape {:?}",
                self.shape
            ))),
        }
    }

    /// Element `(i, j)` of a 2-D tensor. Panics when out of range.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.shape[1] + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let cols = self.shape[1];
        self.data[i * cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let cols = self.shape[1];
        &self.data[i * cols..(i + 1) * cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        let (rows, cols) = (self.shape[0], self.shape[1]);
        (0..rows).map(|i| self.data[i * cols + j]).collect()
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        if numel(shape) != self.data.len() {
            return Err(Error::Shape {
                op: "reshape",
                expected: self.shape,
                got: shape.to_vec(),
            });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn transpose(&self) -> Result<Self> {
        let (r, c) = self.dims2()?;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(Self {
            shape: vec![c, r],
            data: out,
        })
    }

    /// Rows `start..end` of a 2-D tensor.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self> {
        let (r, c) = self.dims2()?;
        if start > end || end > r {
            return Err(Error::usage(format!(
                "row range {start}..{end} out of bounds for {r} rows"
            )));
        }
        Ok(Self {
            shape: vec![end - start, c],
            data: self.data[start * c..end * c].to_vec(),
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        check_shape(op, &self.shape, &other.shape)?;
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "sub", |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|x| x * s)
    }

    pub fn sum(&self) -> f64 {
        compensated_sum(self.data.iter().copied())
    }

    pub fn norm(&self) -> f64 {
        compensated_sum(self.data.iter().map(|x| x * x)).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// 2-D matrix product.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        let (m, n) = self.dims2()?;
        let (n2, p) = other.dims2()?;
        if n != n2 {
            return Err(Error::Shape {
                op: "matmul",
                expected: vec![n, p],
                got: other.shape.clone(),
            });
        }
        let mut out = vec![0.0; m * p];
        matmul_into(&self.data, &other.data, &mut out, m, n, p);
        Ok(Self {
            shape: vec![m, p],
            data: out,
        })
    }
}

/// `out[m×p] += a[m×n] · b[n×p]`
pub(crate) fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, n: usize, p: usize) {
    for i in 0..m {
        let orow = &mut out[i * p..(i + 1) * p];
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            let brow = &b[k * p..(k + 1) * p];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
    }
}

impl ComplexTensor {
    pub fn new(shape: Vec<usize>, data: Vec<Complex64>) -> Result<Self> {
        if numel(&shape) != data.len() {
            return Err(Error::usage(format!(
                "shape {shape:?} holds {} values, got {}",
                numel(&shape),
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![Complex64::new(0.0, 0.0); numel(shape)],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> Complex64) -> Self {
        let data = (0..numel(shape)).map(&mut f).collect();
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        if numel(shape) != self.data.len() {
            return Err(Error::Shape {
                op: "reshape",
                expected: self.shape,
                got: shape.to_vec(),
            });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).norm()))
    }

    /// Views the values as interleaved `(re, im)` pairs.
    pub fn as_f64(&self) -> &[f64] {
        bytemuck::cast_slice(&self.data)
    }

    pub fn as_f64_mut(&mut self) -> &mut [f64] {
        bytemuck::cast_slice_mut(&mut self.data)
    }

    /// Keeps the first `m` entries along the last axis.
    pub fn truncate_last(&self, m: usize) -> Result<Self> {
        let n = *self.shape.last().ok_or_else(|| Error::usage("rank-0 tensor"))?;
        if m > n {
            return Err(Error::usage(format!("cannot keep {m} of {n} modes")));
        }
        let outer = self.data.len() / n.max(1);
        let mut data = Vec::with_capacity(outer * m);
        for o in 0..outer {
            data.extend_from_slice(&self.data[o * n..o * n + m]);
        }
        let mut shape = self.shape.clone();
        *shape.last_mut().unwrap() = m;
        Ok(Self { shape, data })
    }

    /// Zero-pads the last axis to length `n`.
    pub fn pad_last(&self, n: usize) -> Result<Self> {
        let m = *self.shape.last().ok_or_else(|| Error::usage("rank-0 tensor"))?;
        if m > n {
            return Err(Error::usage(format!("cannot pad {m} modes to {n}")));
        }
        let outer = if m == 0 { 0 } else { self.data.len() / m };
        let mut data = vec![Complex64::new(0.0, 0.0); outer * n];
        for o in 0..outer {
            data[o * n..o * n + m].copy_from_slice(&self.data[o * m..(o + 1) * m]);
        }
        let mut shape = self.shape.clone();
        *shape.last_mut().unwrap() = n;
        Ok(Self { shape, data })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_cancelled_terms() {
        let v = [1.0, 1e-16, 1e-16, -1.0];
        assert_eq!(v.iter().sum::<f64>(), 0.0);
        assert_eq!(compensated_sum(v), 2e-16);
        assert_eq!(compensated_sum(std::iter::repeat_n(0.1, 10)), 1.0);
    }

    #[test]
    fn shape_must_match_value_count() {
        assert!(RealTensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(ComplexTensor::new(vec![2], vec![Complex64::new(0.0, 0.0); 3]).is_err());
    }

    #[test]
    fn matmul_small() {
        let a = RealTensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = RealTensor::from_rows(&[vec![5.0], vec![6.0]]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), &[2, 1]);
        assert_eq!(c.data(), &[17.0, 39.0]);
        assert!(b.matmul(&b).is_err());
    }

    #[test]
    fn transpose_roundtrip() {
        let a = RealTensor::from_fn(&[3, 4], |i| i as f64);
        assert_eq!(a.transpose().unwrap().transpose().unwrap(), a);
        assert_eq!(a.transpose().unwrap().at(1, 2), a.at(2, 1));
    }

    #[test]
    fn truncate_then_pad_zeroes_tail() {
        let x = ComplexTensor::from_fn(&[2, 4], |i| Complex64::new(i as f64, 1.0));
        let y = x.truncate_last(2).unwrap().pad_last(4).unwrap();
        assert_eq!(y.data()[1], x.data()[1]);
        assert_eq!(y.data()[2], Complex64::new(0.0, 0.0));
        assert_eq!(y.data()[5], x.data()[5]);
        assert_eq!(y.data()[7], Complex64::new(0.0, 0.0));
    }
}
