//! Named parameter containers and their gradients.

use super::tensor::{ComplexTensor, RealTensor};
use crate::error::{Error, Result};

/// A learnable tensor, real or complex.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamTensor {
    Real(RealTensor),
    Complex(ComplexTensor),
}

impl ParamTensor {
    pub fn shape(&self) -> &[usize] {
        match self {
            ParamTensor::Real(t) => t.shape(),
            ParamTensor::Complex(t) => t.shape(),
        }
    }

    pub fn dtype(&self) -> &'static str {
        match self {
            ParamTensor::Real(_) => "f64",
            ParamTensor::Complex(_) => "c128",
        }
    }

    /// Values as a flat real slice; complex entries are interleaved `(re, im)`.
    pub fn flat(&self) -> &[f64] {
        match self {
            ParamTensor::Real(t) => t.data(),
            ParamTensor::Complex(t) => t.as_f64(),
        }
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        match self {
            ParamTensor::Real(t) => t.data_mut(),
            ParamTensor::Complex(t) => t.as_f64_mut(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        match self {
            ParamTensor::Real(t) => ParamTensor::Real(RealTensor::zeros(t.shape())),
            ParamTensor::Complex(t) => ParamTensor::Complex(ComplexTensor::zeros(t.shape())),
        }
    }

    fn congruent(&self, other: &Self) -> bool {
        self.dtype() == other.dtype() && self.shape() == other.shape()
    }
}

/// Ordered, named collection of parameters.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<ParamTensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: ParamTensor) {
        self.names.push(name.into());
        self.tensors.push(tensor);
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[ParamTensor] {
        &self.tensors
    }

    pub fn tensor_mut(&mut self, idx: usize) -> &mut ParamTensor {
        &mut self.tensors[idx]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&ParamTensor> {
        self.index_of(name).map(|i| &self.tensors[i])
    }

    pub fn real(&self, name: &str) -> Result<&RealTensor> {
        match self.get(name) {
            Some(ParamTensor::Real(t)) => Ok(t),
            Some(_) => Err(Error::usage(format!("parameter {name} is not real"))),
            None => Err(Error::usage(format!("missing parameter {name}"))),
        }
    }

    pub fn complex(&self, name: &str) -> Result<&ComplexTensor> {
        match self.get(name) {
            Some(ParamTensor::Complex(t)) => Ok(t),
            Some(_) => Err(Error::usage(format!("parameter {name} is not complex"))),
            None => Err(Error::usage(format!("missing parameter {name}"))),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamTensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Total number of real scalars (complex entries count twice).
    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.flat().len()).sum()
    }
}

/// Per-parameter gradients, index-aligned with a [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientRecord {
    tensors: Vec<ParamTensor>,
}

impl GradientRecord {
    pub fn zeros_like(params: &ParamSet) -> Self {
        Self {
            tensors: params.tensors.iter().map(ParamTensor::zeros_like).collect(),
        }
    }

    pub fn from_tensors(tensors: Vec<ParamTensor>) -> Self {
        Self { tensors }
    }

    pub fn tensors(&self) -> &[ParamTensor] {
        &self.tensors
    }

    pub fn get(&self, idx: usize) -> &ParamTensor {
        &self.tensors[idx]
    }

    pub fn tensor_mut(&mut self, idx: usize) -> &mut ParamTensor {
        &mut self.tensors[idx]
    }

    pub fn is_congruent_with(&self, params: &ParamSet) -> bool {
        self.tensors.len() == params.tensors.len()
            && self
                .tensors
                .iter()
                .zip(&params.tensors)
                .all(|(g, p)| g.congruent(p))
    }

    pub fn add_assign(&mut self, other: &GradientRecord) -> Result<()> {
        if self.tensors.len() != other.tensors.len()
            || self.tensors.iter().zip(&other.tensors).any(|(a, b)| !a.congruent(b))
        {
            return Err(Error::usage("gradient records are not congruent"));
        }
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.flat_mut().iter_mut().zip(b.flat()) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for t in &mut self.tensors {
            for x in t.flat_mut() {
                *x *= s;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.flat().iter().all(|x| x.is_finite()))
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| t.flat().iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }
}
