//! Dense tensors, FFTs, reverse-mode differentiation, gradient checking and
//! the Adam optimizer.

pub mod adam;
pub mod autodiff;
pub mod contract;
pub mod fft;
pub mod gradcheck;
pub mod params;
pub mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use autodiff::{Gradients, Tape, Value, Var};
pub use contract::complex_contract;
pub use fft::{irfft, rfft, spectrum_len};
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use params::{GradientRecord, ParamSet, ParamTensor};
pub use tensor::{compensated_sum, ComplexTensor, RealTensor};
