//! The velocity-field operator: parameters, initialization and forward pass.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Architecture, Head, OperatorHyper};
use super::decompose::spectral_decompose;
use super::layers::{assemble_graph, embed_history_graph, expand_graph, project_graph, spectral_graph};
use super::norm::{instance_normalize, NormStats};
use crate::error::{check_shape, Error, Result};
use crate::numerics::{ComplexTensor, GradientRecord, Gradients, ParamSet, ParamTensor, RealTensor, Tape, Value, Var};

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], bound: f64) -> RealTensor {
    RealTensor::from_fn(shape, |_| rng.random_range(-bound..bound))
}

/// Deterministic initialization for `(hyper, arch)`.
///
/// Real weights and biases are uniform in `±1/sqrt(fan_in)`, kernel real and
/// imaginary parts uniform in `±1/k`, and `W_e` uniform in `±1`.
pub fn init_params(hyper: &OperatorHyper, arch: &Architecture, seed: u64) -> Result<ParamSet> {
    arch.validate(hyper)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (s, l, c, k, h) = (arch.history_len, arch.horizon, arch.channels, hyper.k, hyper.hidden);
    let mut params = ParamSet::new();
    for b in arch.branches() {
        match arch.head {
            Head::Spectral => {
                let m = arch.modes(hyper);
                let fan_s = 1.0 / (s as f64).sqrt();
                let fan_h = 1.0 / (h as f64).sqrt();
                params.push(format!("{b}.mlp.w1"), ParamTensor::Real(uniform(&mut rng, &[s, h], fan_s)));
                params.push(format!("{b}.mlp.b1"), ParamTensor::Real(uniform(&mut rng, &[h], fan_s)));
                params.push(format!("{b}.mlp.w2"), ParamTensor::Real(uniform(&mut rng, &[h, l], fan_h)));
                params.push(format!("{b}.mlp.b2"), ParamTensor::Real(uniform(&mut rng, &[l], fan_h)));
                let scale = 1.0 / k as f64;
                let kernel = ComplexTensor::from_fn(&[k, k, m], |_| {
                    let re = rng.random_range(-1.0..1.0) * scale;
                    let im = rng.random_range(-1.0..1.0) * scale;
                    Complex64::new(re, im)
                });
                params.push(format!("{b}.kernel"), ParamTensor::Complex(kernel));
                let features = arch.input_rows() * k;
                let fan_p = 1.0 / (features as f64).sqrt();
                params.push(format!("{b}.proj.w"), ParamTensor::Real(uniform(&mut rng, &[c, features], fan_p)));
                params.push(format!("{b}.proj.b"), ParamTensor::Real(uniform(&mut rng, &[c], fan_p)));
            }
            Head::Linear => {
                let fan_s = 1.0 / (s as f64).sqrt();
                params.push(format!("{b}.linear.w"), ParamTensor::Real(uniform(&mut rng, &[s, l], fan_s)));
                params.push(format!("{b}.linear.b"), ParamTensor::Real(uniform(&mut rng, &[l], fan_s)));
            }
        }
    }
    if arch.head == Head::Spectral {
        params.push("expand", ParamTensor::Real(uniform(&mut rng, &[1, k], 1.0)));
    }
    Ok(params)
}

/// History statistics and normalized branches (`C×S` each) of one window.
///
/// This part of the pipeline is parameter-free, so it stays off the tape.
#[derive(Debug, Clone)]
pub struct Conditioned {
    pub stats: NormStats,
    pub branches: Vec<RealTensor>,
}

/// Parameters placed on a tape, index-aligned with their [`ParamSet`].
#[derive(Debug, Clone)]
pub struct Bound {
    names: Vec<String>,
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.vars[i])
            .ok_or_else(|| Error::usage(format!("unknown parameter '{name}'")))
    }

    /// Collects the gradient of every bound parameter; unreached ones are zero.
    pub fn gradients(&self, grads: &mut Gradients, params: &ParamSet) -> GradientRecord {
        let tensors = self
            .vars
            .iter()
            .zip(params.tensors())
            .map(|(&v, p)| match grads.take(v) {
                Some(Value::Real(t)) => ParamTensor::Real(t),
                Some(Value::Complex(t)) => ParamTensor::Complex(t),
                None => p.zeros_like(),
            })
            .collect();
        GradientRecord::from_tensors(tensors)
    }
}

/// Branch embeddings in normalized units and their denormalized sum, `C×L`.
#[derive(Debug, Clone)]
pub struct EmbeddingVars {
    pub branches: Vec<Var>,
    pub raw: Var,
}

/// What the operator output represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputKind {
    /// A prediction of the future window; denormalized with scale and shift.
    Endpoint,
    /// A velocity; denormalized with scale only.
    Velocity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    pub hyper: OperatorHyper,
    pub arch: Architecture,
    pub params: ParamSet,
    pub seed: u64,
}

impl Operator {
    pub fn new(hyper: OperatorHyper, arch: Architecture, seed: u64) -> Result<Self> {
        let params = init_params(&hyper, &arch, seed)?;
        Ok(Self {
            hyper,
            arch,
            params,
            seed,
        })
    }

    /// Assembles an operator from existing parameters, checking every name and shape.
    pub fn from_parts(hyper: OperatorHyper, arch: Architecture, params: ParamSet, seed: u64) -> Result<Self> {
        let template = init_params(&hyper, &arch, 0)?;
        if template.names() != params.names() {
            return Err(Error::data(format!(
                "parameter names {:?} do not match the architecture ({:?})",
                params.names(),
                template.names()
            )));
        }
        for ((name, a), b) in template.iter().zip(params.tensors()) {
            if a.shape() != b.shape() || a.dtype() != b.dtype() {
                return Err(Error::data(format!(
                    "parameter {name}: expected {} {:?}, got {} {:?}",
                    a.dtype(),
                    a.shape(),
                    b.dtype(),
                    b.shape()
                )));
            }
        }
        Ok(Self {
            hyper,
            arch,
            params,
            seed,
        })
    }

    pub fn num_params(&self) -> usize {
        self.params.num_scalars()
    }

    /// One line per tensor plus a total.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for (name, t) in self.params.iter() {
            out.push_str(&format!("{name:<20} {:<5} {:?} {}\n", t.dtype(), t.shape(), t.flat().len()));
        }
        out.push_str(&format!("total scalars: {}\n", self.num_params()));
        out
    }

    fn check_history(&self, h: &RealTensor) -> Result<()> {
        check_shape("history", &[self.arch.history_len, self.arch.channels], h.shape())
    }

    /// Normalizes `h` (S×C) and splits it into branches.
    pub fn condition(&self, h: &RealTensor) -> Result<Conditioned> {
        self.check_history(h)?;
        let (h_norm, stats) = if self.arch.normalize {
            instance_normalize(h, self.hyper.eps_norm).map_err(|e| e.in_stage("normalize"))?
        } else {
            (h.clone(), NormStats::identity(self.arch.channels))
        };
        let branches = if self.arch.decompose {
            let (trend, season) = spectral_decompose(&h_norm, self.hyper.top_k).map_err(|e| e.in_stage("decompose"))?;
            vec![trend.transpose()?, season.transpose()?]
        } else {
            vec![h_norm.transpose()?]
        };
        Ok(Conditioned { stats, branches })
    }

    /// Places `params` on the tape.
    pub fn bind(&self, tape: &mut Tape, params: &ParamSet, requires_grad: bool) -> Bound {
        let vars = params
            .tensors()
            .iter()
            .map(|p| tape.leaf(Value::from(p.clone()), requires_grad))
            .collect();
        Bound {
            names: params.names().to_vec(),
            vars,
        }
    }

    /// Per-branch history embeddings and the denormalized path source.
    pub fn embed_graph(&self, tape: &mut Tape, bound: &Bound, cond: &Conditioned) -> Result<EmbeddingVars> {
        let mut branches = Vec::with_capacity(cond.branches.len());
        for (name, data) in self.arch.branches().iter().zip(&cond.branches) {
            let x = tape.constant(data.clone());
            let e = match self.arch.head {
                Head::Spectral => embed_history_graph(
                    tape,
                    x,
                    bound.var(&format!("{name}.mlp.w1"))?,
                    bound.var(&format!("{name}.mlp.b1"))?,
                    bound.var(&format!("{name}.mlp.w2"))?,
                    bound.var(&format!("{name}.mlp.b2"))?,
                ),
                Head::Linear => {
                    let y = tape.matmul(x, bound.var(&format!("{name}.linear.w"))?)?;
                    tape.add_row_bias(y, bound.var(&format!("{name}.linear.b"))?)
                }
            }
            .map_err(|e| e.in_stage("embed_history"))?;
            branches.push(e);
        }
        let mut sum = branches[0];
        for &b in &branches[1..] {
            sum = tape.add(sum, b)?;
        }
        let raw = tape.affine_rows(sum, &cond.stats.sigma, &cond.stats.mu)?;
        Ok(EmbeddingVars { branches, raw })
    }

    /// Operator output (`C×L`, raw units) for path state `g` (`C×L`, raw
    /// units) at time `t`.
    ///
    /// The linear head ignores `g` and `t` and returns its embedding.
    #[allow(clippy::too_many_arguments)]
    pub fn output_graph(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        cond: &Conditioned,
        emb: &EmbeddingVars,
        g: Var,
        t: f64,
        kind: OutputKind,
    ) -> Result<Var> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::usage(format!("flow time t = {t} outside [0, 1]")));
        }
        let stats = &cond.stats;
        let zero_shift = vec![0.0; stats.channels()];
        let shift = match kind {
            OutputKind::Endpoint => &stats.mu,
            OutputKind::Velocity => &zero_shift,
        };
        let y_norm = match self.arch.head {
            Head::Linear => {
                let mut sum = emb.branches[0];
                for &b in &emb.branches[1..] {
                    sum = tape.add(sum, b)?;
                }
                sum
            }
            Head::Spectral => {
                check_shape("path state", &[self.arch.channels, self.arch.horizon], tape.real(g).shape())?;
                let inv: Vec<f64> = stats.sigma.iter().map(|s| 1.0 / s).collect();
                let neg: Vec<f64> = stats.mu.iter().zip(&stats.sigma).map(|(m, s)| -m / s).collect();
                let g_norm = tape.affine_rows(g, &inv, &neg)?;
                let we = bound.var("expand")?;
                let mut total: Option<Var> = None;
                for (name, &e) in self.arch.branches().iter().zip(&emb.branches) {
                    let z0 = assemble_graph(tape, g_norm, e, t).map_err(|e| e.in_stage("assemble_input"))?;
                    let z1 = expand_graph(tape, z0, we).map_err(|e| e.in_stage("dimension_expand"))?;
                    let y = spectral_graph(tape, z1, bound.var(&format!("{name}.kernel"))?)
                        .map_err(|e| e.in_stage("spectral_layer"))?;
                    let out = project_graph(
                        tape,
                        y,
                        bound.var(&format!("{name}.proj.w"))?,
                        bound.var(&format!("{name}.proj.b"))?,
                    )
                    .map_err(|e| e.in_stage("project"))?;
                    total = Some(match total {
                        Some(acc) => tape.add(acc, out)?,
                        None => out,
                    });
                }
                total.expect("at least one branch")
            }
        };
        tape.affine_rows(y_norm, &stats.sigma, shift)
    }

    /// Denormalized history embedding (`L×C`): the flow's path source.
    pub fn history_embedding(&self, h: &RealTensor) -> Result<RealTensor> {
        self.history_embedding_with(&self.params, h)
    }

    pub fn history_embedding_with(&self, params: &ParamSet, h: &RealTensor) -> Result<RealTensor> {
        let cond = self.condition(h)?;
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, params, false);
        let emb = self.embed_graph(&mut tape, &bound, &cond)?;
        tape.real(emb.raw).transpose()
    }

    /// Predicted future window (`L×C`) from history `h` (S×C), path state
    /// `g` (L×C) and time `t`.
    pub fn forward(&self, h: &RealTensor, g: &RealTensor, t: f64) -> Result<RealTensor> {
        self.forward_with(&self.params, h, g, t, OutputKind::Endpoint)
    }

    pub fn forward_with(
        &self,
        params: &ParamSet,
        h: &RealTensor,
        g: &RealTensor,
        t: f64,
        kind: OutputKind,
    ) -> Result<RealTensor> {
        check_shape("path state", &[self.arch.horizon, self.arch.channels], g.shape())?;
        let cond = self.condition(h)?;
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, params, false);
        let emb = self.embed_graph(&mut tape, &bound, &cond)?;
        let gv = tape.constant(g.transpose()?);
        let y = self.output_graph(&mut tape, &bound, &cond, &emb, gv, t, kind)?;
        tape.real(y).transpose()
    }
}
