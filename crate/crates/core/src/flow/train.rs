//! The conditional flow-matching loss, minibatch gradients and the training loop.

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{FlowConfig, Objective, TrainConfig};
use super::ode::predict_with;
use super::path::{path_std, standard_noise};
use crate::data::WindowPair;
use crate::error::{Error, Result};
use crate::numerics::{adam_step, compensated_sum, AdamState, GradientRecord, ParamSet, RealTensor, Tape, Var};
use crate::operator::{Bound, Operator, OutputKind};

/// Loss above which training is declared divergent.
pub const DIVERGENCE_LOSS: f64 = 1e6;

/// Random quantities of one training sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub t: f64,
    /// Bridge noise in channel-major `C×L` layout, present when the bridge
    /// has nonzero width at `t`.
    pub noise: Option<RealTensor>,
}

impl Draw {
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, cfg: &FlowConfig, channels: usize, horizon: usize) -> Self {
        let t = match cfg.objective {
            Objective::FlowMatching => rng.random_range(0.0..1.0),
            Objective::Direct => 0.0,
        };
        let noise = (cfg.objective == Objective::FlowMatching && path_std(cfg.sigma_path, t) > 0.0)
            .then(|| standard_noise(rng, &[channels, horizon]));
        Self { t, noise }
    }
}

/// Loss of one pair at the given draw, and its gradient when `want_grad`.
///
/// The path source is the operator's own history embedding, so gradients
/// reach the embedding through both the path state and the assembled input.
pub fn sample_loss(
    op: &Operator,
    params: &ParamSet,
    pair: &WindowPair,
    draw: &Draw,
    cfg: &FlowConfig,
    want_grad: bool,
) -> Result<(f64, Option<GradientRecord>)> {
    let (mut tape, bound, pred, target, t) = sample_graph(op, params, pair, draw, cfg, want_grad)?;
    let loss = tape.mse(pred, &target)?;
    let value = tape.real(loss).data()[0];
    if !value.is_finite() {
        return Err(Error::numerical(format!(
            "non-finite loss for window at row {} (t = {t}, |H|max = {})",
            pair.start_index,
            pair.history.max_abs()
        )));
    }
    if !want_grad {
        return Ok((value, None));
    }
    let mut grads = tape.backward(loss)?;
    Ok((value, Some(bound.gradients(&mut grads, params))))
}

/// Tape holding the prediction scored by the loss, with its target and `t`.
fn sample_graph(
    op: &Operator,
    params: &ParamSet,
    pair: &WindowPair,
    draw: &Draw,
    cfg: &FlowConfig,
    want_grad: bool,
) -> Result<(Tape, Bound, Var, RealTensor, f64)> {
    let cond = op.condition(&pair.history)?;
    let target = pair.future.transpose()?;
    let mut tape = Tape::new();
    let bound = op.bind(&mut tape, params, want_grad);
    let emb = op.embed_graph(&mut tape, &bound, &cond)?;
    let (g, t) = match cfg.objective {
        Objective::Direct => (emb.raw, 0.0),
        Objective::FlowMatching => {
            let t = draw.t;
            let sd = path_std(cfg.sigma_path, t);
            let mut offset = target.scale(t);
            if let Some(noise) = &draw.noise {
                offset = offset.zip_map(noise, "path noise", |a, x| a + sd * x)?;
            }
            let src = tape.scale(emb.raw, 1.0 - t)?;
            let off = tape.constant(offset);
            (tape.add(src, off)?, t)
        }
    };
    let velocity = !cfg.reparameterized && cfg.objective == Objective::FlowMatching;
    let kind = if velocity { OutputKind::Velocity } else { OutputKind::Endpoint };
    let out = op.output_graph(&mut tape, &bound, &cond, &emb, g, t, kind)?;
    // a velocity prediction v̂ is scored against f − h_emb, i.e. v̂ + h_emb against f
    let pred = if velocity { tape.add(out, emb.raw)? } else { out };
    Ok((tape, bound, pred, target, t))
}

/// Mean flow loss over fixed pairs and draws, measured relative to a base
/// parameter set.
///
/// `delta(p)` equals `mean loss(p) − mean loss(base)` but is formed from
/// residual differences, so it keeps full relative precision when `p` is a
/// small perturbation of `base`. Central differences of `delta` are those of
/// the loss without the cancellation against its absolute size.
pub struct LossProbe<'a> {
    op: &'a Operator,
    pairs: &'a [&'a WindowPair],
    draws: &'a [Draw],
    cfg: &'a FlowConfig,
    base: Vec<RealTensor>,
}

impl<'a> LossProbe<'a> {
    pub fn new(
        op: &'a Operator,
        base: &ParamSet,
        pairs: &'a [&'a WindowPair],
        draws: &'a [Draw],
        cfg: &'a FlowConfig,
    ) -> Result<Self> {
        if pairs.is_empty() || pairs.len() != draws.len() {
            return Err(Error::usage(format!(
                "LossProbe: {} pairs with {} draws",
                pairs.len(),
                draws.len()
            )));
        }
        let mut probe = Self { op, pairs, draws, cfg, base: Vec::new() };
        probe.base = probe.residuals(base)?;
        Ok(probe)
    }

    fn residuals(&self, params: &ParamSet) -> Result<Vec<RealTensor>> {
        self.pairs
            .par_iter()
            .zip(self.draws.par_iter())
            .map(|(pair, draw)| {
                let (tape, _, pred, target, _) = sample_graph(self.op, params, pair, draw, self.cfg, false)?;
                tape.real(pred).zip_map(&target, "residual", |a, b| a - b)
            })
            .collect()
    }

    pub fn delta(&self, params: &ParamSet) -> Result<f64> {
        let res = self.residuals(params)?;
        let n = self.pairs.len() as f64;
        let mut parts = Vec::with_capacity(res.len());
        for (r, r0) in res.iter().zip(&self.base) {
            let m = r.len() as f64;
            parts.push(
                compensated_sum(r.data().iter().zip(r0.data()).map(|(a, b)| (a - b) * (a + b))) / (m * n),
            );
        }
        let d = compensated_sum(parts);
        if !d.is_finite() {
            return Err(Error::numerical("non-finite loss difference"));
        }
        Ok(d)
    }
}

/// Mean loss and gradient over a batch.
///
/// One `t` (and noise, if any) is drawn per pair in batch order; per-sample
/// graphs run in parallel and are reduced in batch order, so the result is
/// independent of the thread count.
pub fn training_step<R: Rng + ?Sized>(
    op: &Operator,
    params: &ParamSet,
    batch: &[&WindowPair],
    cfg: &FlowConfig,
    rng: &mut R,
) -> Result<(f64, GradientRecord)> {
    if batch.is_empty() {
        return Err(Error::usage("training_step: empty batch"));
    }
    let draws: Vec<Draw> = batch
        .iter()
        .map(|_| Draw::sample(rng, cfg, op.arch.channels, op.arch.horizon))
        .collect();
    let results: Vec<Result<(f64, Option<GradientRecord>)>> = batch
        .par_iter()
        .zip(draws.par_iter())
        .map(|(pair, draw)| sample_loss(op, params, pair, draw, cfg, true))
        .collect();
    let mut total = GradientRecord::zeros_like(params);
    let mut loss = 0.0;
    for r in results {
        let (l, g) = r?;
        loss += l;
        total.add_assign(&g.expect("gradient requested"))?;
    }
    let inv = 1.0 / batch.len() as f64;
    total.scale(inv);
    Ok((loss * inv, total))
}

/// Mean squared error of the model's predictions over `pairs`.
pub fn evaluate_mse(op: &Operator, params: &ParamSet, pairs: &[&WindowPair], cfg: &FlowConfig) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::usage("evaluate_mse: no windows"));
    }
    let errs: Vec<Result<f64>> = pairs
        .par_iter()
        .map(|p| {
            let y = predict_with(op, params, &p.history, cfg)?;
            let d = y.sub(&p.future)?;
            Ok(d.data().iter().map(|v| v * v).sum::<f64>() / d.len() as f64)
        })
        .collect();
    let mut sum = 0.0;
    for e in errs {
        sum += e?;
    }
    Ok(sum / pairs.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mse: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// The operator with its best-validation parameters.
    pub operator: Operator,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_mse: f64,
}

/// Tracks the best validation score and the epochs since it improved.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    last_epoch: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            last_epoch: 0,
        }
    }

    /// Records `val` for `epoch`; returns whether it is a new best.
    pub fn observe(&mut self, val: f64, epoch: usize) -> bool {
        self.last_epoch = epoch;
        if val < self.best {
            self.best = val;
            self.best_epoch = epoch;
            true
        } else {
            false
        }
    }

    /// True once `patience` epochs have passed without improvement. A run
    /// that has not yet produced a finite score keeps going.
    pub fn should_stop(&self) -> bool {
        self.best_epoch > 0 && self.last_epoch - self.best_epoch >= self.patience
    }

    pub fn best(&self) -> (f64, usize) {
        (self.best, self.best_epoch)
    }
}

pub const EPOCH_LOG_HEADER: &str = "epoch,train_loss,val_mse,wall_seconds";

/// Adam over shuffled minibatches with early stopping on validation MSE.
///
/// When `log` is given, a CSV header and one line per epoch are written to it.
pub fn train_loop(
    op: &Operator,
    train: &[WindowPair],
    val: &[WindowPair],
    tcfg: &TrainConfig,
    fcfg: &FlowConfig,
    mut log: Option<&mut dyn Write>,
) -> Result<TrainOutcome> {
    tcfg.validate()?;
    fcfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::data("train_loop: training and validation windows must be non-empty"));
    }
    let val_refs: Vec<&WindowPair> = val.iter().step_by(tcfg.val_stride).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    let mut params = op.params.clone();
    let mut state = AdamState::new(&params);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut stopper = EarlyStopping::new(tcfg.patience);
    let mut best_params = params.clone();
    let mut history = Vec::new();
    let start = Instant::now();
    let io_err = |e| Error::io("<epoch log>", e);
    if let Some(w) = log.as_deref_mut() {
        writeln!(w, "{EPOCH_LOG_HEADER}").map_err(io_err)?;
    }

    for epoch in 1..=tcfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for (b, chunk) in order.chunks(tcfg.batch_size).enumerate() {
            let batch: Vec<&WindowPair> = chunk.iter().map(|&i| &train[i]).collect();
            let (loss, grads) = training_step(op, &params, &batch, fcfg, &mut rng)
                .map_err(|e| e.in_stage("training_step"))?;
            if loss > DIVERGENCE_LOSS || !grads.all_finite() {
                return Err(Error::numerical(format!(
                    "training diverged at epoch {epoch}, batch {b}: loss {loss:e}, gradient norm {:e}",
                    grads.global_norm()
                )));
            }
            adam_step(&mut params, &grads, &mut state, &tcfg.adam)?;
            loss_sum += loss;
            batches += 1;
        }
        let val_mse = evaluate_mse(op, &params, &val_refs, fcfg).map_err(|e| e.in_stage("validation"))?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / batches as f64,
            val_mse,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        if let Some(w) = log.as_deref_mut() {
            writeln!(
                w,
                "{},{},{},{:.3}",
                record.epoch, record.train_loss, record.val_mse, record.wall_seconds
            )
            .map_err(io_err)?;
        }
        history.push(record);
        if stopper.observe(val_mse, epoch) {
            best_params = params.clone();
        } else if stopper.should_stop() {
            break;
        }
    }

    let (best_val_mse, best_epoch) = stopper.best();
    if best_epoch == 0 {
        return Err(Error::numerical("validation MSE never became finite"));
    }
    Ok(TrainOutcome {
        operator: Operator::from_parts(op.hyper, op.arch, best_params, op.seed)?,
        history,
        best_epoch,
        best_val_mse,
    })
}
