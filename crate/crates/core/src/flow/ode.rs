//! ODE inference from the history embedding to `t = 1`.

use super::config::{FlowConfig, InferenceVelocity, Integrator, Objective};
use crate::error::{Error, Result};
use crate::numerics::{ParamSet, RealTensor, Tape};
use crate::operator::{Operator, OutputKind};

/// Integrates the learned flow for history `h` (S×C); returns `L×C`.
pub fn integrate(op: &Operator, h: &RealTensor, cfg: &FlowConfig) -> Result<RealTensor> {
    integrate_with(op, &op.params, h, cfg)
}

pub fn integrate_with(op: &Operator, params: &ParamSet, h: &RealTensor, cfg: &FlowConfig) -> Result<RealTensor> {
    cfg.validate()?;
    let cond = op.condition(h)?;
    let mut tape = Tape::new();
    let bound = op.bind(&mut tape, params, false);
    let emb = op.embed_graph(&mut tape, &bound, &cond)?;
    let g0 = tape.real(emb.raw).clone();
    let kind = if cfg.reparameterized {
        OutputKind::Endpoint
    } else {
        OutputKind::Velocity
    };
    let mut eval = |g: &RealTensor, t: f64| -> Result<RealTensor> {
        let gv = tape.constant(g.clone());
        let y = op.output_graph(&mut tape, &bound, &cond, &emb, gv, t, kind)?;
        Ok(tape.real(y).clone())
    };

    let n = cfg.n_steps;
    let dt = 1.0 / n as f64;
    let check = |g: &RealTensor, step: usize| {
        if g.all_finite() {
            Ok(())
        } else {
            Err(Error::numerical(format!("non-finite ODE state after step {step} of {n}")))
        }
    };

    // Source-anchored Euler telescopes: g_j = (1 − j/n)·g_0 + (1/n)·Σ_{i<j} f̂_i,
    // so one step returns the prediction itself.
    if cfg.reparameterized && cfg.integrator == Integrator::Euler && cfg.inference_velocity == InferenceVelocity::SourceAnchored {
        let mut acc = RealTensor::zeros(g0.shape());
        let mut g = g0.clone();
        for j in 0..n {
            let f_hat = eval(&g, j as f64 * dt)?;
            acc = acc.add(&f_hat)?;
            let w = 1.0 - (j + 1) as f64 * dt;
            g = g0.zip_map(&acc, "integrate", |a, s| w * a + s / n as f64)?;
            check(&g, j + 1)?;
        }
        return g.transpose();
    }

    let mut velocity = |g: &RealTensor, t: f64| -> Result<RealTensor> {
        let y = eval(g, t)?;
        if !cfg.reparameterized {
            return Ok(y);
        }
        match cfg.inference_velocity {
            InferenceVelocity::SourceAnchored => y.sub(&g0),
            InferenceVelocity::Bridge => Ok(y.sub(g)?.scale(1.0 / (1.0 - t))),
        }
    };
    let mut g = g0.clone();
    for j in 0..n {
        let t = j as f64 * dt;
        let v = match cfg.integrator {
            Integrator::Euler => velocity(&g, t)?,
            Integrator::Midpoint => {
                let k1 = velocity(&g, t)?;
                let mid = g.add(&k1.scale(0.5 * dt))?;
                velocity(&mid, t + 0.5 * dt)?
            }
        };
        g = g.add(&v.scale(dt))?;
        check(&g, j + 1)?;
    }
    g.transpose()
}

/// Model prediction for `h` under the configured objective.
pub fn predict(op: &Operator, h: &RealTensor, cfg: &FlowConfig) -> Result<RealTensor> {
    predict_with(op, &op.params, h, cfg)
}

pub fn predict_with(op: &Operator, params: &ParamSet, h: &RealTensor, cfg: &FlowConfig) -> Result<RealTensor> {
    match cfg.objective {
        Objective::FlowMatching => integrate_with(op, params, h, cfg),
        Objective::Direct => {
            let h_emb = op.history_embedding_with(params, h)?;
            op.forward_with(params, h, &h_emb, 0.0, OutputKind::Endpoint)
        }
    }
}
