//! Central-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::{GradientRecord, ParamSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    pub epsilon: f64,
    /// Number of scalar parameters to check; all of them when larger than the total.
    pub n_samples: usize,
    pub seed: u64,
    /// A sample is flagged as non-differentiable when its one-sided slopes
    /// disagree by more than `kink_rel·max(|fwd|, |bwd|) + kink_abs`.
    pub kink_rel: f64,
    pub kink_abs: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            n_samples: 200,
            seed: 0,
            kink_rel: 0.5,
            kink_abs: 1e-4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub n_checked: usize,
    pub n_flagged: usize,
    /// Parameter name and flat offset of the worst sample.
    pub worst: Option<(String, usize)>,
}

/// Compares `analytic` against central differences of `loss_fn` on randomly
/// sampled scalars of `params`.
///
/// The relative error of one sample is
/// `|analytic − cd| / max(|analytic|, |cd|, 1e-8)`. Samples sitting on a kink
/// (e.g. a TopK selection boundary) are flagged and skipped.
pub fn grad_check<F>(
    loss_fn: F,
    params: &ParamSet,
    analytic: &GradientRecord,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    F: Fn(&ParamSet) -> Result<f64>,
{
    if !(cfg.epsilon > 0.0) {
        return Err(Error::usage("grad_check: epsilon must be positive"));
    }
    if !analytic.is_congruent_with(params) {
        return Err(Error::usage("grad_check: gradients not congruent with parameters"));
    }

    let offsets: Vec<usize> = params
        .tensors()
        .iter()
        .scan(0, |acc, t| {
            let start = *acc;
            *acc += t.flat().len();
            Some(start)
        })
        .collect();
    let total = params.num_scalars();
    let locate = |flat: usize| {
        let t = offsets.partition_point(|&o| o <= flat) - 1;
        (t, flat - offsets[t])
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let order = sample(&mut rng, total, total);

    let f0 = loss_fn(params)?;
    let eps = cfg.epsilon;
    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        n_checked: 0,
        n_flagged: 0,
        worst: None,
    };

    for flat in order.iter() {
        if report.n_checked >= cfg.n_samples {
            break;
        }
        let (t, off) = locate(flat);
        let original = work.tensors()[t].flat()[off];
        work.tensor_mut(t).flat_mut()[off] = original + eps;
        let fp = loss_fn(&work)?;
        work.tensor_mut(t).flat_mut()[off] = original - eps;
        let fm = loss_fn(&work)?;
        work.tensor_mut(t).flat_mut()[off] = original;

        let fwd = (fp - f0) / eps;
        let bwd = (f0 - fm) / eps;
        if (fwd - bwd).abs() > cfg.kink_rel * fwd.abs().max(bwd.abs()) + cfg.kink_abs {
            report.n_flagged += 1;
            continue;
        }
        let cd = (fp - fm) / (2.0 * eps);
        let an = analytic.get(t).flat()[off];
        let rel = (an - cd).abs() / an.abs().max(cd.abs()).max(1e-8);
        report.n_checked += 1;
        if report.worst.is_none() || rel > report.max_relative_error {
            report.max_relative_error = rel;
            report.worst = Some((params.names()[t].clone(), off));
        }
    }
    Ok(report)
}
