//! Train, early-stop and score one (task, dataset, variant) combination.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::metrics::{mae, mse};
use super::report::MetricReport;
use super::variant::{build_variant, Variant};
use crate::data::{build_task_pairs, decimate, PreparedDataset, TaskSpec, WindowPair};
use crate::error::{Error, ErrorClass, Result};
use crate::flow::{predict, train_loop, FlowConfig, TrainConfig, TrainOutcome};
use crate::operator::{Architecture, Operator, OperatorHyper};

/// Everything besides the task, dataset and variant that shapes a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub hyper: OperatorHyper,
    pub train: TrainConfig,
    pub flow: FlowConfig,
    /// Stride between training windows.
    pub train_stride: usize,
    /// Independent seeds (`seed`, `seed + 1`, …); more than one adds std columns.
    pub n_seeds: usize,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            hyper: OperatorHyper::default(),
            train: TrainConfig::default(),
            flow: FlowConfig::default(),
            train_stride: 1,
            n_seeds: 1,
        }
    }
}

/// Test-set error of one model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub mse: f64,
    pub mae: f64,
    pub n_windows: usize,
}

/// Scores predictions against the windows' futures. Windows carrying a score
/// decimation compare the decimated prediction with the decimated truth.
pub fn score(op: &Operator, flow: &FlowConfig, pairs: &[WindowPair]) -> Result<Score> {
    if pairs.is_empty() {
        return Err(Error::data("no test windows to score"));
    }
    let per: Vec<Result<(f64, f64)>> = pairs
        .par_iter()
        .map(|p| {
            let y = predict(op, &p.history, flow)?;
            let (y, f) = match p.score_decimation {
                Some(d) => (decimate(&y, d.factor, d.phase)?, decimate(&p.future, d.factor, d.phase)?),
                None => (y, p.future.clone()),
            };
            Ok((mse(&y, &f)?, mae(&y, &f)?))
        })
        .collect();
    let (mut se, mut ae) = (0.0, 0.0);
    for r in per {
        let (a, b) = r?;
        se += a;
        ae += b;
    }
    let n = pairs.len();
    Ok(Score {
        mse: se / n as f64,
        mae: ae / n as f64,
        n_windows: n,
    })
}

/// Window pairs for each split; the test split always uses stride 1.
pub struct TaskWindows {
    pub train: Vec<WindowPair>,
    pub val: Vec<WindowPair>,
    pub test: Vec<WindowPair>,
}

impl TaskWindows {
    pub fn build(task: &TaskSpec, data: &PreparedDataset, train_stride: usize) -> Result<Self> {
        task.validate()?;
        Ok(Self {
            train: build_task_pairs(data.train.values(), task, train_stride)?,
            val: build_task_pairs(data.val.values(), task, 1)?,
            test: build_task_pairs(data.test.values(), task, 1)?,
        })
    }
}

/// The architecture a task needs before any variant is applied.
pub fn task_architecture(task: &TaskSpec, channels: usize) -> Architecture {
    Architecture::new(task.history_len, task.horizon, channels)
}

/// The result of [`run_task`]: the report plus the first seed's trained model.
pub struct TaskRun {
    pub report: MetricReport,
    pub outcome: Option<TrainOutcome>,
    /// Flow settings after the variant was applied.
    pub flow: FlowConfig,
}

fn digest(task: &TaskSpec, dataset: &str, variant: Variant, settings: &RunSettings) -> String {
    let json = serde_json::json!({
        "task": task,
        "dataset": dataset,
        "variant": variant,
        "settings": settings,
    });
    let d = Sha256::digest(json.to_string().as_bytes());
    d.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, var.sqrt())
}

/// Trains on the train split with early stopping on val and scores the best
/// parameters on every test window. Divergence produces a failed report.
pub fn run_task(task: &TaskSpec, data: &PreparedDataset, variant: Variant, settings: &RunSettings) -> Result<TaskRun> {
    if settings.n_seeds == 0 || settings.train_stride == 0 {
        return Err(Error::usage("n_seeds and train_stride must be at least 1"));
    }
    let windows = TaskWindows::build(task, data, settings.train_stride)?;
    let base_arch = task_architecture(task, data.channels());
    let mut report = MetricReport {
        task: task.kind,
        dataset: data.name.clone(),
        variant: variant.name().to_string(),
        history_len: base_arch.history_len,
        horizon: task.horizon,
        scored_len: task.scored_len(),
        mse: f64::NAN,
        mae: f64::NAN,
        mse_std: None,
        mae_std: None,
        n_windows: windows.test.len(),
        seed: settings.train.seed,
        n_seeds: settings.n_seeds,
        config_digest: digest(task, &data.name, variant, settings),
        failure: None,
    };

    let mut first = None;
    let mut flow_used = settings.flow;
    let (mut mses, mut maes) = (Vec::new(), Vec::new());
    for i in 0..settings.n_seeds {
        let seed = settings.train.seed + i as u64;
        let (op, flow) = build_variant(variant, settings.hyper, &base_arch, &settings.flow, seed)?;
        flow_used = flow;
        let tcfg = TrainConfig {
            seed,
            ..settings.train.clone()
        };
        let trained = match train_loop(&op, &windows.train, &windows.val, &tcfg, &flow, None) {
            Ok(t) => t,
            Err(e) if e.class() == ErrorClass::Numerical => {
                report.failure = Some(format!("seed {seed}: {e}"));
                return Ok(TaskRun {
                    report,
                    outcome: first,
                    flow: flow_used,
                });
            }
            Err(e) => return Err(e),
        };
        let s = score(&trained.operator, &flow, &windows.test)?;
        mses.push(s.mse);
        maes.push(s.mae);
        if first.is_none() {
            first = Some(trained);
        }
    }
    let (m, ms) = mean_std(&mses);
    let (a, as_) = mean_std(&maes);
    report.mse = m;
    report.mae = a;
    if settings.n_seeds > 1 {
        report.mse_std = Some(ms);
        report.mae_std = Some(as_);
    }
    Ok(TaskRun {
        report,
        outcome: first,
        flow: flow_used,
    })
}
