//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Every key has a default, and
//! unknown keys are rejected. `auto` lengths resolve from the task: CFT uses
//! 96 → 96; TSSR and CRTL use 24 low-rate samples, factor 4 and a 96-sample
//! output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use neutsflow::data::{FillPolicy, SplitSpec, TaskKind, TaskSpec};
use neutsflow::eval::{RunSettings, Variant};
use neutsflow::flow::{FlowConfig, InferenceVelocity, Integrator, TrainConfig};
use neutsflow::operator::OperatorHyper;
use neutsflow::{Error, Result};

/// Documented keys in echo order, with their defaults.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("dataset_path", "", "CSV file with a datetime column and numeric channels"),
    ("dataset_name", "auto", "report name; auto = file stem"),
    ("datetime_column", "date", "header of the timestamp column"),
    ("fill", "reject", "reject | forward_fill for missing cells and timestamps"),
    ("split", "auto", "train,val,test fractions; auto = 0.6,0.2,0.2 for ETT*, else 0.7,0.1,0.2"),
    ("task", "CFT", "CFT | TSSR | CRTL"),
    ("history_len", "auto", "model input length"),
    ("horizon", "auto", "model output length"),
    ("decimation_factor", "auto", "1 for CFT, 4 for TSSR and CRTL"),
    ("phase", "0", "decimation phase"),
    ("variant", "full", "full | wo_neural_operator | wo_flow_matching | wo_normalization | wo_spectral_decomposition"),
    ("k", "16", "embedding width"),
    ("top_k", "5", "bins kept by the seasonal decomposition"),
    ("m_max", "32", "retained Fourier modes"),
    ("hidden", "128", "history-embedding MLP width"),
    ("eps_norm", "1e-5", "normalization floor"),
    ("sigma_path", "0", "bridge width scale"),
    ("n_steps", "8", "ODE steps at inference"),
    ("reparameterized", "true", "predict the endpoint instead of the velocity"),
    ("integrator", "euler", "euler | midpoint"),
    ("inference_velocity", "source_anchored", "source_anchored | bridge"),
    ("lr", "0.001", "Adam learning rate"),
    ("beta1", "0.9", "Adam first-moment decay"),
    ("beta2", "0.999", "Adam second-moment decay"),
    ("adam_eps", "1e-8", "Adam denominator floor"),
    ("batch_size", "32", "windows per step"),
    ("max_epochs", "30", "epoch cap"),
    ("patience", "3", "epochs without validation improvement before stopping"),
    ("train_stride", "1", "stride between training windows"),
    ("val_stride", "1", "validation uses every n-th window"),
    ("n_seeds", "1", "independent seeds per evaluation"),
    ("seed", "0", "initialization and sampling seed"),
    ("out_dir", "runs", "output directory"),
    ("gradcheck_samples", "200", "parameters sampled by gradcheck"),
    ("gradcheck_epsilon", "1e-5", "central-difference step"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset_path: String,
    pub dataset_name: Option<String>,
    pub datetime_column: String,
    pub fill: FillPolicy,
    pub split: Option<SplitSpec>,
    pub task: TaskKind,
    pub history_len: Option<usize>,
    pub horizon: Option<usize>,
    pub decimation_factor: Option<usize>,
    pub phase: usize,
    pub variant: Variant,
    pub hyper: OperatorHyper,
    pub flow: FlowConfig,
    pub train: TrainConfig,
    pub train_stride: usize,
    pub n_seeds: usize,
    pub out_dir: PathBuf,
    pub gradcheck_samples: usize,
    pub gradcheck_epsilon: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut cfg = Self {
            dataset_path: String::new(),
            dataset_name: None,
            datetime_column: String::new(),
            fill: FillPolicy::Reject,
            split: None,
            task: TaskKind::Cft,
            history_len: None,
            horizon: None,
            decimation_factor: None,
            phase: 0,
            variant: Variant::Full,
            hyper: OperatorHyper::default(),
            flow: FlowConfig::default(),
            train: TrainConfig::default(),
            train_stride: 1,
            n_seeds: 1,
            out_dir: PathBuf::new(),
            gradcheck_samples: 0,
            gradcheck_epsilon: 0.0,
        };
        for (k, v, _) in KEYS {
            cfg.set(k, v).expect("defaults parse");
        }
        cfg
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::usage(format!("config key '{key}': cannot parse '{value}'")))
}

fn auto<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    if value == "auto" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn show<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "auto".to_string(), |v| v.to_string())
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "dataset_path" => self.dataset_path = v.to_string(),
            "dataset_name" => self.dataset_name = auto(key, v)?,
            "datetime_column" => self.datetime_column = v.to_string(),
            "fill" => self.fill = v.parse()?,
            "split" => {
                self.split = if v == "auto" {
                    None
                } else {
                    let parts: Vec<f64> = v.split(',').map(|p| parse(key, p.trim())).collect::<Result<_>>()?;
                    let [train, val, test] = parts[..] else {
                        return Err(Error::usage(format!("config key 'split': expected three fractions, got '{v}'")));
                    };
                    Some(SplitSpec { train, val, test })
                }
            }
            "task" => self.task = v.parse()?,
            "history_len" => self.history_len = auto(key, v)?,
            "horizon" => self.horizon = auto(key, v)?,
            "decimation_factor" => self.decimation_factor = auto(key, v)?,
            "phase" => self.phase = parse(key, v)?,
            "variant" => self.variant = v.parse()?,
            "k" => self.hyper.k = parse(key, v)?,
            "top_k" => self.hyper.top_k = parse(key, v)?,
            "m_max" => self.hyper.m_max = parse(key, v)?,
            "hidden" => self.hyper.hidden = parse(key, v)?,
            "eps_norm" => self.hyper.eps_norm = parse(key, v)?,
            "sigma_path" => self.flow.sigma_path = parse(key, v)?,
            "n_steps" => self.flow.n_steps = parse(key, v)?,
            "reparameterized" => self.flow.reparameterized = parse(key, v)?,
            "integrator" => {
                self.flow.integrator = match v {
                    "euler" => Integrator::Euler,
                    "midpoint" => Integrator::Midpoint,
                    _ => return Err(Error::usage(format!("config key 'integrator': unknown '{v}' (euler | midpoint)"))),
                }
            }
            "inference_velocity" => {
                self.flow.inference_velocity = match v {
                    "source_anchored" => InferenceVelocity::SourceAnchored,
                    "bridge" => InferenceVelocity::Bridge,
                    _ => {
                        return Err(Error::usage(format!(
                            "config key 'inference_velocity': unknown '{v}' (source_anchored | bridge)"
                        )))
                    }
                }
            }
            "lr" => self.train.adam.lr = parse(key, v)?,
            "beta1" => self.train.adam.beta1 = parse(key, v)?,
            "beta2" => self.train.adam.beta2 = parse(key, v)?,
            "adam_eps" => self.train.adam.eps = parse(key, v)?,
            "batch_size" => self.train.batch_size = parse(key, v)?,
            "max_epochs" => self.train.max_epochs = parse(key, v)?,
            "patience" => self.train.patience = parse(key, v)?,
            "train_stride" => self.train_stride = parse(key, v)?,
            "val_stride" => self.train.val_stride = parse(key, v)?,
            "n_seeds" => self.n_seeds = parse(key, v)?,
            "seed" => self.train.seed = parse(key, v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "gradcheck_samples" => self.gradcheck_samples = parse(key, v)?,
            "gradcheck_epsilon" => self.gradcheck_epsilon = parse(key, v)?,
            _ => return Err(Error::usage(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `origin` names the source in errors.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::usage(format!("{origin}:{}: expected key = value, got '{line}'", i + 1)))?;
            self.set(k.trim(), v).map_err(|e| Error::usage(format!("{origin}:{}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text, &path.display().to_string())?;
        Ok(cfg)
    }

    /// `--set key=value`.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::usage(format!("--set expects key=value, got '{kv}'")))?;
        self.set(k.trim(), v)
    }

    fn value_of(&self, key: &str) -> String {
        let h = &self.hyper;
        let f = &self.flow;
        let a = &self.train.adam;
        match key {
            "dataset_path" => self.dataset_path.clone(),
            "dataset_name" => show(self.dataset_name.clone()),
            "datetime_column" => self.datetime_column.clone(),
            "fill" => match self.fill {
                FillPolicy::Reject => "reject".into(),
                FillPolicy::ForwardFill => "forward_fill".into(),
            },
            "split" => self
                .split
                .map_or_else(|| "auto".into(), |s| format!("{},{},{}", s.train, s.val, s.test)),
            "task" => self.task.to_string(),
            "history_len" => show(self.history_len),
            "horizon" => show(self.horizon),
            "decimation_factor" => show(self.decimation_factor),
            "phase" => self.phase.to_string(),
            "variant" => self.variant.to_string(),
            "k" => h.k.to_string(),
            "top_k" => h.top_k.to_string(),
            "m_max" => h.m_max.to_string(),
            "hidden" => h.hidden.to_string(),
            "eps_norm" => h.eps_norm.to_string(),
            "sigma_path" => f.sigma_path.to_string(),
            "n_steps" => f.n_steps.to_string(),
            "reparameterized" => f.reparameterized.to_string(),
            "integrator" => match f.integrator {
                Integrator::Euler => "euler".into(),
                Integrator::Midpoint => "midpoint".into(),
            },
            "inference_velocity" => match f.inference_velocity {
                InferenceVelocity::SourceAnchored => "source_anchored".into(),
                InferenceVelocity::Bridge => "bridge".into(),
            },
            "lr" => a.lr.to_string(),
            "beta1" => a.beta1.to_string(),
            "beta2" => a.beta2.to_string(),
            "adam_eps" => a.eps.to_string(),
            "batch_size" => self.train.batch_size.to_string(),
            "max_epochs" => self.train.max_epochs.to_string(),
            "patience" => self.train.patience.to_string(),
            "train_stride" => self.train_stride.to_string(),
            "val_stride" => self.train.val_stride.to_string(),
            "n_seeds" => self.n_seeds.to_string(),
            "seed" => self.train.seed.to_string(),
            "out_dir" => self.out_dir.display().to_string(),
            "gradcheck_samples" => self.gradcheck_samples.to_string(),
            "gradcheck_epsilon" => self.gradcheck_epsilon.to_string(),
            _ => unreachable!("every key in KEYS is rendered"),
        }
    }

    /// Fills every `auto` value from the dataset path and task.
    pub fn resolve(&mut self) -> Result<()> {
        if self.dataset_name.is_none() && !self.dataset_path.is_empty() {
            let stem = Path::new(&self.dataset_path).file_stem().map(|s| s.to_string_lossy().into_owned());
            self.dataset_name = stem;
        }
        let task = self.task_spec();
        task.validate()?;
        self.history_len = Some(task.history_len);
        self.horizon = Some(task.horizon);
        self.decimation_factor = Some(task.decimation_factor);
        if self.split.is_none() && self.dataset_name.is_some() {
            self.split = Some(SplitSpec::for_dataset(&self.name()));
        }
        if let Some(s) = &self.split {
            s.validate()?;
        }
        self.settings().train.validate()?;
        self.flow.validate()?;
        if self.n_seeds == 0 || self.train_stride == 0 {
            return Err(Error::usage("n_seeds and train_stride must be at least 1"));
        }
        Ok(())
    }

    pub fn name(&self) -> String {
        self.dataset_name.clone().unwrap_or_else(|| "synthetic".into())
    }

    pub fn task_spec(&self) -> TaskSpec {
        let phase = self.phase;
        match self.task {
            TaskKind::Cft => TaskSpec {
                kind: TaskKind::Cft,
                history_len: self.history_len.unwrap_or(96),
                horizon: self.horizon.unwrap_or(96),
                decimation_factor: self.decimation_factor.unwrap_or(1),
                phase,
            },
            kind => {
                let factor = self.decimation_factor.unwrap_or(4);
                let s = self.history_len.unwrap_or(24);
                TaskSpec {
                    kind,
                    history_len: s,
                    horizon: self.horizon.unwrap_or(s * factor),
                    decimation_factor: factor,
                    phase,
                }
            }
        }
    }

    pub fn split_spec(&self) -> SplitSpec {
        self.split.unwrap_or_else(|| SplitSpec::for_dataset(&self.name()))
    }

    pub fn settings(&self) -> RunSettings {
        RunSettings {
            hyper: self.hyper,
            train: self.train.clone(),
            flow: self.flow,
            train_stride: self.train_stride,
            n_seeds: self.n_seeds,
        }
    }

    /// Every key with its current value, in documented order. Parsing this
    /// text reproduces the configuration.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, _, doc) in KEYS {
            let _ = writeln!(out, "# {doc}");
            let _ = writeln!(out, "{k} = {}", self.value_of(k));
        }
        out
    }
}
