//! Command implementations.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use neutsflow::data::{
    decimate, load_csv, sinusoid_mixture, FillPolicy, PreparedDataset, SeriesTable, Standardizer, SyntheticSpec,
    TaskKind, TaskSpec,
};
use neutsflow::eval::{build_variant, emit_reports, run_task, task_architecture, MetricReport, TaskWindows, Variant};
use neutsflow::flow::{predict, sample_loss, train_loop, Draw, FlowConfig, LossProbe};
use neutsflow::numerics::{grad_check, GradCheckConfig, GradientRecord, ParamSet};
use neutsflow::operator::Checkpoint;
use neutsflow::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::RunConfig;

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const CONFIG_ECHO_FILE: &str = "config.resolved";
pub const REPORTS_DIR: &str = "reports";
pub const GRADCHECK_THRESHOLD: f64 = 1e-4;

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn echo_config(cfg: &RunConfig) -> Result<()> {
    create_dir(&cfg.out_dir)?;
    write(&cfg.out_dir.join(CONFIG_ECHO_FILE), cfg.to_text())
}

fn load_table(cfg: &RunConfig) -> Result<SeriesTable> {
    if cfg.dataset_path.is_empty() {
        return Err(Error::usage("dataset_path is not set (use --config or --set dataset_path=...)"));
    }
    load_csv(&cfg.dataset_path, &cfg.datetime_column, cfg.fill)
}

fn prepare(cfg: &RunConfig, table: &SeriesTable) -> Result<PreparedDataset> {
    PreparedDataset::new(&cfg.name(), table, &cfg.split_spec(), cfg.task_spec().span())
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let table = load_table(cfg)?;
    let data = prepare(cfg, &table)?;
    let task = cfg.task_spec();
    let windows = TaskWindows::build(&task, &data, cfg.train_stride)?;
    let arch = task_architecture(&task, data.channels());
    let (op, flow) = build_variant(cfg.variant, cfg.hyper, &arch, &cfg.flow, cfg.train.seed)?;
    echo_config(cfg)?;
    println!(
        "{}: {} train / {} val windows, {}",
        data.name,
        windows.train.len(),
        windows.val.len(),
        op.summary()
    );

    let log_path = cfg.out_dir.join(TRAIN_LOG_FILE);
    let mut log = BufWriter::new(File::create(&log_path).map_err(|e| Error::io(&log_path, e))?);
    let outcome = train_loop(&op, &windows.train, &windows.val, &cfg.train, &flow, Some(&mut log))?;
    drop(log);

    let mut ck = Checkpoint::new(outcome.operator);
    let m = &mut ck.metadata;
    m.insert("dataset".into(), json!(data.name));
    m.insert("channels".into(), json!(table.channel_names()));
    m.insert("datetime_column".into(), json!(cfg.datetime_column));
    m.insert("fill".into(), json!(cfg.fill));
    m.insert(
        "interval_ms".into(),
        json!(table.sampling_interval().map(|d| d.num_milliseconds())),
    );
    m.insert("scaler".into(), json!({"mean": data.scaler.mean, "std": data.scaler.std}));
    m.insert("task".into(), json!(task));
    m.insert("flow".into(), json!(flow));
    m.insert("variant".into(), json!(cfg.variant));
    m.insert("best_epoch".into(), json!(outcome.best_epoch));
    m.insert("best_val_mse".into(), json!(outcome.best_val_mse));
    let path = cfg.out_dir.join(CHECKPOINT_FILE);
    ck.save(&path)?;
    println!(
        "best epoch {} of {}, val mse {}; checkpoint {}",
        outcome.best_epoch,
        outcome.history.len(),
        outcome.best_val_mse,
        path.display()
    );
    Ok(())
}

fn meta<T: serde::de::DeserializeOwned>(ck: &Checkpoint, key: &str) -> Result<T> {
    let v = ck
        .metadata
        .get(key)
        .ok_or_else(|| Error::data(format!("checkpoint metadata lacks '{key}'")))?;
    serde_json::from_value(v.clone()).map_err(|e| Error::data(format!("checkpoint metadata '{key}': {e}")))
}

pub struct ForecastArgs {
    pub checkpoint: PathBuf,
    pub input: PathBuf,
    pub n_steps: Option<usize>,
}

pub fn forecast(cfg: &RunConfig, args: &ForecastArgs) -> Result<()> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    let task: TaskSpec = meta(&ck, "task")?;
    let mut flow: FlowConfig = meta(&ck, "flow")?;
    if let Some(n) = args.n_steps {
        flow.n_steps = n;
    }
    flow.validate()?;
    let names: Vec<String> = meta(&ck, "channels")?;
    let datetime_column: String = meta(&ck, "datetime_column")?;
    let fill: FillPolicy = meta(&ck, "fill")?;
    let scaler: Value = meta(&ck, "scaler")?;
    let scaler = Standardizer {
        mean: serde_json::from_value(scaler["mean"].clone()).map_err(|e| Error::data(format!("scaler: {e}")))?,
        std: serde_json::from_value(scaler["std"].clone()).map_err(|e| Error::data(format!("scaler: {e}")))?,
    };

    let text = fs::read_to_string(&args.input).map_err(|e| Error::io(&args.input, e))?;
    if text.lines().filter(|l| !l.trim().is_empty()).count() < 2 {
        return Err(Error::usage(format!("{}: empty input", args.input.display())));
    }
    let table = load_csv(&args.input, &datetime_column, fill)?;
    let c = ck.operator.arch.channels;
    if table.channels() != c {
        return Err(Error::data(format!(
            "{}: input has {} channels ({}); the checkpoint expects C = {c} ({})",
            args.input.display(),
            table.channels(),
            table.channel_names().join(", "),
            names.join(", ")
        )));
    }
    let need = match task.kind {
        TaskKind::Cft => task.history_len,
        TaskKind::Tssr | TaskKind::Crtl => task.history_len * task.decimation_factor,
    };
    if table.len() < need {
        return Err(Error::data(format!(
            "{}: {} rows, but a {} window needs {need}",
            args.input.display(),
            table.len(),
            task.kind
        )));
    }
    let window = table.slice(table.len() - need, table.len())?;
    let z = scaler.transform(window.values())?;
    let history = match task.kind {
        TaskKind::Cft => z,
        _ => decimate(&z, task.decimation_factor, task.phase)?,
    };
    let op = &ck.operator;
    let y = predict(op, &history, &flow)?;
    let one_step = predict(op, &history, &FlowConfig { n_steps: 1, ..flow })?;
    let values = scaler.inverse(&y)?;

    let interval_ms: Option<i64> = meta(&ck, "interval_ms")?;
    let step = interval_ms
        .map(chrono::TimeDelta::milliseconds)
        .or_else(|| table.sampling_interval())
        .ok_or_else(|| Error::data("cannot determine the sampling interval"))?;
    let last = *window.timestamps().last().expect("window is non-empty");
    let stamps: Vec<chrono::NaiveDateTime> = match task.kind {
        // reconstruction covers the input block itself
        TaskKind::Tssr => window.timestamps().to_vec(),
        _ => (1..=task.horizon).map(|i| last + step * i as i32).collect(),
    };

    let out = &cfg.out_dir;
    create_dir(out)?;
    let csv_path = out.join("forecast.csv");
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| Error::data(format!("{}: {e}", csv_path.display())))?;
    let csv_err = |e: csv::Error| Error::data(format!("{}: {e}", csv_path.display()));
    let mut header = vec![datetime_column.clone()];
    header.extend(names.iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    for (i, ts) in stamps.iter().enumerate() {
        let mut row = vec![ts.format(neutsflow::data::DATETIME_FORMAT).to_string()];
        row.extend(values.row(i).iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;

    let diff = y.sub(&one_step)?.norm();
    let sidecar = json!({
        "checkpoint": args.checkpoint.display().to_string(),
        "input": args.input.display().to_string(),
        "n_steps": flow.n_steps,
        "rows": stamps.len(),
        "channels": c,
        "diff_norm_vs_one_step": diff,
        "relative_diff_vs_one_step": diff / y.norm().max(f64::MIN_POSITIVE),
    });
    let side_path = out.join("forecast.json");
    write(&side_path, serde_json::to_string_pretty(&sidecar).expect("json") + "\n")?;
    println!(
        "{} rows x {} channels -> {} (n_steps {}, |y - y_1step| = {diff:.6})",
        stamps.len(),
        c,
        csv_path.display(),
        flow.n_steps
    );
    Ok(())
}

fn print_report(r: &MetricReport) {
    match &r.failure {
        Some(f) => println!("{} {} {}: FAILED ({f})", r.task, r.dataset, r.variant),
        None => println!(
            "{} {} {}: mse {:.6} mae {:.6} over {} windows; {}",
            r.task,
            r.dataset,
            r.variant,
            r.mse,
            r.mae,
            r.n_windows,
            r.scoring_note()
        ),
    }
}

fn evaluate(cfg: &RunConfig, variants: &[Variant]) -> Result<()> {
    let table = load_table(cfg)?;
    let data = prepare(cfg, &table)?;
    echo_config(cfg)?;
    let task = cfg.task_spec();
    let settings = cfg.settings();
    let mut reports = Vec::new();
    for &v in variants {
        let run = run_task(&task, &data, v, &settings)?;
        print_report(&run.report);
        reports.push(run.report);
    }
    let summary = emit_reports(&reports, &cfg.out_dir.join(REPORTS_DIR))?;
    println!("summary: {}", summary.display());
    let failed: Vec<&str> = reports.iter().filter(|r| r.failed()).map(|r| r.variant.as_str()).collect();
    if !failed.is_empty() {
        return Err(Error::numerical(format!("training diverged for: {}", failed.join(", "))));
    }
    Ok(())
}

pub fn eval(cfg: &RunConfig) -> Result<()> {
    evaluate(cfg, &[cfg.variant])
}

pub fn ablate(cfg: &RunConfig) -> Result<()> {
    evaluate(cfg, &Variant::ALL)
}

/// Checks the flow-loss gradient of a few training windows. Without a
/// dataset a synthetic sinusoid mixture is used.
pub fn gradcheck(cfg: &RunConfig) -> Result<f64> {
    let task = cfg.task_spec();
    let table = if cfg.dataset_path.is_empty() {
        let spec = SyntheticSpec {
            length: 10 * task.span(),
            seed: cfg.train.seed,
            ..Default::default()
        };
        sinusoid_mixture(&spec)?.0
    } else {
        load_table(cfg)?
    };
    let data = prepare(cfg, &table)?;
    let windows = TaskWindows::build(&task, &data, 1)?;
    let pick = 4.min(windows.train.len());
    let stride = (windows.train.len() / pick).max(1);
    let pairs: Vec<_> = windows.train.iter().step_by(stride).take(pick).collect();
    let arch = task_architecture(&task, data.channels());
    let (op, flow) = build_variant(cfg.variant, cfg.hyper, &arch, &cfg.flow, cfg.train.seed)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    let draws: Vec<Draw> = pairs
        .iter()
        .map(|_| Draw::sample(&mut rng, &flow, arch.channels, arch.horizon))
        .collect();
    let probe = LossProbe::new(&op, &op.params, &pairs, &draws, &flow)?;
    let loss = |p: &ParamSet| probe.delta(p);
    let mut g = GradientRecord::zeros_like(&op.params);
    for (pair, d) in pairs.iter().zip(&draws) {
        let (_, gi) = sample_loss(&op, &op.params, pair, d, &flow, true)?;
        g.add_assign(&gi.expect("gradient requested"))?;
    }
    g.scale(1.0 / pairs.len() as f64);
    let gc = GradCheckConfig {
        epsilon: cfg.gradcheck_epsilon,
        n_samples: cfg.gradcheck_samples,
        seed: cfg.train.seed,
        ..Default::default()
    };
    let r = grad_check(loss, &op.params, &g, &gc)?;
    echo_config(cfg)?;
    println!(
        "max relative gradient error: {:e} ({} checked, {} skipped at kinks, {} parameters)",
        r.max_relative_error,
        r.n_checked,
        r.n_flagged,
        op.num_params()
    );
    if !(r.max_relative_error < GRADCHECK_THRESHOLD) {
        let worst = r.worst.map(|(n, i)| format!(" (worst: {n}[{i}])")).unwrap_or_default();
        return Err(Error::numerical(format!(
            "gradient check failed: {:e} >= {GRADCHECK_THRESHOLD:e}{worst}",
            r.max_relative_error
        )));
    }
    Ok(r.max_relative_error)
}

pub fn ingest(cfg: &RunConfig) -> Result<()> {
    let table = load_table(cfg)?;
    let ts = table.timestamps();
    println!(
        "{}: {} rows x {} channels ({})",
        cfg.dataset_path,
        table.len(),
        table.channels(),
        table.channel_names().join(", ")
    );
    println!(
        "span {} .. {}, interval {}",
        ts[0],
        ts[ts.len() - 1],
        table.sampling_interval().map_or_else(|| "n/a".into(), |d| d.to_string())
    );
    let split = cfg.split_spec();
    let (a, b) = split.boundaries(table.len());
    println!(
        "split {}/{}/{}: train {} rows, val {} rows, test {} rows",
        split.train,
        split.val,
        split.test,
        a,
        b - a,
        table.len() - b
    );
    prepare(cfg, &table)?;
    println!("ok: every split holds a {} window of {} rows", cfg.task, cfg.task_spec().span());
    Ok(())
}
