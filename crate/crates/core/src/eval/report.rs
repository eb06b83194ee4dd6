//! Metric reports and their JSON / CSV renderings.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::TaskKind;
use crate::error::{Error, Result};

/// NaN (a failed run) is written as JSON `null` and read back as NaN.
mod nan_null {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub task: TaskKind,
    pub dataset: String,
    pub variant: String,
    pub history_len: usize,
    pub horizon: usize,
    /// Output length the metrics are computed at.
    pub scored_len: usize,
    #[serde(with = "nan_null")]
    pub mse: f64,
    #[serde(with = "nan_null")]
    pub mae: f64,
    pub mse_std: Option<f64>,
    pub mae_std: Option<f64>,
    pub n_windows: usize,
    pub seed: u64,
    pub n_seeds: usize,
    pub config_digest: String,
    /// Set when training diverged; the metrics are then NaN.
    pub failure: Option<String>,
}

impl PartialEq for MetricReport {
    /// Bitwise on floats so that two failed reports compare equal.
    fn eq(&self, o: &Self) -> bool {
        let opt = |a: Option<f64>, b: Option<f64>| a.map(f64::to_bits) == b.map(f64::to_bits);
        self.task == o.task
            && self.dataset == o.dataset
            && self.variant == o.variant
            && self.history_len == o.history_len
            && self.horizon == o.horizon
            && self.scored_len == o.scored_len
            && self.mse.to_bits() == o.mse.to_bits()
            && self.mae.to_bits() == o.mae.to_bits()
            && opt(self.mse_std, o.mse_std)
            && opt(self.mae_std, o.mae_std)
            && self.n_windows == o.n_windows
            && self.seed == o.seed
            && self.n_seeds == o.n_seeds
            && self.config_digest == o.config_digest
            && self.failure == o.failure
    }
}

impl MetricReport {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }

    pub fn file_stem(&self) -> String {
        format!("{}_{}_{}", self.task, self.dataset, self.variant)
    }

    /// A short human note on how the score was computed.
    pub fn scoring_note(&self) -> String {
        if self.scored_len != self.horizon {
            format!(
                "{}-length prediction scored at {} after factor-{} decimation",
                self.horizon,
                self.scored_len,
                self.horizon / self.scored_len.max(1)
            )
        } else {
            format!("{}-length prediction scored at full rate", self.horizon)
        }
    }
}

pub const SUMMARY_COLUMNS: [&str; 17] = [
    "task",
    "dataset",
    "variant",
    "rank",
    "mse",
    "mae",
    "mse_std",
    "mae_std",
    "n_windows",
    "history_len",
    "horizon",
    "scored_len",
    "seed",
    "n_seeds",
    "failed",
    "config_digest",
    "note",
];

/// 1-based rank by ascending MSE within each (task, dataset) group. Failed
/// runs rank last; ties fall back to the variant name.
pub fn ranks(reports: &[MetricReport]) -> Vec<usize> {
    let mut groups: BTreeMap<(String, String), Vec<usize>> = BTreeMap::new();
    for (i, r) in reports.iter().enumerate() {
        groups.entry((r.task.to_string(), r.dataset.clone())).or_default().push(i);
    }
    let mut out = vec![0; reports.len()];
    for idx in groups.into_values() {
        let mut idx = idx;
        idx.sort_by(|&a, &b| {
            let (ra, rb) = (&reports[a], &reports[b]);
            let key = |r: &MetricReport| if r.mse.is_nan() { f64::INFINITY } else { r.mse };
            key(ra).total_cmp(&key(rb)).then_with(|| ra.variant.cmp(&rb.variant)).then(a.cmp(&b))
        });
        for (rank, i) in idx.into_iter().enumerate() {
            out[i] = rank + 1;
        }
    }
    out
}

/// Shortest text that parses back to the same `f64`; empty for NaN or `None`.
fn num(v: Option<f64>) -> String {
    match v {
        Some(x) if !x.is_nan() => format!("{x}"),
        _ => String::new(),
    }
}

pub fn render_json(report: &MetricReport) -> String {
    serde_json::to_string_pretty(report).expect("reports serialize") + "\n"
}

/// Summary table with [`SUMMARY_COLUMNS`], rows ordered by task, dataset and rank.
pub fn render_csv(reports: &[MetricReport]) -> Result<String> {
    let rank = ranks(reports);
    let mut order: Vec<usize> = (0..reports.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (&reports[a], &reports[b]);
        (ra.task.to_string(), &ra.dataset, rank[a]).cmp(&(rb.task.to_string(), &rb.dataset, rank[b]))
    });
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::data(format!("summary csv: {e}"));
    w.write_record(SUMMARY_COLUMNS).map_err(err)?;
    for i in order {
        let r = &reports[i];
        w.write_record([
            r.task.to_string(),
            r.dataset.clone(),
            r.variant.clone(),
            rank[i].to_string(),
            num(Some(r.mse)),
            num(Some(r.mae)),
            num(r.mse_std),
            num(r.mae_std),
            r.n_windows.to_string(),
            r.history_len.to_string(),
            r.horizon.to_string(),
            r.scored_len.to_string(),
            r.seed.to_string(),
            r.n_seeds.to_string(),
            r.failed().to_string(),
            r.config_digest.clone(),
            r.scoring_note(),
        ])
        .map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::data(format!("summary csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Reads every report JSON in `dir`, sorted by file name.
pub fn read_reports(dir: &Path) -> Result<Vec<MetricReport>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::data(format!("{}: {e}", p.display())))
        })
        .collect()
}

/// Writes `<task>_<dataset>_<variant>.json` for each report into `dir`, then
/// rebuilds `summary.csv` from every report JSON present there, so runs made
/// separately share one table. Returns the summary path.
pub fn emit_reports(reports: &[MetricReport], dir: &Path) -> Result<PathBuf> {
    if reports.is_empty() {
        return Err(Error::usage("emit_reports: no reports"));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for r in reports {
        let path = dir.join(format!("{}.json", r.file_stem()));
        fs::write(&path, render_json(r)).map_err(|e| Error::io(&path, e))?;
    }
    let all = read_reports(dir)?;
    let path = dir.join("summary.csv");
    fs::write(&path, render_csv(&all)?).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
