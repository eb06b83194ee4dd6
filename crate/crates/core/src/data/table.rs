//! CSV ingestion into an immutable, regularly sampled table.

use std::collections::HashMap;
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime, TimeDelta};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::RealTensor;

pub const DATETIME_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

/// What to do with missing cells and missing timestamps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FillPolicy {
    #[default]
    Reject,
    /// Repeat the previous row's value. Missing timestamps that fall on the
    /// sampling grid are inserted as copies of the preceding row.
    ForwardFill,
}

impl std::str::FromStr for FillPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reject" => Ok(Self::Reject),
            "forward_fill" | "ffill" => Ok(Self::ForwardFill),
            _ => Err(Error::usage(format!("unknown fill policy '{s}' (reject | forward_fill)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesTable {
    timestamps: Vec<NaiveDateTime>,
    values: RealTensor,
    channel_names: Vec<String>,
}

impl SeriesTable {
    pub fn new(timestamps: Vec<NaiveDateTime>, values: RealTensor, channel_names: Vec<String>) -> Result<Self> {
        let (t, c) = values.dims2()?;
        if timestamps.len() != t {
            return Err(Error::data(format!("{} timestamps for {t} value rows", timestamps.len())));
        }
        if channel_names.len() != c {
            return Err(Error::data(format!("{} channel names for {c} value columns", channel_names.len())));
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::data(format!(
                "timestamps not strictly increasing at row {}: {} then {}",
                i + 1,
                timestamps[i],
                timestamps[i + 1]
            )));
        }
        Ok(Self {
            timestamps,
            values,
            channel_names,
        })
    }

    /// A table on a synthetic hourly grid starting at 2000-01-01 00:00:00.
    pub fn from_values(values: RealTensor) -> Result<Self> {
        let (t, c) = values.dims2()?;
        let origin = NaiveDate::from_ymd_opt(2000, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        let timestamps = (0..t).map(|i| origin + TimeDelta::hours(i as i64)).collect();
        let names = (0..c).map(|j| format!("ch{j}")).collect();
        Self::new(timestamps, values, names)
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channel_names.len()
    }

    pub fn timestamps(&self) -> &[NaiveDateTime] {
        &self.timestamps
    }

    pub fn values(&self) -> &RealTensor {
        &self.values
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    /// Rows `start..end` as a new table.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        Ok(Self {
            timestamps: self.timestamps[start..end].to_vec(),
            values: self.values.slice_rows(start, end)?,
            channel_names: self.channel_names.clone(),
        })
    }

    pub fn with_values(&self, values: RealTensor) -> Result<Self> {
        Self::new(self.timestamps.clone(), values, self.channel_names.clone())
    }

    /// Most frequent spacing between consecutive timestamps.
    pub fn sampling_interval(&self) -> Option<TimeDelta> {
        modal_step(&self.timestamps)
    }
}

fn modal_step(ts: &[NaiveDateTime]) -> Option<TimeDelta> {
    let mut counts: HashMap<i64, usize> = HashMap::new();
    for w in ts.windows(2) {
        *counts.entry((w[1] - w[0]).num_milliseconds()).or_default() += 1;
    }
    // ties go to the smaller step so the result does not depend on hash order
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(ms, _)| TimeDelta::milliseconds(ms))
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    NaiveDateTime::parse_from_str(s, DATETIME_FORMAT)
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M"))
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S"))
        .ok()
        .or_else(|| NaiveDate::parse_from_str(s, "%Y-%m-%d").ok().and_then(|d| d.and_hms_opt(0, 0, 0)))
}

fn is_missing(s: &str) -> bool {
    matches!(s.trim().to_ascii_lowercase().as_str(), "" | "na" | "nan" | "null")
}

const MAX_LISTED: usize = 10;

fn list_lines(lines: &[u64]) -> String {
    let shown: Vec<String> = lines.iter().take(MAX_LISTED).map(u64::to_string).collect();
    let more = if lines.len() > MAX_LISTED {
        format!(" (+{} more)", lines.len() - MAX_LISTED)
    } else {
        String::new()
    };
    format!("{}{more}", shown.join(", "))
}

/// Reads a CSV with a header row, one datetime column and numeric channels.
///
/// Channels keep file order. Line numbers in errors are 1-based and count the
/// header as line 1.
pub fn load_csv(path: impl AsRef<Path>, datetime_column: &str, fill: FillPolicy) -> Result<SeriesTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| Error::data(format!("{}: cannot read header: {e}", path.display())))?
        .clone();
    let dt_col = headers
        .iter()
        .position(|h| h == datetime_column)
        .ok_or_else(|| Error::data(format!("{}: no datetime column '{datetime_column}'", path.display())))?;
    let channel_cols: Vec<usize> = (0..headers.len()).filter(|&i| i != dt_col).collect();
    if channel_cols.is_empty() {
        return Err(Error::data(format!("{}: no value columns", path.display())));
    }
    let channel_names: Vec<String> = channel_cols.iter().map(|&i| headers[i].to_string()).collect();
    let c = channel_cols.len();

    let mut timestamps = Vec::new();
    let mut lines = Vec::new();
    let mut cells: Vec<Option<f64>> = Vec::new();
    let mut bad_lines = Vec::new();
    for record in reader.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                bad_lines.push(e.position().map_or(0, |p| p.line()));
                continue;
            }
        };
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != headers.len() {
            bad_lines.push(line);
            continue;
        }
        let Some(ts) = parse_timestamp(&record[dt_col]) else {
            bad_lines.push(line);
            continue;
        };
        let mut row = Vec::with_capacity(c);
        let mut ok = true;
        for &j in &channel_cols {
            let cell = &record[j];
            if is_missing(cell) {
                row.push(None);
            } else if let Ok(v) = cell.parse::<f64>() {
                row.push(Some(v));
            } else {
                ok = false;
                break;
            }
        }
        if !ok {
            bad_lines.push(line);
            continue;
        }
        timestamps.push(ts);
        lines.push(line);
        cells.extend(row);
    }
    if !bad_lines.is_empty() {
        return Err(Error::data(format!(
            "{}: unparseable rows at lines {}",
            path.display(),
            list_lines(&bad_lines)
        )));
    }
    if timestamps.is_empty() {
        return Err(Error::data(format!("{}: no data rows", path.display())));
    }
    if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::data(format!(
            "{}: timestamps not strictly increasing at line {} ({} after {})",
            path.display(),
            lines[i + 1],
            timestamps[i + 1],
            timestamps[i]
        )));
    }

    let step = modal_step(&timestamps);
    let mut out_ts = Vec::with_capacity(timestamps.len());
    let mut out = Vec::with_capacity(cells.len());
    for (r, &ts) in timestamps.iter().enumerate() {
        if let (Some(step), Some(&prev)) = (step, out_ts.last()) {
            let gap: TimeDelta = ts - prev;
            if gap != step {
                let missing = gap.num_milliseconds() / step.num_milliseconds().max(1);
                let on_grid = gap.num_milliseconds() % step.num_milliseconds().max(1) == 0;
                if fill == FillPolicy::Reject || !on_grid {
                    return Err(Error::data(format!(
                        "{}: gap in timestamps before line {} ({} follows {}, expected step {})",
                        path.display(),
                        lines[r],
                        ts,
                        prev,
                        step
                    )));
                }
                for k in 1..missing {
                    out_ts.push(prev + step * k as i32);
                    let last = out[out.len() - c..].to_vec();
                    out.extend(last);
                }
            }
        }
        for (j, cell) in cells[r * c..(r + 1) * c].iter().enumerate() {
            let v = match (cell, fill) {
                (Some(v), _) => *v,
                (None, FillPolicy::ForwardFill) if !out.is_empty() => out[out.len() - c],
                (None, _) => {
                    return Err(Error::data(format!(
                        "{}: gap at line {}, column '{}'",
                        path.display(),
                        lines[r],
                        channel_names[j]
                    )))
                }
            };
            out.push(v);
        }
        out_ts.push(ts);
    }

    let t = out_ts.len();
    SeriesTable::new(out_ts, RealTensor::new(vec![t, c], out)?, channel_names)
}

/// Per-channel z-score statistics fitted on one table and applied to others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Population mean/std per channel; constant channels get std 1.
    pub fn fit(values: &RealTensor) -> Result<Self> {
        let (t, c) = values.dims2()?;
        if t == 0 {
            return Err(Error::data("cannot fit a standardizer on zero rows"));
        }
        let mut mean = vec![0.0; c];
        let mut std = vec![0.0; c];
        for j in 0..c {
            let col = values.column(j);
            let m = col.iter().sum::<f64>() / t as f64;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / t as f64;
            mean[j] = m;
            std[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        Ok(Self { mean, std })
    }

    pub fn identity(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }

    fn check(&self, values: &RealTensor) -> Result<usize> {
        let (_, c) = values.dims2()?;
        if c != self.mean.len() {
            return Err(Error::data(format!("standardizer has {} channels, data has {c}", self.mean.len())));
        }
        Ok(c)
    }

    pub fn transform(&self, values: &RealTensor) -> Result<RealTensor> {
        let c = self.check(values)?;
        let mut out = values.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            let j = i % c;
            *v = (*v - self.mean[j]) / self.std[j];
        }
        Ok(out)
    }

    pub fn inverse(&self, values: &RealTensor) -> Result<RealTensor> {
        let c = self.check(values)?;
        let mut out = values.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            let j = i % c;
            *v = *v * self.std[j] + self.mean[j];
        }
        Ok(out)
    }
}
