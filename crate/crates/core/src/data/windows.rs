//! History/future window pairs, decimation and task-specific pair builders.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::RealTensor;

/// Subsampling applied to a prediction before it is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decimation {
    pub factor: usize,
    pub phase: usize,
}

/// One training or evaluation example: history `H` (S×C) and future `F` (L×C).
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPair {
    pub history: RealTensor,
    pub future: RealTensor,
    /// Row of the first history sample in the source series.
    pub start_index: usize,
    /// Row of the first future sample in the source series.
    pub future_start: usize,
    /// Set for cross-resolution pairs: predictions and truth are decimated
    /// this way before scoring.
    pub score_decimation: Option<Decimation>,
}

/// Contiguous pairs at start indices `0, stride, 2·stride, …`.
///
/// Yields `floor((T − S − L)/stride) + 1` pairs; `T < S + L` is an error.
pub fn make_windows(values: &RealTensor, s: usize, l: usize, stride: usize) -> Result<Vec<WindowPair>> {
    if stride == 0 {
        return Err(Error::usage("make_windows: stride must be at least 1"));
    }
    if s == 0 || l == 0 {
        return Err(Error::usage("make_windows: history and horizon lengths must be positive"));
    }
    let (t, _) = values.dims2()?;
    if t < s + l {
        return Err(Error::data(format!("make_windows: series of {t} rows is shorter than S+L = {}", s + l)));
    }
    (0..=t - s - l)
        .step_by(stride)
        .map(|start| {
            Ok(WindowPair {
                history: values.slice_rows(start, start + s)?,
                future: values.slice_rows(start + s, start + s + l)?,
                start_index: start,
                future_start: start + s,
                score_decimation: None,
            })
        })
        .collect()
}

/// Keeps rows `phase, phase + factor, …` of a 1-D or 2-D tensor.
pub fn decimate(x: &RealTensor, factor: usize, phase: usize) -> Result<RealTensor> {
    if factor < 1 {
        return Err(Error::usage("decimate: factor must be at least 1"));
    }
    if phase >= factor {
        return Err(Error::usage(format!("decimate: phase {phase} must be below factor {factor}")));
    }
    let (t, c) = match x.shape() {
        [t] => (*t, 1),
        [t, c] => (*t, *c),
        other => return Err(Error::usage(format!("decimate: expected a 1-D or 2-D tensor, got {other:?}"))),
    };
    let rows: Vec<usize> = (phase..t).step_by(factor).collect();
    let mut data = Vec::with_capacity(rows.len() * c);
    for &r in &rows {
        data.extend_from_slice(&x.data()[r * c..(r + 1) * c]);
    }
    let mut shape = x.shape().to_vec();
    shape[0] = rows.len();
    RealTensor::new(shape, data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskKind {
    /// Conventional forecasting: S history samples → L future samples.
    #[serde(rename = "CFT")]
    Cft,
    /// Super-resolution: a decimated block → the same block at full rate.
    #[serde(rename = "TSSR")]
    Tssr,
    /// Cross-resolution: a decimated history block → the full-rate future.
    #[serde(rename = "CRTL")]
    Crtl,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Cft => "CFT",
            TaskKind::Tssr => "TSSR",
            TaskKind::Crtl => "CRTL",
        })
    }
}

impl std::str::FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "CFT" => Ok(Self::Cft),
            "TSSR" => Ok(Self::Tssr),
            "CRTL" => Ok(Self::Crtl),
            _ => Err(Error::usage(format!("unknown task '{s}' (CFT | TSSR | CRTL)"))),
        }
    }
}

/// Lengths are in model samples: `history_len` is the model input length and
/// `horizon` the model output length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub history_len: usize,
    pub horizon: usize,
    pub decimation_factor: usize,
    pub phase: usize,
}

impl TaskSpec {
    pub fn cft(history_len: usize, horizon: usize) -> Self {
        Self {
            kind: TaskKind::Cft,
            history_len,
            horizon,
            decimation_factor: 1,
            phase: 0,
        }
    }

    /// `lsr_len` decimated samples reconstruct a block of `lsr_len·factor`.
    pub fn tssr(lsr_len: usize, factor: usize) -> Self {
        Self {
            kind: TaskKind::Tssr,
            history_len: lsr_len,
            horizon: lsr_len * factor,
            decimation_factor: factor,
            phase: 0,
        }
    }

    /// `lsr_len` decimated history samples predict the next `lsr_len·factor`
    /// full-rate samples.
    pub fn crtl(lsr_len: usize, factor: usize) -> Self {
        Self {
            kind: TaskKind::Crtl,
            history_len: lsr_len,
            horizon: lsr_len * factor,
            decimation_factor: factor,
            phase: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.history_len == 0 || self.horizon == 0 {
            return Err(Error::usage("task lengths must be positive"));
        }
        match self.kind {
            TaskKind::Cft if self.decimation_factor != 1 => {
                Err(Error::usage("CFT requires decimation_factor = 1"))
            }
            TaskKind::Tssr | TaskKind::Crtl if self.decimation_factor < 2 => Err(Error::usage(format!(
                "{} requires decimation_factor >= 2",
                self.kind
            ))),
            TaskKind::Tssr | TaskKind::Crtl if self.history_len * self.decimation_factor != self.horizon => {
                Err(Error::usage(format!(
                    "{}: history_len·factor = {} must equal horizon {}",
                    self.kind,
                    self.history_len * self.decimation_factor,
                    self.horizon
                )))
            }
            _ if self.phase >= self.decimation_factor => Err(Error::usage(format!(
                "phase {} must be below decimation factor {}",
                self.phase, self.decimation_factor
            ))),
            _ => Ok(()),
        }
    }

    /// Full-rate rows consumed by one pair.
    pub fn span(&self) -> usize {
        match self.kind {
            TaskKind::Cft => self.history_len + self.horizon,
            TaskKind::Tssr => self.horizon,
            TaskKind::Crtl => self.history_len * self.decimation_factor + self.horizon,
        }
    }

    /// Length the model output is scored at.
    pub fn scored_len(&self) -> usize {
        match self.kind {
            TaskKind::Crtl => self.horizon.div_ceil(self.decimation_factor),
            _ => self.horizon,
        }
    }
}

/// Builds the pairs of `task` from a full-rate `T×C` series.
pub fn build_task_pairs(values: &RealTensor, task: &TaskSpec, stride: usize) -> Result<Vec<WindowPair>> {
    task.validate()?;
    let (f, ph) = (task.decimation_factor, task.phase);
    match task.kind {
        TaskKind::Cft => make_windows(values, task.history_len, task.horizon, stride),
        TaskKind::Tssr => {
            if stride == 0 {
                return Err(Error::usage("build_task_pairs: stride must be at least 1"));
            }
            let block = task.horizon;
            let (t, _) = values.dims2()?;
            if t < block {
                return Err(Error::data(format!("TSSR: series of {t} rows is shorter than the {block}-row block")));
            }
            (0..=t - block)
                .step_by(stride)
                .map(|start| {
                    let hsr = values.slice_rows(start, start + block)?;
                    Ok(WindowPair {
                        history: decimate(&hsr, f, ph)?,
                        future: hsr,
                        start_index: start,
                        future_start: start,
                        score_decimation: None,
                    })
                })
                .collect()
        }
        TaskKind::Crtl => {
            let block = task.history_len * f;
            make_windows(values, block, task.horizon, stride)?
                .into_iter()
                .map(|p| {
                    Ok(WindowPair {
                        history: decimate(&p.history, f, ph)?,
                        score_decimation: Some(Decimation { factor: f, phase: ph }),
                        ..p
                    })
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(t: usize, c: usize) -> RealTensor {
        RealTensor::from_fn(&[t, c], |i| (i / c) as f64 + 0.1 * (i % c) as f64)
    }

    #[test]
    fn window_count_and_contiguity() {
        let w = make_windows(&ramp(200, 2), 96, 96, 1).unwrap();
        assert_eq!(w.len(), 9);
        for p in &w {
            assert_eq!(p.future_start, p.start_index + 96);
            assert_eq!(p.future.at(0, 0), p.history.at(95, 0) + 1.0);
        }
    }

    #[test]
    fn exact_fit_gives_one_window() {
        let w = make_windows(&ramp(192, 1), 96, 96, 5).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].start_index, 0);
    }

    #[test]
    fn bad_window_arguments() {
        assert_eq!(make_windows(&ramp(200, 1), 96, 96, 0).unwrap_err().class(), crate::ErrorClass::Usage);
        assert!(make_windows(&ramp(100, 1), 96, 96, 1).is_err());
    }

    #[test]
    fn decimate_examples() {
        let x = ramp(96, 1).reshape(&[96]).unwrap();
        let d = decimate(&x, 4, 0).unwrap();
        assert_eq!(d.len(), 24);
        assert_eq!(d.data()[0], 0.0);
        assert_eq!(d.data()[23], 92.0);
        let d = decimate(&x, 4, 3).unwrap();
        assert_eq!(d.data()[0], 3.0);
        assert_eq!(d.data()[23], 95.0);
        assert_eq!(decimate(&x, 1, 0).unwrap(), x);
        assert!(decimate(&x, 0, 0).is_err());
        assert!(decimate(&x, 4, 4).is_err());
    }

    #[test]
    fn tssr_pairs_share_span() {
        let v = ramp(200, 3);
        let task = TaskSpec::tssr(24, 4);
        let pairs = build_task_pairs(&v, &task, 1).unwrap();
        assert_eq!(pairs.len(), 200 - 96 + 1);
        for p in &pairs {
            assert_eq!(p.history.shape(), [24, 3]);
            assert_eq!(p.future.shape(), [96, 3]);
            assert_eq!(p.future_start, p.start_index);
            assert_eq!(p.history, decimate(&p.future, 4, 0).unwrap());
        }
    }

    #[test]
    fn crtl_pairs_follow_history_block() {
        let v = ramp(300, 2);
        let task = TaskSpec::crtl(24, 4);
        let pairs = build_task_pairs(&v, &task, 7).unwrap();
        assert_eq!(pairs.len(), (300 - 192) / 7 + 1);
        for p in &pairs {
            assert_eq!(p.history.shape(), [24, 2]);
            assert_eq!(p.future.shape(), [96, 2]);
            assert_eq!(p.future_start, p.start_index + 96);
            assert_eq!(p.history.at(0, 0), p.start_index as f64);
            assert_eq!(p.history.at(23, 0), (p.start_index + 92) as f64);
            assert_eq!(p.score_decimation, Some(Decimation { factor: 4, phase: 0 }));
        }
        assert_eq!(task.scored_len(), 24);
    }

    #[test]
    fn task_validation() {
        assert!(TaskSpec::cft(96, 96).validate().is_ok());
        let mut bad = TaskSpec::cft(96, 96);
        bad.decimation_factor = 2;
        assert!(bad.validate().is_err());
        let mut bad = TaskSpec::tssr(24, 4);
        bad.horizon = 90;
        assert!(bad.validate().is_err());
        assert!(TaskSpec::tssr(24, 1).validate().is_err());
        let mut bad = TaskSpec::crtl(24, 4);
        bad.phase = 4;
        assert!(bad.validate().is_err());
        assert_eq!("crtl".parse::<TaskKind>().unwrap(), TaskKind::Crtl);
    }

    proptest! {
        #[test]
        fn window_count_formula(t in 2usize..400, s in 1usize..60, l in 1usize..60, stride in 1usize..20) {
            let v = ramp(t, 1);
            match make_windows(&v, s, l, stride) {
                Ok(w) => {
                    prop_assert!(t >= s + l);
                    prop_assert_eq!(w.len(), (t - s - l) / stride + 1);
                    for (i, p) in w.iter().enumerate() {
                        prop_assert_eq!(p.start_index, i * stride);
                        prop_assert_eq!(p.future_start, p.start_index + s);
                        prop_assert!(p.future_start + l <= t);
                    }
                }
                Err(_) => prop_assert!(t < s + l),
            }
        }

        #[test]
        fn decimate_composes(t in 1usize..300, a in 1usize..6, b in 1usize..6) {
            let x = ramp(t, 2);
            let twice = decimate(&decimate(&x, a, 0).unwrap(), b, 0).unwrap();
            prop_assert_eq!(twice, decimate(&x, a * b, 0).unwrap());
        }

        #[test]
        fn decimate_length(t in 1usize..300, factor in 1usize..8, phase_seed in 0usize..8) {
            let phase = phase_seed % factor;
            let x = ramp(t, 1);
            let d = decimate(&x, factor, phase).unwrap();
            prop_assert_eq!(d.shape()[0], t.saturating_sub(phase).div_ceil(factor));
        }
    }
}
