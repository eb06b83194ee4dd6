//! Dataset ingestion, chronological splits, window pairs and decimation.

mod export;
mod split;
mod synthetic;
mod table;
mod windows;

pub use export::{export_windows, WindowManifest};
pub use synthetic::{sinusoid_mixture, SyntheticSpec};
pub use split::{chronological_split, SplitSpec, Splits};
pub use table::{load_csv, FillPolicy, SeriesTable, Standardizer, DATETIME_FORMAT};
pub use windows::{build_task_pairs, decimate, make_windows, Decimation, TaskKind, TaskSpec, WindowPair};

use crate::error::Result;

/// A split dataset standardized with statistics of its training segment.
#[derive(Debug, Clone)]
pub struct PreparedDataset {
    pub name: String,
    pub scaler: Standardizer,
    pub train: SeriesTable,
    pub val: SeriesTable,
    pub test: SeriesTable,
}

impl PreparedDataset {
    /// Splits `table` and z-scores every segment with train-split statistics.
    /// Each segment must hold at least `min_len` rows.
    pub fn new(name: &str, table: &SeriesTable, spec: &SplitSpec, min_len: usize) -> Result<Self> {
        let splits = chronological_split(table, spec, min_len)?;
        let scaler = Standardizer::fit(splits.train.values())?;
        let z = |t: &SeriesTable| t.with_values(scaler.transform(t.values())?);
        Ok(Self {
            name: name.to_string(),
            train: z(&splits.train)?,
            val: z(&splits.val)?,
            test: z(&splits.test)?,
            scaler,
        })
    }

    pub fn channels(&self) -> usize {
        self.train.channels()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RealTensor;

    #[test]
    fn prepared_train_is_standardized() {
        let v = RealTensor::from_fn(&[200, 2], |i| (i as f64 * 0.37).sin() * 3.0 + 5.0 + (i % 2) as f64);
        let table = SeriesTable::from_values(v).unwrap();
        let d = PreparedDataset::new("synthetic", &table, &SplitSpec::DEFAULT, 10).unwrap();
        for j in 0..2 {
            let col = d.train.values().column(j);
            let m = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / col.len() as f64;
            assert!(m.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
        }
        assert_eq!(d.train.len() + d.val.len() + d.test.len(), 200);
    }
}
