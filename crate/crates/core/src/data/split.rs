//! Chronological train/validation/test splits.

use serde::{Deserialize, Serialize};

use super::table::SeriesTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitSpec {
    pub const ETT: SplitSpec = SplitSpec {
        train: 0.6,
        val: 0.2,
        test: 0.2,
    };
    pub const DEFAULT: SplitSpec = SplitSpec {
        train: 0.7,
        val: 0.1,
        test: 0.2,
    };

    /// ETT-family datasets use 0.6/0.2/0.2, everything else 0.7/0.1/0.2.
    pub fn for_dataset(name: &str) -> Self {
        if name.to_ascii_lowercase().starts_with("ett") {
            Self::ETT
        } else {
            Self::DEFAULT
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, f) in [("train", self.train), ("val", self.val), ("test", self.test)] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::usage(format!("split fraction {name}={f} must lie in (0, 1)")));
            }
        }
        let total = self.train + self.val + self.test;
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::usage(format!("split fractions sum to {total}, expected 1")));
        }
        Ok(())
    }

    /// Row boundaries `(floor(train·T), floor((train+val)·T))`.
    pub fn boundaries(&self, t: usize) -> (usize, usize) {
        // the small guard keeps e.g. 0.7·100 from flooring to 69
        let cut = |f: f64| ((f * t as f64) + 1e-9).floor() as usize;
        let a = cut(self.train).min(t);
        let b = cut(self.train + self.val).clamp(a, t);
        (a, b)
    }
}

/// The three contiguous segments of a table.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: SeriesTable,
    pub val: SeriesTable,
    pub test: SeriesTable,
    /// Row index in the source table where each segment starts.
    pub offsets: [usize; 3],
}

/// Splits `table` into ordered, disjoint segments, each at least `min_len` rows.
pub fn chronological_split(table: &SeriesTable, spec: &SplitSpec, min_len: usize) -> Result<Splits> {
    spec.validate()?;
    let t = table.len();
    let (a, b) = spec.boundaries(t);
    for (name, len) in [("train", a), ("val", b - a), ("test", t - b)] {
        if len < min_len.max(1) {
            return Err(Error::data(format!(
                "{name} segment has {len} rows, fewer than the {min_len} needed for one window (T={t})"
            )));
        }
    }
    Ok(Splits {
        train: table.slice(0, a)?,
        val: table.slice(a, b)?,
        test: table.slice(b, t)?,
        offsets: [0, a, b],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RealTensor;
    use proptest::prelude::*;

    fn table(t: usize) -> SeriesTable {
        SeriesTable::from_values(RealTensor::from_fn(&[t, 1], |i| i as f64)).unwrap()
    }

    #[test]
    fn default_fractions() {
        let s = chronological_split(&table(100), &SplitSpec::DEFAULT, 1).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (70, 10, 20));
        assert_eq!(s.offsets, [0, 70, 80]);
    }

    #[test]
    fn ett_boundaries() {
        // ETTh1 has 17420 hourly rows
        let t = 17420;
        assert_eq!(SplitSpec::ETT.boundaries(t), (10452, 13936));
        assert_eq!(SplitSpec::for_dataset("ETTh1"), SplitSpec::ETT);
        assert_eq!(SplitSpec::for_dataset("weather"), SplitSpec::DEFAULT);
    }

    #[test]
    fn short_segment_rejected() {
        let spec = SplitSpec {
            train: 0.98,
            val: 0.01,
            test: 0.01,
        };
        let err = chronological_split(&table(1000), &spec, 192).unwrap_err().to_string();
        assert!(err.contains("val"), "{err}");
    }

    #[test]
    fn invalid_fractions_rejected() {
        let spec = SplitSpec {
            train: 0.5,
            val: 0.2,
            test: 0.2,
        };
        assert!(spec.validate().is_err());
        let spec = SplitSpec {
            train: 1.0,
            val: 0.0,
            test: 0.0,
        };
        assert!(spec.validate().is_err());
    }

    proptest! {
        #[test]
        fn splits_are_ordered_and_cover(t in 30usize..2000, tr in 0.2f64..0.7, va in 0.05f64..0.2) {
            let spec = SplitSpec { train: tr, val: va, test: 1.0 - tr - va };
            let tab = table(t);
            if let Ok(s) = chronological_split(&tab, &spec, 1) {
                prop_assert_eq!(s.train.len() + s.val.len() + s.test.len(), t);
                prop_assert!(s.train.timestamps().last() < s.val.timestamps().first());
                prop_assert!(s.val.timestamps().last() < s.test.timestamps().first());
                prop_assert_eq!(s.val.values().at(0, 0), s.offsets[1] as f64);
                prop_assert_eq!(s.test.values().at(0, 0), s.offsets[2] as f64);
            }
        }
    }
}
